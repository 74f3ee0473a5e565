//! Ridge probes of embeddings against economic outcomes.
//!
//! The intercept is never penalized: features and target are centered, the
//! slope is solved on centered data, and the intercept restores the means. A
//! window whose features carry no variation therefore predicts the window
//! mean of the target, which is the moving-average benchmark.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{correlation, paired_mean_t, williams_t, CorrTriple, WilliamsTest};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: Range<usize>) -> Matrix {
        Matrix {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Rows in the order given by `order`.
    pub fn permute_rows(&self, order: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: order.len(),
            cols: self.cols,
            data,
        }
    }

    /// Each row scaled to unit Euclidean norm; zero rows are an error.
    pub fn l2_normalized(&self) -> Result<Matrix> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let norm = self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid(format!("row {i} has zero norm")));
            }
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j) / norm);
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A` (k×k, row-major).
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Result<Vec<f64>> {
    let scale = (0..k).map(|i| a[i * k + i].abs()).fold(0.0, f64::max);
    let tol = scale * 1e-13;
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s = a[i * k + j] - dot(&l[i * k..i * k + j], &l[j * k..j * k + j]);
            if i == j {
                if !(s > tol) {
                    return Err(Error::Singular(format!("pivot {i} of {k} is not positive")));
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        z[i] = (b[i] - dot(&l[i * k..i * k + i], &z[..i])) / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = ((i + 1)..k).map(|j| l[j * k + i] * x[j]).sum();
        x[i] = (z[i] - s) / l[i * k + i];
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.weights, x)
    }
}

/// Minimizes ||y - b - Xw||² + λ||w||² with b unpenalized. Uses the d×d
/// primal system when d ≤ n and the n×n dual system otherwise.
pub fn ridge_fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    let (n, d) = (x.rows, x.cols);
    if n == 0 {
        return Err(Error::Empty("ridge regression needs at least one row".into()));
    }
    if y.len() != n {
        return Err(Error::invalid(format!("{} targets for {n} rows", y.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda {lambda} must be finite and >= 0")));
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in ridge inputs"));
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let x_mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / nf).collect();
    let mut xc = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            xc.set(i, j, x.get(i, j) - x_mean[j]);
        }
    }
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // No feature variation: the minimum-norm slope is zero for any lambda.
    let weights = if d == 0 || xc.data.iter().all(|v| *v == 0.0) {
        vec![0.0; d]
    } else if d <= n {
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for i in 0..n {
            let r = xc.row(i);
            for p in 0..d {
                b[p] += r[p] * yc[i];
                for q in 0..=p {
                    a[p * d + q] += r[p] * r[q];
                }
            }
        }
        for p in 0..d {
            for q in 0..p {
                a[q * d + p] = a[p * d + q];
            }
            a[p * d + p] += lambda;
        }
        cholesky_solve(&a, &b, d)?
    } else {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..=i {
                let v = dot(xc.row(i), xc.row(k));
                g[i * n + k] = v;
                g[k * n + i] = v;
            }
            g[i * n + i] += lambda;
        }
        let alpha = cholesky_solve(&g, &yc, n)?;
        (0..d).map(|j| (0..n).map(|i| xc.get(i, j) * alpha[i]).sum()).collect()
    };
    let intercept = y_mean - dot(&x_mean, &weights);
    Ok(RidgeFit { intercept, weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scheme {
    Rolling { window: usize },
    Expanding { folds: usize, gap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Scale each embedding row to unit norm before fitting.
    #[serde(default)]
    pub l2_normalize: bool,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        match self.scheme {
            Scheme::Rolling { window } if window < 2 => Err(Error::Config("rolling window must be at least 2".into())),
            Scheme::Expanding { folds, .. } if folds < 2 => Err(Error::Config("expanding scheme needs at least 2 folds".into())),
            _ => Ok(()),
        }
    }
}

pub const EXPANDING_GAP_NOTE: &str = "Expanding scheme: each test fold immediately follows its training folds (train on folds 1..k, test on fold k+1); the configured one-fold gap is recorded but not applied.";

/// Predictions aligned to the targets, with the training rows used for each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemePredictions {
    pub predictions: Vec<Option<f64>>,
    pub training: Vec<Option<Range<usize>>>,
    pub fold_bounds: Vec<Range<usize>>,
    pub notes: Vec<String>,
}

impl SchemePredictions {
    pub fn n_predicted(&self) -> usize {
        self.predictions.iter().filter(|p| p.is_some()).count()
    }
}

fn check_aligned(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows != y.len() {
        return Err(Error::invalid(format!("{} embedding rows for {} targets", x.rows, y.len())));
    }
    Ok(())
}

pub fn rolling_predict(x: &Matrix, y: &[f64], window: usize, lambda: f64) -> Result<SchemePredictions> {
    check_aligned(x, y)?;
    let n = y.len();
    if window < 2 || n <= window {
        return Err(Error::invalid(format!("rolling window {window} needs more than {window} periods, got {n}")));
    }
    let mut out = SchemePredictions {
        predictions: vec![None; n],
        training: vec![None; n],
        fold_bounds: Vec::new(),
        notes: Vec::new(),
    };
    for t in window..n {
        let train = t - window..t;
        let fit = ridge_fit(&x.slice_rows(train.clone()), &y[train.clone()], lambda)?;
        out.predictions[t] = Some(fit.predict(x.row(t)));
        out.training[t] = Some(train);
    }
    Ok(out)
}

/// Contiguous folds in time order; the first `n % folds` folds get one extra row.
pub fn fold_bounds(n: usize, folds: usize) -> Vec<Range<usize>> {
    let (base, extra) = (n / folds, n % folds);
    let mut start = 0;
    (0..folds)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub fn expanding_predict(x: &Matrix, y: &[f64], folds: usize, lambda: f64) -> Result<SchemePredictions> {
    check_aligned(x, y)?;
    let n = y.len();
    if folds < 2 || n < 2 * folds {
        return Err(Error::invalid(format!("{folds} folds need at least {} periods, got {n}", 2 * folds)));
    }
    let bounds = fold_bounds(n, folds);
    let mut out = SchemePredictions {
        predictions: vec![None; n],
        training: vec![None; n],
        fold_bounds: bounds.clone(),
        notes: vec![EXPANDING_GAP_NOTE.to_string()],
    };
    log::info!("{EXPANDING_GAP_NOTE}");
    for k in 1..folds {
        let train = 0..bounds[k].start;
        let fit = ridge_fit(&x.slice_rows(train.clone()), &y[train.clone()], lambda)?;
        for t in bounds[k].clone() {
            out.predictions[t] = Some(fit.predict(x.row(t)));
            out.training[t] = Some(train.clone());
        }
    }
    Ok(out)
}

pub fn predict_with(x: &Matrix, y: &[f64], config: &ProbeConfig) -> Result<SchemePredictions> {
    config.validate()?;
    let normalized;
    let x = if config.l2_normalize {
        normalized = x.l2_normalized()?;
        &normalized
    } else {
        x
    };
    match config.scheme {
        Scheme::Rolling { window } => rolling_predict(x, y, window, config.lambda),
        Scheme::Expanding { folds, .. } => expanding_predict(x, y, folds, config.lambda),
    }
}

/// Mean of the previous `window` targets, aligned to `y`.
pub fn sma_benchmark(y: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 || y.len() <= window {
        return Err(Error::invalid(format!("moving average over {window} needs more than {window} periods")));
    }
    let mut out = vec![None; y.len()];
    for t in window..y.len() {
        out[t] = Some(y[t - window..t].iter().sum::<f64>() / window as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placebos {
    pub shuffled: Matrix,
    pub permutation: Vec<usize>,
    pub random: Matrix,
}

/// Row-shuffled copy of `x` and a same-shape standard normal matrix, both
/// determined by `seed`. Targets are left in place.
pub fn make_placebos(x: &Matrix, seed: u64) -> Result<Placebos> {
    if x.rows == 0 || x.cols == 0 {
        return Err(Error::Empty("placebo source matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..x.rows).collect();
    permutation.shuffle(&mut rng);
    let mut normal_rng = ChaCha8Rng::seed_from_u64(seed);
    normal_rng.set_stream(1);
    let data = (0..x.rows * x.cols).map(|_| StandardNormal.sample(&mut normal_rng)).collect();
    Ok(Placebos {
        shuffled: x.permute_rows(&permutation),
        permutation,
        random: Matrix {
            rows: x.rows,
            cols: x.cols,
            data,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub cosines: Vec<f64>,
    pub mean: f64,
    /// t statistic of the cosines against zero.
    pub paired_t: Option<f64>,
}

pub fn cosine_report(a: &Matrix, b: &Matrix) -> Result<CosineReport> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::invalid("cosine report needs matrices of equal shape"));
    }
    if a.rows == 0 {
        return Err(Error::Empty("cosine report".into()));
    }
    let cosines = (0..a.rows)
        .map(|i| {
            let (ra, rb) = (a.row(i), b.row(i));
            let (na, nb) = (dot(ra, ra).sqrt(), dot(rb, rb).sqrt());
            if na == 0.0 || nb == 0.0 {
                return Err(Error::invalid(format!("row {i} has zero norm")));
            }
            Ok(dot(ra, rb) / (na * nb))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
    Ok(CosineReport {
        paired_t: paired_mean_t(&cosines),
        cosines,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub predictions: Vec<Option<f64>>,
    pub benchmark: Vec<Option<f64>>,
    /// Indices where both the probe and the benchmark predict.
    pub common: Vec<usize>,
    pub corr_model: Option<f64>,
    pub corr_benchmark: Option<f64>,
    pub corr_model_benchmark: Option<f64>,
    pub williams: Option<WilliamsTest>,
    pub n_predicted: usize,
    pub notes: Vec<String>,
}

pub fn probe_report(x: &Matrix, y: &[f64], config: &ProbeConfig, benchmark_window: usize) -> Result<ProbeResult> {
    let scheme = predict_with(x, y, config)?;
    let benchmark = sma_benchmark(y, benchmark_window)?;
    let common: Vec<usize> = (0..y.len())
        .filter(|&t| scheme.predictions[t].is_some() && benchmark[t].is_some())
        .collect();
    if common.is_empty() {
        return Err(Error::Empty("no period has both probe and benchmark predictions".into()));
    }
    let actual: Vec<f64> = common.iter().map(|&t| y[t]).collect();
    let model: Vec<f64> = common.iter().map(|&t| scheme.predictions[t].expect("common")).collect();
    let bench: Vec<f64> = common.iter().map(|&t| benchmark[t].expect("common")).collect();
    let corr_model = correlation(&actual, &model);
    let corr_benchmark = correlation(&actual, &bench);
    let corr_model_benchmark = if model == bench { Some(1.0) } else { correlation(&model, &bench) };
    let williams = match (corr_model, corr_benchmark, corr_model_benchmark) {
        (Some(r12), Some(r13), Some(r23)) => williams_t(&CorrTriple { r12, r13, r23, n: common.len() }),
        _ => None,
    };
    Ok(ProbeResult {
        n_predicted: common.len(),
        predictions: scheme.predictions,
        benchmark,
        common,
        corr_model,
        corr_benchmark,
        corr_model_benchmark,
        williams,
        notes: scheme.notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_rows(&v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_line() {
        let fit = ridge_fit(&col(&[1.0, 2.0, 3.0]), &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_lambda_matches_closed_form() {
        let fit = ridge_fit(&col(&[1.0, 2.0, 3.0]), &[1.0, 2.0, 3.0], 0.01).unwrap();
        assert!((fit.weights[0] - 0.995_024_875_621_890_55).abs() < 1e-14);
        assert!((fit.intercept - 0.009_950_248_756_218_905_5).abs() < 1e-14);
    }

    #[test]
    fn zero_features_give_the_mean() {
        let x = Matrix::zeros(4, 3);
        for lambda in [0.0, 0.01] {
            let fit = ridge_fit(&x, &[1.0, 2.0, 4.0, 9.0], lambda).unwrap();
            assert_eq!(fit.weights, vec![0.0; 3]);
            assert_eq!(fit.intercept, 4.0);
        }
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(ridge_fit(&x, &[1.0, 2.0, 3.0], 0.0), Err(Error::Singular(_))));
        assert!(ridge_fit(&x, &[1.0, 2.0, 3.0], 0.1).is_ok());
    }

    #[test]
    fn dual_path_matches_primal_limit() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64 - 2.0).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = [0.5, -1.0, 2.0, 0.25];
        let fit = ridge_fit(&x, &y, 0.5).unwrap();
        // Stationarity of the penalized objective: X_cᵀ(y_c - X_c w) = λ w.
        let n = 4.0;
        let ym = y.iter().sum::<f64>() / n;
        let xm: Vec<f64> = (0..6).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        for j in 0..6 {
            let g: f64 = (0..4)
                .map(|i| {
                    let xc: Vec<f64> = rows[i].iter().zip(&xm).map(|(a, m)| a - m).collect();
                    (rows[i][j] - xm[j]) * (y[i] - ym - dot(&xc, &fit.weights))
                })
                .sum();
            assert!((g - 0.5 * fit.weights[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn rolling_window_means() {
        let p = rolling_predict(&Matrix::zeros(4, 2), &[1.0, 2.0, 3.0, 4.0], 2, 0.01).unwrap();
        assert_eq!(p.predictions, vec![None, None, Some(1.5), Some(2.5)]);
        assert_eq!(p.training[3], Some(1..3));
        assert_eq!(sma_benchmark(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), p.predictions);
        assert!(rolling_predict(&Matrix::zeros(2, 1), &[1.0, 2.0], 2, 0.0).is_err());
    }

    #[test]
    fn fold_partition() {
        let sizes: Vec<usize> = fold_bounds(25, 10).iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 3, 3, 2, 2, 2, 2, 2]);
        let p = expanding_predict(&col(&(0..4).map(f64::from).collect::<Vec<_>>()), &[1.0, 2.0, 3.0, 4.0], 2, 0.0).unwrap();
        assert_eq!(p.fold_bounds, vec![0..2, 2..4]);
        assert_eq!(p.training[2], Some(0..2));
        assert!((p.predictions[3].unwrap() - 4.0).abs() < 1e-12);
        assert!(expanding_predict(&Matrix::zeros(5, 1), &[0.0; 5], 3, 0.0).is_err());
    }

    #[test]
    fn cosines() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = cosine_report(&a, &b).unwrap();
        assert!((r.cosines[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(r.cosines[1], 0.0);
        assert!(cosine_report(&a, &a).unwrap().cosines.iter().all(|c| (c - 1.0).abs() < 1e-15));
        assert!(cosine_report(&a, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn placebos_are_seeded() {
        let x = Matrix::from_rows(&(0..30).map(|i| vec![i as f64, -(i as f64)]).collect::<Vec<_>>()).unwrap();
        let a = make_placebos(&x, 7).unwrap();
        assert_eq!(a, make_placebos(&x, 7).unwrap());
        assert_ne!(a.permutation, make_placebos(&x, 8).unwrap().permutation);
        let mut sorted = a.permutation.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn identical_to_benchmark_gives_zero_t() {
        let y: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64 + i as f64).collect();
        let cfg = ProbeConfig {
            lambda: 0.01,
            scheme: Scheme::Rolling { window: 3 },
            seed: 0,
            l2_normalize: false,
        };
        let r = probe_report(&Matrix::zeros(12, 4), &y, &cfg, 3).unwrap();
        assert_eq!(r.n_predicted, 9);
        assert_eq!(r.williams.unwrap().t, 0.0);
    }
}
