//! Correlations, Williams's test for dependent correlations, paired mean
//! t-tests and the pre/post-cutoff two-proportion power analysis.
//!
//! Undefined statistics (constant inputs, degenerate denominators) are
//! reported as `None` rather than as NaN or zero.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{Error, Result};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Pearson correlation. `None` for mismatched or short (< 3) inputs and for
/// constant series.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlations among an outcome (1) and two predictors (2, 3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrTriple {
    /// corr(actual, model)
    pub r12: f64,
    /// corr(actual, benchmark)
    pub r13: f64,
    /// corr(model, benchmark)
    pub r23: f64,
    pub n: usize,
}

impl CorrTriple {
    /// Determinant of the implied 3x3 correlation matrix.
    pub fn determinant(&self) -> f64 {
        let CorrTriple { r12, r13, r23, .. } = *self;
        1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilliamsTest {
    pub t: f64,
    pub df: usize,
    /// Two-sided p-value from Student's t with `df` degrees of freedom.
    pub p_two_sided: f64,
}

/// Williams's t for H0: corr(1,2) = corr(1,3), with df = n - 3:
///
/// t = (r12 - r13) * sqrt((n-1)(1+r23) / (2K(n-1)/(n-3) + rbar^2 (1-r23)^3))
///
/// where K = 1 - r12^2 - r13^2 - r23^2 + 2 r12 r13 r23 and rbar = (r12+r13)/2.
pub fn williams_t(triple: &CorrTriple) -> Option<WilliamsTest> {
    let CorrTriple { r12, r13, r23, n } = *triple;
    if n < 4 || [r12, r13, r23].iter().any(|r| !r.is_finite() || r.abs() > 1.0) {
        return None;
    }
    let k = triple.determinant();
    if k < -1e-12 {
        return None;
    }
    let df = n - 3;
    let t = if r12 == r13 {
        0.0
    } else {
        let nf = n as f64;
        let rbar = 0.5 * (r12 + r13);
        let denom = 2.0 * k.max(0.0) * (nf - 1.0) / (nf - 3.0) + rbar * rbar * (1.0 - r23).powi(3);
        if !(denom > 0.0) {
            return None;
        }
        (r12 - r13) * ((nf - 1.0) * (1.0 + r23) / denom).sqrt()
    };
    let p_two_sided = StudentsT::new(0.0, 1.0, df as f64)
        .map(|dist| 2.0 * (1.0 - dist.cdf(t.abs())))
        .unwrap_or(f64::NAN);
    Some(WilliamsTest { t, df, p_two_sided })
}

/// One-sample t statistic of paired differences against a zero mean.
pub fn paired_mean_t(diffs: &[f64]) -> Option<f64> {
    if diffs.len() < 2 || diffs.iter().any(|d| !d.is_finite()) {
        return None;
    }
    if diffs.iter().all(|&d| d == diffs[0]) {
        return None;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return None;
    }
    Some(mean / (var.sqrt() / n.sqrt()))
}

/// erf(z) for z >= 0 by the all-positive series
/// erf(z) = 2/sqrt(pi) * exp(-z^2) * sum_n z^(2n+1) 2^n / (1*3*...*(2n+1)).
fn erf_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * z2 / (2.0 * k + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    2.0 * FRAC_1_SQRT_PI * (-z2).exp() * sum
}

/// erfc(z) for z >= 3 by modified Lentz evaluation of
/// erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))).
fn erfc_continued_fraction(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for i in 1..500 {
        let a = i as f64 * 0.5;
        d = z + a * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = z + a / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI * (-z * z).exp() / f
}

fn erfc(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < 0.0 {
        2.0 - erfc(-z)
    } else if z < 3.0 {
        1.0 - erf_series(z)
    } else {
        erfc_continued_fraction(z)
    }
}

/// Standard normal CDF. Absolute error below 1e-15 over the real line; the
/// lower tail keeps full relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal quantile: Acklam's rational approximation refined by two
/// Halley steps against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let mut x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Inputs to the one-sided pre/post accuracy-gap power calculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    /// True accuracy gap p_pre - p_post.
    pub delta: f64,
    pub p_post: f64,
    pub n_post: usize,
    pub alpha: f64,
}

impl PowerSpec {
    fn validate(&self) -> Result<()> {
        check_common(self.p_post, self.n_post, self.alpha)?;
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        Ok(())
    }
}

fn check_common(p_post: f64, n_post: usize, alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_post) {
        return Err(Error::invalid(format!("p_post {p_post} outside [0, 1]")));
    }
    if n_post == 0 {
        return Err(Error::invalid("n_post must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Standard error of the gap, keeping only the post-cutoff term (the
/// pre-cutoff sample is assumed much larger).
pub fn gap_standard_error(p_post: f64, n_post: usize) -> f64 {
    (p_post * (1.0 - p_post) / n_post as f64).sqrt()
}

/// Power = Phi(delta / SE - z_{1-alpha}).
///
/// With p_post in {0, 1} the standard error vanishes; power is then 1 for a
/// positive gap and alpha otherwise.
pub fn power_two_prop(spec: &PowerSpec) -> Result<f64> {
    spec.validate()?;
    let se = gap_standard_error(spec.p_post, spec.n_post);
    if se == 0.0 {
        return Ok(if spec.delta > 0.0 { 1.0 } else { spec.alpha });
    }
    if spec.delta == 0.0 {
        return Ok(spec.alpha);
    }
    let z_crit = -normal_quantile(spec.alpha);
    Ok(normal_cdf(spec.delta / se - z_crit))
}

/// Smallest gap detected with probability `target_power`:
/// SE * (z_{1-alpha} + z_{power}).
pub fn min_detectable_gap(n_post: usize, p_post: f64, alpha: f64, target_power: f64) -> Result<f64> {
    check_common(p_post, n_post, alpha)?;
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(Error::invalid(format!("target power {target_power} outside (0, 1)")));
    }
    let se = gap_standard_error(p_post, n_post);
    if se == 0.0 {
        return Err(Error::invalid("p_post of 0 or 1 gives a degenerate standard error"));
    }
    Ok(se * (-normal_quantile(alpha) + normal_quantile(target_power)))
}

/// One-sided exact binomial p-value P(X >= successes) under success rate `p0`.
pub fn binomial_upper_p(successes: u64, trials: u64, p0: f64) -> Result<f64> {
    if successes > trials {
        return Err(Error::invalid("more successes than trials"));
    }
    if successes == 0 {
        return Ok(1.0);
    }
    let dist = Binomial::new(p0, trials).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(dist.sf(successes - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((correlation(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((correlation(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let r = correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-12);
        assert_eq!(correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(correlation(&[1.0, 2.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn williams_fixture_and_symmetry() {
        let tri = CorrTriple { r12: 0.9, r13: 0.3, r23: 0.5, n: 100 };
        let w = williams_t(&tri).unwrap();
        assert!((w.t - 13.578_571_353_423_01).abs() < 1e-9, "{}", w.t);
        assert_eq!(w.df, 97);
        assert!(w.p_two_sided < 1e-10);
        let swapped = williams_t(&CorrTriple { r12: 0.3, r13: 0.9, ..tri }).unwrap();
        assert!((swapped.t + w.t).abs() < 1e-12);
        let equal = williams_t(&CorrTriple { r12: 0.4, r13: 0.4, r23: 0.2, n: 30 }).unwrap();
        assert_eq!(equal.t, 0.0);
        let boundary = williams_t(&CorrTriple { r12: 0.5, r13: 0.1, r23: 0.2, n: 4 }).unwrap();
        assert_eq!(boundary.df, 1);
        assert!(boundary.t.is_finite());
        assert!(williams_t(&CorrTriple { r12: 0.99, r13: -0.99, r23: 0.99, n: 50 }).is_none());
    }

    #[test]
    fn paired_t_examples() {
        assert_eq!(paired_mean_t(&[1.0, -1.0]), Some(0.0));
        assert_eq!(paired_mean_t(&[0.1, 0.1, 0.1]), None);
        let t = paired_mean_t(&[1.0, 2.0, 3.0]).unwrap();
        assert!((t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(paired_mean_t(&[1.0]), None);
    }

    #[test]
    fn normal_tails() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-20.0) / 2.753_624_118_606_233_7e-89 - 1.0).abs() < 1e-12);
        assert_eq!(normal_cdf(40.0), 1.0);
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!(normal_quantile(0.0).is_infinite());
    }

    #[test]
    fn power_examples() {
        let base = PowerSpec { delta: 0.0, p_post: 0.5, n_post: 17, alpha: 0.05 };
        assert_eq!(power_two_prop(&base).unwrap(), 0.05);
        let p = power_two_prop(&PowerSpec { delta: 0.10, ..base }).unwrap();
        assert!((p - 0.206_041_788_429_008_35).abs() < 1e-12, "{p}");
        let se = gap_standard_error(0.5, 17);
        let at_crit = PowerSpec { delta: se * -normal_quantile(0.05), ..base };
        assert!((power_two_prop(&at_crit).unwrap() - 0.5).abs() < 1e-12);
        let gap = min_detectable_gap(17, 0.5, 0.05, 0.8).unwrap();
        assert!((gap - 0.301_529_367_217_205_5).abs() < 1e-12, "{gap}");
        let half = min_detectable_gap(17, 0.5, 0.05, 0.5).unwrap();
        assert!((half - se * 1.644_853_626_951_472_7).abs() < 1e-12);
    }

    #[test]
    fn power_degenerate_and_invalid() {
        let spec = PowerSpec { delta: 0.1, p_post: 1.0, n_post: 10, alpha: 0.05 };
        assert_eq!(power_two_prop(&spec).unwrap(), 1.0);
        assert_eq!(power_two_prop(&PowerSpec { delta: 0.0, ..spec }).unwrap(), 0.05);
        assert!(min_detectable_gap(10, 0.0, 0.05, 0.8).is_err());
        assert!(power_two_prop(&PowerSpec { n_post: 0, ..spec }).is_err());
        assert!(power_two_prop(&PowerSpec { alpha: 1.0, ..spec }).is_err());
        assert!(power_two_prop(&PowerSpec { p_post: 1.5, ..spec }).is_err());
        assert!(min_detectable_gap(10, 0.5, 0.05, 1.0).is_err());
    }

    #[test]
    fn binomial_tail() {
        assert_eq!(binomial_upper_p(0, 10, 0.5).unwrap(), 1.0);
        let p = binomial_upper_p(10, 10, 0.5).unwrap();
        assert!((p - 0.5f64.powi(10)).abs() < 1e-15);
        // P(X >= 9) for Bin(10, 0.5) = 11/1024
        assert!((binomial_upper_p(9, 10, 0.5).unwrap() - 11.0 / 1024.0).abs() < 1e-14);
    }
}
