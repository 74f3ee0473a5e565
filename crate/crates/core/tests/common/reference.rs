//! Independent re-computations used as test oracles.

use memaudit::dataset::SeriesKind;
use nalgebra::{DMatrix, DVector};

/// One evaluation row in plain numbers: (actual, estimate or refusal, confidence, previous actual).
#[derive(Debug, Clone)]
pub struct Row {
    pub actual: f64,
    pub estimate: Option<f64>,
    pub confidence: Option<f64>,
    pub prev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub me: Option<f64>,
    pub mae: Option<f64>,
    pub mpe: Option<f64>,
    pub mape: Option<f64>,
    pub threshold_accuracy: Option<f64>,
    pub directional_accuracy: Option<f64>,
    pub confidence_calibration: Option<f64>,
    pub num_obs: usize,
    pub refusals: usize,
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mut mx = 0.0;
    let mut my = 0.0;
    for i in 0..xs.len() {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        cov += (xs[i] - mx) * (ys[i] - my);
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

fn sign(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Straight transcription of the table definitions, one loop per statistic.
pub fn summarize(rows: &[Row], kind: SeriesKind, threshold: Option<f64>) -> Summary {
    let mut answered = Vec::new();
    let mut refusals = 0;
    for r in rows {
        match r.estimate {
            Some(e) => answered.push((r, e)),
            None => refusals += 1,
        }
    }
    let n = answered.len() as f64;
    let mut errors = Vec::new();
    for (r, e) in &answered {
        errors.push(match kind {
            SeriesKind::Rate => e - r.actual,
            SeriesKind::Level => (e - r.actual) / r.actual * 100.0,
        });
    }
    let mut total = 0.0;
    let mut total_abs = 0.0;
    for err in &errors {
        total += err;
        total_abs += err.abs();
    }
    let (signed, absolute) = (Some(total / n), Some(total_abs / n));
    let (me, mae, mpe, mape) = match kind {
        SeriesKind::Rate => (signed, absolute, None, None),
        SeriesKind::Level => (None, None, signed, absolute),
    };

    let threshold_accuracy = threshold.map(|t| {
        let mut hits = 0;
        for (r, e) in &answered {
            if (*e > t) == (r.actual > t) {
                hits += 1;
            }
        }
        100.0 * hits as f64 / n
    });

    let mut dir_total = 0;
    let mut dir_hits = 0;
    for (r, e) in &answered {
        if let Some(p) = r.prev {
            dir_total += 1;
            if sign(e - p) == sign(r.actual - p) {
                dir_hits += 1;
            }
        }
    }
    let directional_accuracy = (dir_total > 0).then(|| 100.0 * dir_hits as f64 / dir_total as f64);

    let mut conf = Vec::new();
    let mut abs_err = Vec::new();
    for (i, (r, _)) in answered.iter().enumerate() {
        if let Some(c) = r.confidence {
            conf.push(c);
            abs_err.push(errors[i].abs());
        }
    }
    Summary {
        me,
        mae,
        mpe,
        mape,
        threshold_accuracy,
        directional_accuracy,
        confidence_calibration: pearson(&conf, &abs_err),
        num_obs: answered.len(),
        refusals,
    }
}

/// Ridge with an unpenalized intercept, solved on the augmented design
/// [1 X] with penalty diag(0, λ, …, λ) via nalgebra's LU.
pub fn ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let (n, d) = (x.len(), x[0].len());
    let z = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let mut a = z.transpose() * &z;
    for j in 1..=d {
        a[(j, j)] += lambda;
    }
    let b = z.transpose() * DVector::from_column_slice(y);
    let beta = a.lu().solve(&b).expect("nonsingular normal equations");
    (beta[0], beta.iter().skip(1).copied().collect())
}
