//! Recall, date, identification and baseline statistics.
//!
//! Error metrics are in percentage points: for rate series the values are
//! already percentages, for level series errors are taken relative to the
//! actual level and multiplied by 100. Refusal rows never enter a mean or an
//! accuracy; they are only counted.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dataset::{IndustryMap, SeriesKind, SeriesSpec};
use crate::error::{Error, Result};
use crate::gateway::Identification;
use crate::period::PeriodKey;
use crate::stats::{binomial_upper_p, correlation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericEvalRow {
    pub period: PeriodKey,
    pub actual: f64,
    pub estimated: Option<f64>,
    pub confidence: Option<f64>,
    pub refusal: bool,
    /// Actual value of the previous period, carried on the row so summaries
    /// do not depend on row order.
    pub prev_actual: Option<f64>,
}

impl NumericEvalRow {
    /// The estimate, unless the row is a refusal.
    pub fn usable_estimate(&self) -> Option<f64> {
        if self.refusal {
            None
        } else {
            self.estimated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
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

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn percent(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

/// Sign agreement of the estimated and realized change from `prev`. A zero
/// change on either side only counts when both changes are zero.
pub fn direction_hit(estimated: f64, actual: f64, prev: f64) -> bool {
    let de = estimated - prev;
    let da = actual - prev;
    if de == 0.0 || da == 0.0 {
        return de == 0.0 && da == 0.0;
    }
    (de > 0.0) == (da > 0.0)
}

/// Correlation needs at least three pairs and non-constant inputs.
fn calibration(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 3 {
        return None;
    }
    let (conf, err): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    correlation(&conf, &err)
}

pub fn summarize_numeric(rows: &[NumericEvalRow], spec: &SeriesSpec) -> Result<RecallSummary> {
    if rows.is_empty() {
        return Err(Error::Empty("no evaluation rows".into()));
    }
    let scored: Vec<(&NumericEvalRow, f64)> = rows
        .iter()
        .filter_map(|r| r.usable_estimate().map(|e| (r, e)))
        .collect();
    let refusals = rows.len() - scored.len();
    if scored.is_empty() {
        return Err(Error::invalid("every row is a refusal"));
    }
    if spec.kind == SeriesKind::Level {
        if let Some((r, _)) = scored.iter().find(|(r, _)| r.actual == 0.0) {
            return Err(Error::invalid(format!(
                "zero actual at {} in level series {}",
                r.period, spec.name
            )));
        }
    }

    let abs_error = |r: &NumericEvalRow, e: f64| match spec.kind {
        SeriesKind::Rate => (e - r.actual).abs(),
        SeriesKind::Level => ((e - r.actual) / r.actual).abs() * 100.0,
    };
    let (me, mae, mpe, mape) = match spec.kind {
        SeriesKind::Rate => (
            mean(scored.iter().map(|(r, e)| e - r.actual)),
            mean(scored.iter().map(|(r, e)| (e - r.actual).abs())),
            None,
            None,
        ),
        SeriesKind::Level => (
            None,
            None,
            mean(scored.iter().map(|(r, e)| (e - r.actual) / r.actual * 100.0)),
            mean(scored.iter().map(|(r, e)| ((e - r.actual) / r.actual).abs() * 100.0)),
        ),
    };

    let threshold_accuracy = spec.threshold.and_then(|thr| {
        let hits = scored
            .iter()
            .filter(|(r, e)| (*e > thr) == (r.actual > thr))
            .count();
        percent(hits, scored.len())
    });

    let with_prev: Vec<_> = scored
        .iter()
        .filter_map(|(r, e)| r.prev_actual.map(|p| (r, *e, p)))
        .collect();
    let directional_accuracy = percent(
        with_prev
            .iter()
            .filter(|(r, e, p)| direction_hit(*e, r.actual, *p))
            .count(),
        with_prev.len(),
    );

    let pairs: Vec<(f64, f64)> = scored
        .iter()
        .filter_map(|(r, e)| r.confidence.map(|c| (c, abs_error(r, *e))))
        .collect();

    Ok(RecallSummary {
        me,
        mae,
        mpe,
        mape,
        threshold_accuracy,
        directional_accuracy,
        confidence_calibration: calibration(&pairs),
        num_obs: scored.len(),
        refusals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateEvalRow {
    /// Raw predicted date as returned by the model.
    pub predicted: Option<String>,
    pub actual: NaiveDate,
    pub confidence: Option<f64>,
    #[serde(default)]
    pub estimated_level: Option<f64>,
    #[serde(default)]
    pub actual_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateSummary {
    pub mean_days_diff: f64,
    pub mean_abs_days_diff: f64,
    pub year_accuracy: f64,
    pub month_year_accuracy: f64,
    pub exact_date_accuracy: f64,
    pub confidence_calibration: Option<f64>,
    pub level_mpe: Option<f64>,
    pub level_mape: Option<f64>,
    pub num_obs: usize,
    pub refusals: usize,
}

/// Accepts `mm/dd/yyyy` (the requested format) and ISO dates.
pub fn parse_predicted_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%m/%d/%Y")
        .or_else(|_| NaiveDate::parse_from_str(raw, "%Y-%m-%d"))
        .ok()
}

pub fn summarize_dates(rows: &[DateEvalRow]) -> Result<DateSummary> {
    if rows.is_empty() {
        return Err(Error::Empty("no date rows".into()));
    }
    let parsed: Vec<(&DateEvalRow, NaiveDate)> = rows
        .iter()
        .filter_map(|r| {
            r.predicted
                .as_deref()
                .and_then(parse_predicted_date)
                .map(|p| (r, p))
        })
        .collect();
    if parsed.is_empty() {
        return Err(Error::invalid("no predicted date could be parsed"));
    }
    let n = parsed.len();
    let diffs: Vec<f64> = parsed
        .iter()
        .map(|(r, p)| (*p - r.actual).num_days() as f64)
        .collect();
    let count = |f: &dyn Fn(&NaiveDate, &NaiveDate) -> bool| {
        parsed.iter().filter(|(r, p)| f(p, &r.actual)).count()
    };
    let year_hits = count(&|p, a| p.year() == a.year());
    let month_hits = count(&|p, a| p.year() == a.year() && p.month() == a.month());
    let exact_hits = count(&|p, a| p == a);

    let pairs: Vec<(f64, f64)> = parsed
        .iter()
        .zip(&diffs)
        .filter_map(|((r, _), d)| r.confidence.map(|c| (c, d.abs())))
        .collect();
    let levels: Vec<(f64, f64)> = parsed
        .iter()
        .filter_map(|(r, _)| match (r.estimated_level, r.actual_level) {
            (Some(e), Some(a)) if a != 0.0 => Some((e, a)),
            _ => None,
        })
        .collect();

    Ok(DateSummary {
        mean_days_diff: diffs.iter().sum::<f64>() / n as f64,
        mean_abs_days_diff: diffs.iter().map(|d| d.abs()).sum::<f64>() / n as f64,
        year_accuracy: 100.0 * year_hits as f64 / n as f64,
        month_year_accuracy: 100.0 * month_hits as f64 / n as f64,
        exact_date_accuracy: 100.0 * exact_hits as f64 / n as f64,
        confidence_calibration: calibration(&pairs),
        level_mpe: mean(levels.iter().map(|(e, a)| (e - a) / a * 100.0)),
        level_mape: mean(levels.iter().map(|(e, a)| ((e - a) / a).abs() * 100.0)),
        num_obs: n,
        refusals: rows.len() - n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentEvalRow {
    /// Parsed identification line; `None` when the reply was malformed.
    pub predicted: Option<Identification>,
    pub actual_ticker: String,
    pub actual_quarter: Option<u32>,
    pub actual_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentSummary {
    pub firm_accuracy: f64,
    pub year_accuracy: Option<f64>,
    pub quarter_year_accuracy: Option<f64>,
    pub ff5_accuracy: Option<f64>,
    pub ff10_accuracy: Option<f64>,
    pub mean_years_diff: Option<f64>,
    pub mean_abs_years_diff: Option<f64>,
    pub num_obs: usize,
}

/// Malformed predictions count as misses. Industry accuracy compares the
/// Fama-French labels of the predicted and actual tickers.
pub fn summarize_identification(rows: &[IdentEvalRow], industry_map: Option<&IndustryMap>) -> Result<IdentSummary> {
    if rows.is_empty() {
        return Err(Error::Empty("no identification rows".into()));
    }
    let firm_hits = rows
        .iter()
        .filter(|r| {
            r.predicted
                .as_ref()
                .is_some_and(|p| p.ticker.eq_ignore_ascii_case(&r.actual_ticker))
        })
        .count();

    let with_year: Vec<_> = rows.iter().filter(|r| r.actual_year.is_some()).collect();
    let year_hit = |r: &IdentEvalRow| {
        matches!((&r.predicted, r.actual_year), (Some(p), Some(a)) if p.year == a)
    };
    let year_hits = with_year.iter().filter(|r| year_hit(r)).count();

    let with_qy: Vec<_> = with_year.iter().filter(|r| r.actual_quarter.is_some()).collect();
    let qy_hits = with_qy
        .iter()
        .filter(|r| year_hit(r) && r.predicted.as_ref().map(|p| p.quarter) == r.actual_quarter)
        .count();

    let year_diffs: Vec<f64> = rows
        .iter()
        .filter_map(|r| match (&r.predicted, r.actual_year) {
            (Some(p), Some(a)) => Some((p.year - a) as f64),
            _ => None,
        })
        .collect();

    let industry = |pick: fn(&crate::dataset::IndustryLabels) -> &str| {
        industry_map.and_then(|map| {
            let lookup = |t: &str| map.get(&t.to_ascii_uppercase()).map(pick);
            let eligible: Vec<_> = rows
                .iter()
                .filter_map(|r| lookup(&r.actual_ticker).map(|a| (r, a)))
                .collect();
            let hits = eligible
                .iter()
                .filter(|(r, actual)| {
                    r.predicted
                        .as_ref()
                        .and_then(|p| lookup(&p.ticker))
                        .is_some_and(|pred| pred == *actual)
                })
                .count();
            percent(hits, eligible.len())
        })
    };

    Ok(IdentSummary {
        firm_accuracy: 100.0 * firm_hits as f64 / rows.len() as f64,
        year_accuracy: percent(year_hits, with_year.len()),
        quarter_year_accuracy: percent(qy_hits, with_qy.len()),
        ff5_accuracy: industry(|l| l.ff5.as_str()),
        ff10_accuracy: industry(|l| l.ff10.as_str()),
        mean_years_diff: mean(year_diffs.iter().copied()),
        mean_abs_years_diff: mean(year_diffs.iter().map(|d| d.abs())),
        num_obs: rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRates {
    /// 100 / number of unique firms.
    pub random: f64,
    /// Accuracy of always naming the firm with the most headlines.
    pub most_news: f64,
    pub most_news_ticker: String,
    /// Accuracy of always naming `fixed_ticker`.
    pub fixed: f64,
    pub num_unique_firms: usize,
    pub num_headlines: usize,
}

/// Naive identification baselines over `(actual_ticker, headline_count)`
/// entries. Repeated tickers are pooled; ties for most headlines go to the
/// alphabetically first ticker.
pub fn baseline_rates(panel: &[(String, usize)], fixed_ticker: &str) -> Result<BaselineRates> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (ticker, n) in panel {
        *counts.entry(ticker.to_ascii_uppercase()).or_default() += n;
    }
    let total: usize = counts.values().sum();
    if counts.is_empty() || total == 0 {
        return Err(Error::Empty("baseline panel".into()));
    }
    let (top_ticker, top_count) = counts
        .iter()
        .fold(None::<(&String, usize)>, |best, (t, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((t, c)),
        })
        .expect("non-empty");
    let fixed_count = counts
        .get(&fixed_ticker.to_ascii_uppercase())
        .copied()
        .unwrap_or(0);
    Ok(BaselineRates {
        random: 100.0 / counts.len() as f64,
        most_news: 100.0 * top_count as f64 / total as f64,
        most_news_ticker: top_ticker.clone(),
        fixed: 100.0 * fixed_count as f64 / total as f64,
        num_unique_firms: counts.len(),
        num_headlines: total,
    })
}

/// Default reconstruction threshold: 5% or the random baseline, whichever is larger.
pub fn default_epsilon(random_baseline: f64) -> f64 {
    random_baseline.max(5.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingVerdict {
    pub future_invariance_refuted: bool,
    pub detectable_skill: bool,
    /// One-sided exact binomial p-value for skill > baseline.
    pub skill_p_value: f64,
    pub note: String,
}

pub const LOWER_BOUND_CAVEAT: &str = "Failure to reconstruct is not confirmation of future-invariance: reconstruction tests probe only some memorization channels and bound leakage from below.";

/// Masking checks. Rates are percentages; `n` is the number of masked predictions.
pub fn masking_validity(
    reconstruction_rate: f64,
    epsilon: f64,
    skill: f64,
    baseline: f64,
    n: usize,
    alpha: f64,
) -> Result<MaskingVerdict> {
    for (name, v) in [
        ("reconstruction rate", reconstruction_rate),
        ("epsilon", epsilon),
        ("skill", skill),
        ("baseline", baseline),
    ] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::invalid(format!("{name} {v} outside [0, 100]")));
        }
    }
    if n == 0 {
        return Err(Error::invalid("masking verdict needs at least one prediction"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let refuted = reconstruction_rate > epsilon;
    let successes = (skill / 100.0 * n as f64).round() as u64;
    let p_value = binomial_upper_p(successes, n as u64, baseline / 100.0)?;
    let detectable = skill > baseline && p_value <= alpha;

    let mut note = if refuted {
        format!(
            "Reconstruction rate {reconstruction_rate:.2}% exceeds epsilon {epsilon:.2}%: the masked task is not future-invariant."
        )
    } else {
        format!(
            "Reconstruction rate {reconstruction_rate:.2}% does not exceed epsilon {epsilon:.2}%. {LOWER_BOUND_CAVEAT}"
        )
    };
    note.push_str(&format!(
        " Skill {skill:.2}% vs baseline {baseline:.2}% over {n} predictions: one-sided binomial p = {p_value:.4}{}.",
        if detectable { ", detectable" } else { ", not detectable" }
    ));
    Ok(MaskingVerdict {
        future_invariance_refuted: refuted,
        detectable_skill: detectable,
        skill_p_value: p_value,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::period::Frequency;

    fn row(actual: f64, est: Option<f64>, prev: Option<f64>) -> NumericEvalRow {
        NumericEvalRow {
            period: PeriodKey::month(2000, 1).unwrap(),
            actual,
            estimated: est,
            confidence: None,
            refusal: est.is_none(),
            prev_actual: prev,
        }
    }

    fn rate_spec(thr: f64) -> SeriesSpec {
        SeriesSpec::new("GDP Growth", SeriesKind::Rate, Frequency::Quarterly).with_threshold(thr)
    }

    #[test]
    fn identity_rows() {
        let rows = vec![row(2.0, Some(2.0), None), row(3.0, Some(3.0), Some(2.0)), row(1.0, Some(1.0), Some(3.0))];
        let s = summarize_numeric(&rows, &rate_spec(2.5)).unwrap();
        assert_eq!(s.mae, Some(0.0));
        assert_eq!(s.me, Some(0.0));
        assert_eq!(s.threshold_accuracy, Some(100.0));
        assert_eq!(s.directional_accuracy, Some(100.0));
        assert_eq!(s.refusals, 0);
    }

    #[test]
    fn threshold_both_wrong() {
        let rows = vec![row(2.0, Some(2.6), None), row(3.0, Some(2.4), None)];
        let s = summarize_numeric(&rows, &rate_spec(2.5)).unwrap();
        assert_eq!(s.threshold_accuracy, Some(0.0));
        assert_eq!(s.directional_accuracy, None);
    }

    #[test]
    fn directional_from_carried_prev() {
        let spec = SeriesSpec::new("S&P 500", SeriesKind::Level, Frequency::Daily);
        let rows = vec![row(110.0, Some(108.0), Some(100.0)), row(105.0, Some(104.0), Some(110.0))];
        let s = summarize_numeric(&rows, &spec).unwrap();
        assert_eq!(s.directional_accuracy, Some(100.0));
        assert_eq!(s.threshold_accuracy, None);
    }

    #[test]
    fn refusals_are_counted_not_scored() {
        let mut rows: Vec<_> = (0..4).map(|i| row(1.0 + i as f64, Some(1.5 + i as f64), None)).collect();
        rows.push(row(10.0, None, None));
        let s = summarize_numeric(&rows, &rate_spec(2.5)).unwrap();
        assert_eq!(s.num_obs, 4);
        assert_eq!(s.refusals, 1);
        assert!((s.mae.unwrap() - 0.5).abs() < 1e-15);
        let all_refused = vec![row(1.0, None, None)];
        assert!(summarize_numeric(&all_refused, &rate_spec(2.5)).is_err());
    }

    #[test]
    fn level_zero_actual_is_an_error() {
        let spec = SeriesSpec::new("VIX", SeriesKind::Level, Frequency::Monthly);
        assert!(summarize_numeric(&[row(0.0, Some(1.0), None)], &spec).is_err());
    }

    #[test]
    fn direction_ties() {
        assert!(direction_hit(5.0, 5.0, 5.0));
        assert!(!direction_hit(5.0, 6.0, 5.0));
        assert!(!direction_hit(6.0, 5.0, 5.0));
        assert!(direction_hit(6.0, 7.0, 5.0));
        assert!(!direction_hit(4.0, 7.0, 5.0));
    }

    #[test]
    fn calibration_requires_three_varying_pairs() {
        let mut rows: Vec<_> = (0..3).map(|i| row(1.0, Some(1.0 + i as f64), None)).collect();
        for r in rows.iter_mut() {
            r.confidence = Some(90.0);
        }
        assert_eq!(summarize_numeric(&rows, &rate_spec(2.5)).unwrap().confidence_calibration, None);
        rows[0].confidence = Some(99.0);
        rows[2].confidence = Some(10.0);
        let c = summarize_numeric(&rows, &rate_spec(2.5)).unwrap().confidence_calibration.unwrap();
        assert!(c < 0.0);
        rows.truncate(2);
        assert_eq!(summarize_numeric(&rows, &rate_spec(2.5)).unwrap().confidence_calibration, None);
    }

    fn date_row(pred: &str, actual: (i32, u32, u32)) -> DateEvalRow {
        DateEvalRow {
            predicted: Some(pred.to_string()),
            actual: NaiveDate::from_ymd_opt(actual.0, actual.1, actual.2).unwrap(),
            confidence: None,
            estimated_level: None,
            actual_level: None,
        }
    }

    #[test]
    fn date_examples() {
        let s = summarize_dates(&[date_row("01/05/2020", (2020, 1, 3))]).unwrap();
        assert_eq!(s.mean_days_diff, 2.0);
        assert_eq!((s.year_accuracy, s.month_year_accuracy, s.exact_date_accuracy), (100.0, 100.0, 0.0));

        let s = summarize_dates(&[date_row("2021-12-31", (2022, 1, 1))]).unwrap();
        assert_eq!(s.mean_days_diff, -1.0);
        assert_eq!((s.year_accuracy, s.month_year_accuracy), (0.0, 0.0));

        let s = summarize_dates(&[date_row("03/03/2003", (2003, 3, 3)), date_row("garbage", (2003, 3, 4))]).unwrap();
        assert_eq!(s.exact_date_accuracy, 100.0);
        assert_eq!(s.mean_abs_days_diff, 0.0);
        assert_eq!(s.refusals, 1);
    }

    #[test]
    fn date_levels() {
        let mut r = date_row("01/02/2020", (2020, 1, 2));
        r.estimated_level = Some(105.0);
        r.actual_level = Some(100.0);
        let s = summarize_dates(&[r]).unwrap();
        assert!((s.level_mpe.unwrap() - 5.0).abs() < 1e-12);
        assert!((s.level_mape.unwrap() - 5.0).abs() < 1e-12);
    }

    fn ident(t: &str, q: u32, y: i32) -> Identification {
        Identification {
            ticker: t.into(),
            industry: "Furniture".into(),
            quarter: q,
            year: y,
        }
    }

    #[test]
    fn identification_examples() {
        let rows = vec![IdentEvalRow {
            predicted: Some(ident("ETH", 1, 2018)),
            actual_ticker: "eth".into(),
            actual_quarter: Some(1),
            actual_year: Some(2018),
        }];
        let s = summarize_identification(&rows, None).unwrap();
        assert_eq!(s.firm_accuracy, 100.0);
        assert_eq!(s.year_accuracy, Some(100.0));
        assert_eq!(s.quarter_year_accuracy, Some(100.0));

        let rows = vec![IdentEvalRow {
            predicted: Some(ident("ETH", 2, 2015)),
            actual_ticker: "ETH".into(),
            actual_quarter: Some(1),
            actual_year: Some(2018),
        }];
        let s = summarize_identification(&rows, None).unwrap();
        assert_eq!(s.mean_years_diff, Some(-3.0));
        assert_eq!(s.mean_abs_years_diff, Some(3.0));

        let rows = vec![IdentEvalRow {
            predicted: Some(ident("ETH", 2, 2018)),
            actual_ticker: "ETH".into(),
            actual_quarter: Some(1),
            actual_year: Some(2018),
        }];
        let s = summarize_identification(&rows, None).unwrap();
        assert_eq!(s.year_accuracy, Some(100.0));
        assert_eq!(s.quarter_year_accuracy, Some(0.0));
    }

    #[test]
    fn industry_accuracy_uses_the_map() {
        let mut map = IndustryMap::new();
        for (t, ff5, ff10) in [("ETH", "Cnsmr", "Durbl"), ("LZB", "Cnsmr", "Durbl"), ("XOM", "Other", "Enrgy")] {
            map.insert(t.into(), crate::dataset::IndustryLabels { ff5: ff5.into(), ff10: ff10.into() });
        }
        let rows = vec![
            IdentEvalRow { predicted: Some(ident("LZB", 1, 2018)), actual_ticker: "ETH".into(), actual_quarter: None, actual_year: None },
            IdentEvalRow { predicted: Some(ident("XOM", 1, 2018)), actual_ticker: "ETH".into(), actual_quarter: None, actual_year: None },
            IdentEvalRow { predicted: None, actual_ticker: "ETH".into(), actual_quarter: None, actual_year: None },
        ];
        let s = summarize_identification(&rows, Some(&map)).unwrap();
        assert!((s.ff10_accuracy.unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.firm_accuracy, 0.0);
        assert_eq!(s.year_accuracy, None);
    }

    #[test]
    fn baselines() {
        let panel = vec![("A".to_string(), 5), ("B".to_string(), 3), ("C".to_string(), 2)];
        let b = baseline_rates(&panel, "AAPL").unwrap();
        assert!((b.random - 100.0 / 3.0).abs() < 1e-10);
        assert!((b.most_news - 50.0).abs() < 1e-10);
        assert_eq!(b.fixed, 0.0);
        let single = baseline_rates(&[("A".to_string(), 4)], "A").unwrap();
        assert_eq!((single.random, single.fixed), (100.0, 100.0));
        assert!(baseline_rates(&[], "A").is_err());
    }

    #[test]
    fn masking_examples() {
        let v = masking_validity(100.0, 5.0, 100.0, 50.0, 40, 0.05).unwrap();
        assert!(v.future_invariance_refuted);
        let v = masking_validity(0.0, 5.0, 58.19, 50.0, 5000, 0.05).unwrap();
        assert!(!v.future_invariance_refuted);
        assert!(v.detectable_skill);
        assert!(v.note.contains(LOWER_BOUND_CAVEAT));
        let v = masking_validity(0.0, 5.0, 52.0, 50.0, 25, 0.05).unwrap();
        assert!(!v.detectable_skill);
        assert!(masking_validity(101.0, 5.0, 50.0, 50.0, 10, 0.05).is_err());
        assert!(masking_validity(1.0, 5.0, 50.0, 50.0, 0, 0.05).is_err());
        assert_eq!(default_epsilon(33.3), 33.3);
        assert_eq!(default_epsilon(1.0), 5.0);
    }
}
