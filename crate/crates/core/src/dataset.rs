//! Loading, validation and partitioning of user-supplied series, text corpora
//! and market-cap panels.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::{Frequency, PeriodKey};
use crate::prompts::RecallTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    /// Percent-valued series; errors are reported as ME/MAE in percentage points.
    Rate,
    /// Level series; errors are reported relative to the actual as MPE/MAPE.
    Level,
}

/// How numbers drawn from a series are printed inside prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberStyle {
    /// `2834.40`
    #[default]
    Plain,
    /// `2,834.40`
    Grouped,
}

impl NumberStyle {
    pub fn format(self, value: f64) -> String {
        let plain = format!("{value:.2}");
        match self {
            NumberStyle::Plain => plain,
            NumberStyle::Grouped => group_thousands(&plain),
        }
    }
}

fn group_thousands(plain: &str) -> String {
    let (sign, digits) = match plain.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", plain),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let mut grouped = String::with_capacity(int.len() + int.len() / 3);
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    if frac.is_empty() {
        format!("{sign}{grouped}")
    } else {
        format!("{sign}{grouped}.{frac}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub name: String,
    pub kind: SeriesKind,
    pub frequency: Frequency,
    /// Series-specific threshold for threshold accuracy (e.g. 2.5 for GDP growth).
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Values are first-release estimates rather than revised data.
    #[serde(default)]
    pub vintage: bool,
    /// A reply of exactly 0 is implausible for this series and counts as a refusal.
    #[serde(default)]
    pub zero_implausible: bool,
    #[serde(default)]
    pub number_style: NumberStyle,
    /// Question template; derived from kind and frequency when absent.
    #[serde(default)]
    pub template: Option<RecallTemplate>,
}

impl SeriesSpec {
    pub fn new(name: impl Into<String>, kind: SeriesKind, frequency: Frequency) -> Self {
        SeriesSpec {
            name: name.into(),
            kind,
            frequency,
            threshold: None,
            vintage: false,
            zero_implausible: false,
            number_style: NumberStyle::Plain,
            template: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub period: PeriodKey,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_cap: Option<f64>,
}

impl Observation {
    pub fn new(period: PeriodKey, value: f64) -> Self {
        Observation {
            period,
            value,
            market_cap: None,
        }
    }
}

/// A validated series: observations strictly increasing by period.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    spec: SeriesSpec,
    observations: Vec<Observation>,
}

impl Series {
    /// Sorts the observations and rejects duplicates, mixed frequencies and
    /// non-finite values.
    pub fn new(spec: SeriesSpec, mut observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Empty(format!("series {}", spec.name)));
        }
        for obs in &observations {
            if !obs.value.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite value at {} in {}",
                    obs.period, spec.name
                )));
            }
            if obs.period.frequency() != spec.frequency {
                return Err(Error::invalid(format!(
                    "period {} does not match {} frequency of {}",
                    obs.period, spec.frequency, spec.name
                )));
            }
        }
        observations.sort_by(|a, b| a.period.cmp(&b.period));
        if let Some(w) = observations.windows(2).find(|w| w[0].period == w[1].period) {
            return Err(Error::DuplicatePeriod(w[0].period.to_string()));
        }
        Ok(Series { spec, observations })
    }

    pub fn spec(&self) -> &SeriesSpec {
        &self.spec
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, period: &PeriodKey) -> Option<&Observation> {
        self.observations
            .binary_search_by(|o| o.period.cmp(period))
            .ok()
            .map(|i| &self.observations[i])
    }

    /// Value of the observation immediately preceding `period`, if any.
    pub fn previous_value(&self, period: &PeriodKey) -> Option<f64> {
        let idx = self.observations.partition_point(|o| o.period < *period);
        idx.checked_sub(1).map(|i| self.observations[i].value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.value).collect()
    }

    /// Writes the series in the `date,value[,market_cap]` layout accepted by [`load_series`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let with_cap = self.observations.iter().any(|o| o.market_cap.is_some());
        out.push_str(if with_cap {
            "date,value,market_cap\n"
        } else {
            "date,value\n"
        });
        for obs in &self.observations {
            out.push_str(&format!("{},{}", obs.period, obs.value));
            if with_cap {
                out.push(',');
                if let Some(cap) = obs.market_cap {
                    out.push_str(&cap.to_string());
                }
            }
            out.push('\n');
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn parse_number(raw: &str, path: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        row,
        message: format!("unparsable {column} '{raw}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_string(),
            row,
            message: format!("non-finite {column} '{raw}'"),
        });
    }
    Ok(v)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        message: e.to_string(),
    }
}

/// Loads a `date,value[,market_cap]` CSV. Row numbers in errors count the
/// header as row 1.
pub fn load_series(path: &Path, spec: SeriesSpec) -> Result<Series> {
    let shown = path.display().to_string();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = col("date").ok_or_else(|| Error::Parse {
        path: shown.clone(),
        row: 1,
        message: "missing 'date' column".into(),
    })?;
    let value_col = col("value").ok_or_else(|| Error::Parse {
        path: shown.clone(),
        row: 1,
        message: "missing 'value' column".into(),
    })?;
    let cap_col = col("market_cap");

    let mut observations = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let raw_date = record.get(date_col).unwrap_or("");
        let period =
            PeriodKey::parse_with(raw_date, spec.frequency).map_err(|e| Error::Parse {
                path: shown.clone(),
                row,
                message: e.to_string(),
            })?;
        let value = parse_number(record.get(value_col).unwrap_or(""), &shown, row, "value")?;
        let market_cap = match cap_col.and_then(|c| record.get(c)) {
            Some(raw) if !raw.is_empty() => Some(parse_number(raw, &shown, row, "market_cap")?),
            _ => None,
        };
        if !seen.insert(period) {
            return Err(Error::DuplicatePeriod(period.to_string()));
        }
        observations.push(Observation {
            period,
            value,
            market_cap,
        });
    }
    if observations.is_empty() {
        return Err(Error::Empty(shown));
    }
    Series::new(spec, observations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub record_id: String,
    pub date: NaiveDate,
    pub body: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub ticker: Option<String>,
    #[serde(default)]
    pub quarter: Option<u32>,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub industry_label: Option<String>,
}

impl TextRecord {
    pub fn validate(&self) -> Result<()> {
        if self.body.trim().is_empty() {
            return Err(Error::invalid(format!("record {} has empty body", self.record_id)));
        }
        if let Some(q) = self.quarter {
            if !(1..=4).contains(&q) {
                return Err(Error::invalid(format!(
                    "record {} has quarter {q} outside 1-4",
                    self.record_id
                )));
            }
            if self.year.is_none() {
                return Err(Error::invalid(format!(
                    "record {} has a quarter but no year",
                    self.record_id
                )));
            }
        }
        Ok(())
    }
}

/// Loads a `record_id,date,ticker,quarter,year,body` corpus. Optional `title`
/// and `industry_label` columns are picked up when present.
pub fn load_text_records(path: &Path) -> Result<Vec<TextRecord>> {
    let shown = path.display().to_string();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let required = |name: &str| {
        col(name).ok_or_else(|| Error::Parse {
            path: shown.clone(),
            row: 1,
            message: format!("missing '{name}' column"),
        })
    };
    let (id_col, date_col, body_col) = (required("record_id")?, required("date")?, required("body")?);
    let (ticker_col, quarter_col, year_col) = (col("ticker"), col("quarter"), col("year"));
    let (title_col, industry_col) = (col("title"), col("industry_label"));

    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let parse_err = |message: String| Error::Parse {
            path: shown.clone(),
            row,
            message,
        };
        let opt = |c: Option<usize>| {
            c.and_then(|c| record.get(c))
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let raw_date = record.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| parse_err(format!("unparsable date '{raw_date}'")))?;
        let quarter = opt(quarter_col)
            .map(|q| {
                q.trim_start_matches(['Q', 'q'])
                    .parse::<u32>()
                    .map_err(|_| parse_err(format!("unparsable quarter '{q}'")))
            })
            .transpose()?;
        let year = opt(year_col)
            .map(|y| y.parse::<i32>().map_err(|_| parse_err(format!("unparsable year '{y}'"))))
            .transpose()?;
        let rec = TextRecord {
            record_id: record.get(id_col).unwrap_or("").to_string(),
            date,
            body: record.get(body_col).unwrap_or("").to_string(),
            title: opt(title_col),
            ticker: opt(ticker_col),
            quarter,
            year,
            industry_label: opt(industry_col),
        };
        rec.validate().map_err(|e| parse_err(e.to_string()))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Empty(shown));
    }
    Ok(records)
}

/// Fama-French industry labels for one ticker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndustryLabels {
    pub ff5: String,
    pub ff10: String,
}

pub type IndustryMap = BTreeMap<String, IndustryLabels>;

/// Loads a `ticker,ff5,ff10` mapping; tickers are upper-cased.
pub fn load_industry_map(path: &Path) -> Result<IndustryMap> {
    #[derive(Deserialize)]
    struct Row {
        ticker: String,
        ff5: String,
        ff10: String,
    }
    let mut reader = open_csv(path)?;
    let mut map = IndustryMap::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| csv_error(path, i + 2, e))?;
        map.insert(
            row.ticker.to_ascii_uppercase(),
            IndustryLabels {
                ff5: row.ff5,
                ff10: row.ff10,
            },
        );
    }
    Ok(map)
}

/// Anything carrying a calendar date used for cutoff partitioning.
pub trait Dated {
    fn date(&self) -> NaiveDate;
}

impl Dated for Observation {
    /// Periods are placed by their first day.
    fn date(&self) -> NaiveDate {
        self.period.start_date()
    }
}

impl Dated for TextRecord {
    fn date(&self) -> NaiveDate {
        self.date
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSplit<T> {
    pub cutoff_date: NaiveDate,
    pub pre: Vec<T>,
    pub post: Vec<T>,
}

/// Partitions items into strictly-before-cutoff and on-or-after-cutoff,
/// preserving input order within each side.
pub fn split_by_cutoff<T: Dated + Clone>(items: &[T], cutoff_date: NaiveDate) -> Result<CutoffSplit<T>> {
    if items.is_empty() {
        return Err(Error::Empty("nothing to split".into()));
    }
    let (pre, post) = items
        .iter()
        .cloned()
        .partition(|item| item.date() < cutoff_date);
    Ok(CutoffSplit {
        cutoff_date,
        pre,
        post,
    })
}

impl Series {
    /// Splits into (pre, post) sub-series; either side may be absent when empty.
    pub fn split(&self, cutoff_date: NaiveDate) -> (Option<Series>, Option<Series>) {
        let split = split_by_cutoff(&self.observations, cutoff_date).expect("series is non-empty");
        let wrap = |obs: Vec<Observation>| {
            (!obs.is_empty()).then(|| Series {
                spec: self.spec.clone(),
                observations: obs,
            })
        };
        (wrap(split.pre), wrap(split.post))
    }
}

/// The `depth` most recent observations strictly before `target`, oldest first.
pub fn period_context(series: &Series, target: &PeriodKey, depth: usize) -> Vec<Observation> {
    let obs = series.observations();
    let end = obs.partition_point(|o| o.period < *target);
    obs[end.saturating_sub(depth)..end].to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub ticker: String,
    pub year: i32,
    pub market_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledAsset {
    pub ticker: String,
    /// 1-based size bucket; 1 holds the smallest caps.
    pub bucket: usize,
    pub market_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSample {
    pub year: i32,
    pub breakpoints: Vec<f64>,
    pub sampled: Vec<SampledAsset>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bucket breakpoints: the interior `k/buckets` quantiles of the benchmark caps.
pub fn size_breakpoints(benchmark_caps: &[f64], buckets: usize) -> Vec<f64> {
    let mut sorted = benchmark_caps.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..buckets)
        .map(|k| quantile_sorted(&sorted, k as f64 / buckets as f64))
        .collect()
}

/// Caps equal to a breakpoint fall in the lower bucket.
pub fn assign_bucket(cap: f64, breakpoints: &[f64]) -> usize {
    breakpoints.iter().filter(|&&b| cap > b).count() + 1
}

fn year_seed(seed: u64, year: i32) -> u64 {
    // splitmix64 finalizer over (seed, year)
    let mut z = seed ^ (year as i64 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-year size-bucket sampling with benchmark-subset breakpoints.
///
/// Breakpoints use only `benchmark` tickers; every asset with a cap is then
/// bucketed and `min(per_bucket, population)` assets are drawn per bucket
/// with a generator seeded from `(seed, year)`.
pub fn size_bucket_sample(
    panel: &[PanelRow],
    benchmark: &BTreeSet<String>,
    buckets: usize,
    per_bucket: usize,
    seed: u64,
) -> Result<Vec<YearSample>> {
    if buckets < 2 {
        return Err(Error::invalid("at least two size buckets are required"));
    }
    if per_bucket == 0 {
        return Err(Error::invalid("per_bucket must be at least 1"));
    }
    let mut by_year: BTreeMap<i32, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut skipped = 0usize;
    for row in panel {
        match row.market_cap {
            None => skipped += 1,
            Some(cap) if !(cap > 0.0) || !cap.is_finite() => {
                return Err(Error::invalid(format!(
                    "non-positive market cap {cap} for {} in {}",
                    row.ticker, row.year
                )))
            }
            Some(cap) => {
                by_year.entry(row.year).or_default().insert(&row.ticker, cap);
            }
        }
    }
    if skipped > 0 {
        log::warn!("excluded {skipped} panel rows without market cap from size sampling");
    }

    let mut out = Vec::with_capacity(by_year.len());
    for (year, caps) in by_year {
        let bench: Vec<f64> = caps
            .iter()
            .filter(|(t, _)| benchmark.contains(**t))
            .map(|(_, &c)| c)
            .collect();
        if bench.is_empty() {
            return Err(Error::Empty(format!("benchmark subset in {year}")));
        }
        let breakpoints = size_breakpoints(&bench, buckets);

        let mut members: Vec<Vec<(&str, f64)>> = vec![Vec::new(); buckets];
        for (&ticker, &cap) in &caps {
            members[assign_bucket(cap, &breakpoints) - 1].push((ticker, cap));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(year_seed(seed, year));
        let mut sampled = Vec::new();
        for (b, pop) in members.iter().enumerate() {
            let amount = per_bucket.min(pop.len());
            let mut picks = index::sample(&mut rng, pop.len(), amount).into_vec();
            picks.sort_unstable();
            sampled.extend(picks.into_iter().map(|i| SampledAsset {
                ticker: pop[i].0.to_string(),
                bucket: b + 1,
                market_cap: pop[i].1,
            }));
        }
        out.push(YearSample {
            year,
            breakpoints,
            sampled,
        });
    }
    Ok(out)
}
