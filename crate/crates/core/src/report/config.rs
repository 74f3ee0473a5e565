//! Audit configuration.
//!
//! A single TOML file. Relative paths resolve against the file's directory.
//! Only the API key may come from the environment (`MEMAUDIT_API_KEY`).
//!
//! ```toml
//! output_dir = "out"
//! mode = "strict-replay"          # live | replay | strict-replay
//! seed = 7
//!
//! [provider]
//! tag = "gpt4o"
//! model_id = "gpt-4o-2024-08-06"
//! embedding_model_id = "text-embedding-3-large"
//! base_url = "https://api.openai.com/v1"
//! cache_dir = "cache"
//! max_requests = 5000
//!
//! [cutoff]
//! model_cutoff = "2023-10-01"
//! fake_cutoff = "2010-12-31"
//! current_date = "2023-10-01"
//!
//! [[series]]
//! name = "US GDP growth rate"
//! path = "data/gdp.csv"
//! kind = "rate"
//! frequency = "quarterly"
//! threshold = 2.5
//! threshold_accuracy = true
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{NumberStyle, SeriesKind, SeriesSpec};
use crate::error::{Error, Result};
use crate::gateway::ReplayMode;
use crate::period::Frequency;
use crate::probe::Scheme;
use crate::prompts::{CutoffMode, RecallTemplate};

pub const API_KEY_ENV: &str = "MEMAUDIT_API_KEY";

fn default_max_in_flight() -> usize {
    4
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("memaudit-out")
}
fn default_cutoff_modes() -> Vec<CutoffMode> {
    vec![CutoffMode::None, CutoffMode::Both, CutoffMode::SystemOnly, CutoffMode::UserOnly, CutoffMode::Rolling]
}
fn default_lambda() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    0.05
}
fn default_power() -> f64 {
    0.8
}
fn default_true() -> bool {
    true
}
fn default_fixed_ticker() -> String {
    "AAPL".into()
}
fn default_skill_baseline() -> f64 {
    50.0
}
fn default_deltas() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}
fn default_labels() -> Vec<String> {
    vec!["up".into(), "down".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub tag: String,
    pub model_id: String,
    #[serde(default)]
    pub embedding_model_id: Option<String>,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Secret; never serialized, and overridden by the environment.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub requests_per_minute: Option<f64>,
    #[serde(default)]
    pub max_requests: Option<usize>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffConfig {
    /// The model's real training cutoff; splits recall results pre/post.
    #[serde(default)]
    pub model_cutoff: Option<NaiveDate>,
    #[serde(default)]
    pub fake_cutoff: Option<NaiveDate>,
    #[serde(default)]
    pub current_date: Option<NaiveDate>,
    #[serde(default = "default_cutoff_modes")]
    pub modes: Vec<CutoffMode>,
    /// Series names for the `cutoff` audit; all series when empty.
    #[serde(default)]
    pub series: Vec<String>,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        CutoffConfig {
            model_cutoff: None,
            fake_cutoff: None,
            current_date: None,
            modes: default_cutoff_modes(),
            series: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub name: String,
    pub path: PathBuf,
    pub kind: SeriesKind,
    pub frequency: Frequency,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub threshold_accuracy: bool,
    #[serde(default)]
    pub vintage: bool,
    #[serde(default)]
    pub zero_implausible: bool,
    #[serde(default)]
    pub number_style: NumberStyle,
    #[serde(default)]
    pub template: Option<RecallTemplate>,
    /// Number of earlier observations quoted as context.
    #[serde(default)]
    pub context_depth: usize,
    /// Also ask whether the series went up or down each month.
    #[serde(default)]
    pub direction: bool,
    /// First and last period (inclusive) to audit, as period strings.
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub end: Option<String>,
}

impl SeriesConfig {
    pub fn spec(&self) -> SeriesSpec {
        SeriesSpec {
            name: self.name.clone(),
            kind: self.kind,
            frequency: self.frequency,
            threshold: if self.threshold_accuracy { self.threshold } else { None },
            vintage: self.vintage,
            zero_implausible: self.zero_implausible,
            number_style: self.number_style,
            template: self.template,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelativeConfig {
    pub first: String,
    pub second: String,
    /// Years to compare; every year with data for both series when empty.
    #[serde(default)]
    pub years: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadlineConfig {
    pub path: PathBuf,
    /// Daily level series whose next-trading-day close is also asked for.
    #[serde(default)]
    pub level_series: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    /// Text records with ticker, quarter and year columns.
    pub path: PathBuf,
    #[serde(default)]
    pub industry_map: Option<PathBuf>,
    /// Reconstruction threshold in percent; defaults to max(5, random baseline).
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_fixed_ticker")]
    pub fixed_ticker: String,
    /// Downstream skill on the masked task, in percent, measured elsewhere.
    #[serde(default)]
    pub skill: Option<f64>,
    #[serde(default = "default_skill_baseline")]
    pub skill_baseline: f64,
    /// Number of predictions behind `skill`; the record count when absent.
    #[serde(default)]
    pub skill_n: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    pub series: String,
    /// Wording of the variable in the probe sentence, e.g. "unemployment rate".
    pub variable_phrase: String,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Defaults to a five-year rolling window.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Moving-average window; five years of periods when absent.
    #[serde(default)]
    pub benchmark_window: Option<usize>,
    #[serde(default)]
    pub l2_normalize: bool,
    #[serde(default = "default_true")]
    pub placebos: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub n_post: usize,
    pub p_post: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub target_power: f64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "default_labels")]
    pub labels: Vec<String>,
    /// Observed constrained answer; the first label when absent.
    #[serde(default)]
    pub observed: Option<String>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            labels: default_labels(),
            observed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: ReplayMode,
    #[serde(default)]
    pub seed: Option<u64>,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub cutoff: CutoffConfig,
    #[serde(default)]
    pub series: Vec<SeriesConfig>,
    #[serde(default)]
    pub relative: Vec<RelativeConfig>,
    #[serde(default)]
    pub headlines: Option<HeadlineConfig>,
    #[serde(default)]
    pub mask: Option<MaskConfig>,
    #[serde(default)]
    pub embed: Option<EmbedConfig>,
    #[serde(default)]
    pub power: Option<PowerConfig>,
    #[serde(default)]
    pub theory: Option<TheoryConfig>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl AuditConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: AuditConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                cfg.provider.api_key = Some(key);
            }
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn series_config(&self, name: &str) -> Option<&SeriesConfig> {
        self.series.iter().find(|s| s.name == name)
    }

    /// SHA-256 of the canonical JSON form of the configuration, secrets excluded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("serializable config");
        hex::encode(Sha256::digest(json))
    }

    /// Every problem found, not just the first. Checks specific to one
    /// audit, such as [`AuditConfig::cutoff_errors`], run with that audit.
    pub fn validate(&self) -> Vec<String> {
        self.validate_for(true)
    }

    /// As [`AuditConfig::validate`]; endpoint and cache checks are skipped
    /// when the audit makes no model requests.
    pub fn validate_for(&self, needs_gateway: bool) -> Vec<String> {
        let mut errs = Vec::new();
        let p = &self.provider;
        if p.tag.trim().is_empty() || p.tag.contains(['/', '\\']) {
            errs.push(format!("provider.tag '{}' must be a non-empty file-name-safe string", p.tag));
        }
        if p.model_id.trim().is_empty() {
            errs.push("provider.model_id is empty".into());
        }
        if p.max_in_flight == 0 {
            errs.push("provider.max_in_flight must be at least 1".into());
        }
        if let Some(r) = p.requests_per_minute {
            if !(r > 0.0 && r.is_finite()) {
                errs.push(format!("provider.requests_per_minute {r} must be positive"));
            }
        }
        let cache_dir = self.resolve(&p.cache_dir);
        match self.mode {
            _ if !needs_gateway => {}
            ReplayMode::Live => {
                if p.base_url.as_deref().map_or(true, str::is_empty) {
                    errs.push("provider.base_url is required in live mode".into());
                }
                if p.api_key.as_deref().map_or(true, str::is_empty) {
                    errs.push(format!("no API key: set {API_KEY_ENV} or provider.api_key for live mode"));
                }
            }
            ReplayMode::Replay | ReplayMode::StrictReplay => {
                if !cache_dir.is_dir() {
                    errs.push(format!(
                        "provider.cache_dir {} does not exist; replay modes need a populated cache",
                        cache_dir.display()
                    ));
                }
            }
        }
        if let Some(dir) = &p.template_dir {
            if !self.resolve(dir).is_dir() {
                errs.push(format!("provider.template_dir {} does not exist", self.resolve(dir).display()));
            }
        }

        let mut names = BTreeSet::new();
        for s in &self.series {
            let label = format!("series '{}'", s.name);
            if !names.insert(s.name.as_str()) {
                errs.push(format!("{label}: duplicate series name"));
            }
            if !self.resolve(&s.path).is_file() {
                errs.push(format!("{label}: data file {} not found", self.resolve(&s.path).display()));
            }
            match s.threshold {
                Some(t) if !t.is_finite() => errs.push(format!("{label}: threshold {t} is not finite")),
                None if s.threshold_accuracy => {
                    errs.push(format!("{label}: threshold_accuracy requested but no threshold given"))
                }
                _ => {}
            }
            if let Err(e) = RecallTemplate::for_spec(&s.spec()) {
                errs.push(format!("{label}: {e}"));
            }
            if s.direction && s.frequency != Frequency::Monthly {
                errs.push(format!("{label}: direction questions need a monthly series"));
            }
            for (field, v) in [("start", &s.start), ("end", &s.end)] {
                if let Some(v) = v {
                    if crate::period::PeriodKey::parse_with(v, s.frequency).is_err() {
                        errs.push(format!("{label}: {field} '{v}' is not a {} period", s.frequency));
                    }
                }
            }
        }

        let c = &self.cutoff;
        if let (Some(f), Some(now)) = (c.fake_cutoff, c.current_date) {
            if f > now {
                errs.push(format!("cutoff.fake_cutoff {f} is after cutoff.current_date {now}"));
            }
        }
        for name in &c.series {
            if self.series_config(name).is_none() {
                errs.push(format!("cutoff.series names unknown series '{name}'"));
            }
        }

        for r in &self.relative {
            for name in [&r.first, &r.second] {
                match self.series_config(name) {
                    None => errs.push(format!("relative: unknown series '{name}'")),
                    Some(s) if s.kind != SeriesKind::Level => {
                        errs.push(format!("relative: series '{name}' must be a level series"))
                    }
                    _ => {}
                }
            }
        }

        if let Some(h) = &self.headlines {
            if !self.resolve(&h.path).is_file() {
                errs.push(format!("headlines.path {} not found", self.resolve(&h.path).display()));
            }
            if let Some(name) = &h.level_series {
                match self.series_config(name) {
                    None => errs.push(format!("headlines.level_series: unknown series '{name}'")),
                    Some(s) if s.frequency != Frequency::Daily => {
                        errs.push(format!("headlines.level_series '{name}' must be a daily series"))
                    }
                    _ => {}
                }
            }
        }

        if let Some(m) = &self.mask {
            if !self.resolve(&m.path).is_file() {
                errs.push(format!("mask.path {} not found", self.resolve(&m.path).display()));
            }
            if let Some(map) = &m.industry_map {
                if !self.resolve(map).is_file() {
                    errs.push(format!("mask.industry_map {} not found", self.resolve(map).display()));
                }
            }
            for (field, v) in [("epsilon", m.epsilon), ("skill", m.skill), ("skill_baseline", Some(m.skill_baseline))] {
                if let Some(v) = v {
                    if !(0.0..=100.0).contains(&v) {
                        errs.push(format!("mask.{field} {v} must be a percentage in [0, 100]"));
                    }
                }
            }
            if !(m.alpha > 0.0 && m.alpha < 1.0) {
                errs.push(format!("mask.alpha {} must be in (0, 1)", m.alpha));
            }
        }

        if let Some(e) = &self.embed {
            match self.series_config(&e.series) {
                None => errs.push(format!("embed.series: unknown series '{}'", e.series)),
                Some(s) if s.frequency == Frequency::Daily && (e.scheme.is_none() || e.benchmark_window.is_none()) => {
                    errs.push("embed: daily series need an explicit scheme and benchmark_window".into())
                }
                _ => {}
            }
            if p.embedding_model_id.is_none() {
                errs.push("provider.embedding_model_id is required for the embed audit".into());
            }
            if !(e.lambda >= 0.0 && e.lambda.is_finite()) {
                errs.push(format!("embed.lambda {} must be >= 0", e.lambda));
            }
            match e.scheme {
                Some(Scheme::Rolling { window }) if window < 2 => errs.push("embed.scheme: rolling window must be at least 2".into()),
                Some(Scheme::Expanding { folds, .. }) if folds < 2 => errs.push("embed.scheme: at least 2 folds are needed".into()),
                _ => {}
            }
            if e.placebos && self.seed.is_none() {
                errs.push("seed is required for placebo construction in the embed audit".into());
            }
        }

        if let Some(pw) = &self.power {
            if pw.n_post == 0 {
                errs.push("power.n_post must be at least 1".into());
            }
            if !(pw.p_post > 0.0 && pw.p_post < 1.0) {
                errs.push(format!("power.p_post {} must be in (0, 1)", pw.p_post));
            }
            if !(pw.alpha > 0.0 && pw.alpha < 1.0) {
                errs.push(format!("power.alpha {} must be in (0, 1)", pw.alpha));
            }
            if !(pw.target_power > 0.0 && pw.target_power < 1.0) {
                errs.push(format!("power.target_power {} must be in (0, 1)", pw.target_power));
            }
            if pw.deltas.iter().any(|d| !d.is_finite()) {
                errs.push("power.deltas must be finite".into());
            }
        }

        if let Some(t) = &self.theory {
            if let Err(e) = crate::theory::LabelSet::new(t.labels.clone()) {
                errs.push(format!("theory.labels: {e}"));
            }
            if let Some(o) = &t.observed {
                if !t.labels.contains(o) {
                    errs.push(format!("theory.observed '{o}' is not one of the labels"));
                }
            }
        }
        errs
    }
}

impl AuditConfig {
    /// Checks that only matter to the `cutoff` audit.
    pub fn cutoff_errors(&self) -> Vec<String> {
        let fixed = self
            .cutoff
            .modes
            .iter()
            .any(|m| matches!(m, CutoffMode::Both | CutoffMode::SystemOnly | CutoffMode::UserOnly));
        let mut errs = Vec::new();
        if fixed && self.cutoff.fake_cutoff.is_none() {
            errs.push("cutoff.fake_cutoff is required for the both/system_only/user_only modes".into());
        }
        if self.cutoff.modes.is_empty() {
            errs.push("cutoff.modes is empty".into());
        }
        errs
    }
}

/// Reads, parses and validates a configuration file, reporting all problems at once.
pub fn validate_config(path: &Path) -> Result<AuditConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = AuditConfig::from_toml(&text, &base)?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(format!("{} problem(s):\n  - {}", errs.len(), errs.join("\n  - "))))
    }
}
