//! Subcommand pipelines.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Serialize;

use super::config::{AuditConfig, SeriesConfig};
use super::output::{fmt_opt, ManifestInput, ReportBundle, Table};
use crate::dataset::{load_industry_map, load_series, load_text_records, period_context, Series, TextRecord};
use crate::error::{Error, Result};
use crate::gateway::{
    embedding_digest, ChatJob, ChatRequest, Gateway, GatewayConfig, HttpTransport, ModelReply, ParseStatus,
    ReplayMode, Transport,
};
use crate::metrics::{
    baseline_rates, default_epsilon, masking_validity, summarize_dates, summarize_identification, summarize_numeric,
    DateEvalRow, IdentEvalRow, NumericEvalRow,
};
use crate::period::{Frequency, PeriodKey};
use crate::probe::{cosine_report, make_placebos, probe_report, Matrix, ProbeConfig, Scheme};
use crate::prompts::{CutoffDirective, CutoffMode, DirectionTask, PromptBundle, PromptRenderer, Templates};
use crate::stats::{gap_standard_error, min_detectable_gap, power_two_prop, PowerSpec};
use crate::theory::{
    construct_equivalent_worlds, fine_tuning_worlds, future_invariance_check, identified_set, LabelSet,
    CONSTRAINT_PROMPT, DEMO_TASK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Recall,
    Cutoff,
    Mask,
    Embed,
    Power,
    TheoryDemo,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Recall => "recall",
            Subcommand::Cutoff => "cutoff",
            Subcommand::Mask => "mask",
            Subcommand::Embed => "embed",
            Subcommand::Power => "power",
            Subcommand::TheoryDemo => "theory-demo",
        }
    }

    pub fn needs_gateway(self) -> bool {
        !matches!(self, Subcommand::Power | Subcommand::TheoryDemo)
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "recall" => Subcommand::Recall,
            "cutoff" => Subcommand::Cutoff,
            "mask" => Subcommand::Mask,
            "embed" => Subcommand::Embed,
            "power" => Subcommand::Power,
            "theory-demo" => Subcommand::TheoryDemo,
            other => return Err(Error::Config(format!("unknown subcommand '{other}'"))),
        })
    }
}

/// A finished audit, ready to be written.
#[derive(Debug, Clone)]
pub struct AuditRun {
    pub bundle: ReportBundle,
    pub manifest: ManifestInput,
}

impl AuditRun {
    pub fn write(&self, out: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        self.bundle.write(out, &self.manifest)
    }
}

/// Runs a subcommand with the transport implied by the config: HTTP in live
/// mode, none in the replay modes.
pub fn run_audit(cfg: &AuditConfig, sub: Subcommand) -> Result<AuditRun> {
    let transport: Option<Box<dyn Transport>> = match (cfg.mode, sub.needs_gateway()) {
        (ReplayMode::Live, true) => {
            let base = cfg
                .provider
                .base_url
                .as_deref()
                .ok_or_else(|| Error::Config("provider.base_url is required in live mode".into()))?;
            let key = cfg
                .provider
                .api_key
                .as_deref()
                .ok_or_else(|| Error::Config("no API key for live mode".into()))?;
            Some(Box::new(HttpTransport::new(base, key)))
        }
        _ => None,
    };
    run_audit_with(cfg, sub, transport)
}

/// As [`run_audit`] with an explicit transport (used for live runs against
/// stub endpoints).
pub fn run_audit_with(cfg: &AuditConfig, sub: Subcommand, transport: Option<Box<dyn Transport>>) -> Result<AuditRun> {
    let mut errs = cfg.validate_for(sub.needs_gateway());
    if sub == Subcommand::Cutoff {
        errs.extend(cfg.cutoff_errors());
    }
    if !errs.is_empty() {
        return Err(Error::Config(format!("{} problem(s):\n  - {}", errs.len(), errs.join("\n  - "))));
    }
    let templates = match &cfg.provider.template_dir {
        Some(dir) => Templates::with_overrides(&cfg.resolve(dir))?,
        None => Templates::default(),
    };
    let gateway = if sub.needs_gateway() {
        let p = &cfg.provider;
        let mut g = GatewayConfig::new(&p.tag, cfg.resolve(&p.cache_dir), cfg.mode);
        g.max_retries = p.max_retries;
        g.timeout_secs = p.timeout_secs;
        g.requests_per_minute = p.requests_per_minute;
        g.max_in_flight = p.max_in_flight;
        g.max_requests = p.max_requests;
        g.template_overrides = templates.override_hash();
        let transport = if cfg.mode == ReplayMode::Live { transport } else { None };
        Some(Gateway::new(g, transport)?)
    } else {
        None
    };
    let manifest = ManifestInput {
        config_hash: cfg.config_hash(),
        mode: match cfg.mode {
            ReplayMode::Live => "live",
            ReplayMode::Replay => "replay",
            ReplayMode::StrictReplay => "strict-replay",
        }
        .into(),
        seed: cfg.seed,
        provider_tag: cfg.provider.tag.clone(),
        model_id: cfg.provider.model_id.clone(),
        template_fingerprint: templates.fingerprint(),
        template_overrides: templates.override_hash(),
        cache_file: format!("{}.jsonl", cfg.provider.tag),
        cache_entries_used: 0,
    };
    let mut audit = Audit {
        cfg,
        renderer: PromptRenderer::new(templates),
        gateway,
        bundle: ReportBundle::new(sub.as_str()),
        soft_misses: 0,
    };
    match sub {
        Subcommand::Recall => audit.recall()?,
        Subcommand::Cutoff => audit.cutoff()?,
        Subcommand::Mask => audit.mask()?,
        Subcommand::Embed => audit.embed()?,
        Subcommand::Power => audit.power()?,
        Subcommand::TheoryDemo => audit.theory()?,
    }
    if audit.soft_misses > 0 {
        let n = audit.soft_misses;
        audit
            .bundle
            .notes
            .push(format!("{n} request(s) had no cached reply in replay mode and are counted as refusals."));
    }
    let mut manifest = manifest;
    manifest.cache_entries_used = audit.bundle.digests.len();
    Ok(AuditRun {
        bundle: audit.bundle,
        manifest,
    })
}

struct Audit<'a> {
    cfg: &'a AuditConfig,
    renderer: PromptRenderer,
    gateway: Option<Gateway>,
    bundle: ReportBundle,
    soft_misses: usize,
}

#[derive(Serialize)]
struct NumericRecord<'a> {
    series: &'a str,
    directive: &'a str,
    period: PeriodKey,
    actual: f64,
    estimated: Option<f64>,
    confidence: Option<f64>,
    refusal: bool,
    prev_actual: Option<f64>,
    parse_status: ParseStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
    raw_text: &'a str,
}

#[derive(Serialize)]
struct LabelRecord<'a> {
    task: &'a str,
    key: String,
    actual: String,
    predicted: Option<String>,
    correct: bool,
    refusal: bool,
    confidence: Option<f64>,
    raw_text: &'a str,
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn directive_label(mode: CutoffMode) -> &'static str {
    match mode {
        CutoffMode::None => "none",
        CutoffMode::Both => "both",
        CutoffMode::SystemOnly => "system_only",
        CutoffMode::UserOnly => "user_only",
        CutoffMode::Rolling => "rolling",
    }
}

const RECALL_HEADER: [&str; 11] = [
    "Series",
    "Segment",
    "ME (%)",
    "MAE (%)",
    "MPE (%)",
    "MAPE (%)",
    "Threshold Accuracy (%)",
    "Directional Accuracy (%)",
    "Confidence Calibration",
    "Num Obs",
    "Refusals",
];

impl Audit<'_> {
    fn gateway(&self) -> &Gateway {
        self.gateway.as_ref().expect("gateway opened for this subcommand")
    }

    fn request(&self, bundle: &PromptBundle) -> ChatRequest {
        let mut r = ChatRequest::from_bundle(&self.cfg.provider.model_id, bundle);
        r.max_retries = self.cfg.provider.max_retries;
        r.timeout_secs = self.cfg.provider.timeout_secs;
        r
    }

    /// Sends prompts and maps soft failures to refusals carrying their cause.
    /// Strict-replay misses and configuration errors abort the run.
    fn ask(&mut self, prompts: &[PromptBundle], zero_implausible: bool) -> Result<Vec<ModelReply>> {
        let jobs: Vec<ChatJob> = prompts
            .iter()
            .map(|b| ChatJob {
                request: self.request(b),
                schema: b.answer_schema,
                zero_implausible,
            })
            .collect();
        for j in &jobs {
            let d = self.gateway().digest(&j.request, j.schema);
            self.bundle.digests.insert(d);
        }
        let results = self.gateway().complete_many(&jobs);
        let mut out = Vec::with_capacity(results.len());
        for r in results {
            out.push(match r {
                Ok(reply) => {
                    if reply.note.as_deref().is_some_and(|n| n.starts_with("cache miss")) {
                        self.soft_misses += 1;
                    }
                    reply
                }
                Err(Error::BudgetExhausted(n)) => {
                    self.bundle.hard_stop.get_or_insert_with(|| {
                        format!("request budget of {n} exhausted; unanswered rows are recorded as refusals")
                    });
                    ModelReply::missing("request budget exhausted")
                }
                Err(Error::Transport(m)) => ModelReply::missing(format!("provider failure: {m}")),
                Err(e) => return Err(e),
            });
        }
        Ok(out)
    }

    fn load(&self, s: &SeriesConfig) -> Result<Series> {
        load_series(&self.cfg.resolve(&s.path), s.spec())
    }

    /// Audited periods of a series, honoring start/end bounds.
    fn periods(&self, s: &SeriesConfig, series: &Series) -> Result<Vec<PeriodKey>> {
        let start = s.start.as_deref().map(|v| PeriodKey::parse_with(v, s.frequency)).transpose()?;
        let end = s.end.as_deref().map(|v| PeriodKey::parse_with(v, s.frequency)).transpose()?;
        Ok(series
            .observations()
            .iter()
            .map(|o| o.period)
            .filter(|p| start.map_or(true, |st| *p >= st) && end.map_or(true, |en| *p <= en))
            .collect())
    }

    fn numeric_audit(
        &mut self,
        s: &SeriesConfig,
        series: &Series,
        directive: &CutoffDirective,
        file_stem: &str,
    ) -> Result<Vec<NumericEvalRow>> {
        let spec = s.spec();
        let periods = self.periods(s, series)?;
        let prompts = periods
            .iter()
            .map(|p| {
                let ctx = period_context(series, p, s.context_depth);
                self.renderer.render_recall(&spec, p, &ctx, directive)
            })
            .collect::<Result<Vec<_>>>()?;
        let replies = self.ask(&prompts, spec.zero_implausible)?;
        let mut rows = Vec::with_capacity(periods.len());
        let mut records = Vec::with_capacity(periods.len());
        for (p, reply) in periods.iter().zip(&replies) {
            let actual = series.get(p).expect("period from series").value;
            let row = NumericEvalRow {
                period: *p,
                actual,
                estimated: if reply.refusal { None } else { reply.answer_numeric },
                confidence: reply.confidence,
                refusal: reply.refusal,
                prev_actual: series.previous_value(p),
            };
            records.push(NumericRecord {
                series: &s.name,
                directive: directive_label(directive.mode),
                period: *p,
                actual,
                estimated: row.estimated,
                confidence: row.confidence,
                refusal: row.refusal,
                prev_actual: row.prev_actual,
                parse_status: reply.parse_status,
                note: reply.note.as_deref(),
                raw_text: &reply.raw_text,
            });
            rows.push(row);
        }
        self.bundle.add_rows(file_stem, &records);
        self.bundle.plots.push((file_stem.to_string(), rows.clone()));
        Ok(rows)
    }

    fn summary_row(&mut self, table: &mut Table, lead: &[&str], s: &SeriesConfig, rows: &[NumericEvalRow]) {
        let mut cells: Vec<String> = lead.iter().map(|c| c.to_string()).collect();
        match summarize_numeric(rows, &s.spec()) {
            Ok(m) => {
                cells.extend([
                    fmt_opt(m.me, 2),
                    fmt_opt(m.mae, 2),
                    fmt_opt(m.mpe, 2),
                    fmt_opt(m.mape, 2),
                    fmt_opt(m.threshold_accuracy, 2),
                    fmt_opt(m.directional_accuracy, 2),
                    fmt_opt(m.confidence_calibration, 4),
                    m.num_obs.to_string(),
                    m.refusals.to_string(),
                ]);
            }
            Err(e) => {
                self.bundle.notes.push(format!("{}: {e}", lead.join(" / ")));
                let refusals = rows.iter().filter(|r| r.usable_estimate().is_none()).count();
                cells.extend(std::iter::repeat("-".to_string()).take(7));
                cells.extend([(rows.len() - refusals).to_string(), refusals.to_string()]);
            }
        }
        table.push(cells);
    }

    /// Splits rows at `cutoff` (periods starting on or after it are "post").
    fn segments(
        rows: &[NumericEvalRow],
        cutoff: Option<NaiveDate>,
        labels: (&'static str, &'static str),
    ) -> Vec<(&'static str, Vec<NumericEvalRow>)> {
        let mut out = vec![("All", rows.to_vec())];
        if let Some(c) = cutoff {
            let (pre, post): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.period.start_date() < c);
            for (label, part) in [(labels.0, pre), (labels.1, post)] {
                if !part.is_empty() {
                    out.push((label, part));
                }
            }
        }
        out
    }

    fn recall(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let model_cutoff = cfg.cutoff.model_cutoff;
        let base = CutoffDirective {
            model_cutoff,
            ..CutoffDirective::none()
        };
        let mut table = Table::new("recall", "Recall accuracy", &RECALL_HEADER);
        let mut direction_table = Table::new(
            "direction",
            "Direction accuracy",
            &["Series", "Segment", "Directional Accuracy (%)", "Num Obs", "Refusals"],
        );
        for s in &cfg.series {
            let series = self.load(s)?;
            let rows = self.numeric_audit(s, &series, &base, &format!("recall_{}", slug(&s.name)))?;
            for (label, part) in Self::segments(&rows, model_cutoff, ("Pre-cutoff", "Post-cutoff")) {
                self.summary_row(&mut table, &[&s.name, label], s, &part);
            }
            if s.direction {
                self.direction_audit(s, &series, &mut direction_table)?;
            }
        }
        self.bundle.tables.push(table);
        if !direction_table.rows.is_empty() {
            self.bundle.tables.push(direction_table);
        }
        if !cfg.relative.is_empty() {
            self.relative_audit()?;
        }
        if cfg.headlines.is_some() {
            self.headline_audit()?;
        }
        Ok(())
    }

    fn label_table_rows(
        &mut self,
        table: &mut Table,
        name: &str,
        keyed: &[(NaiveDate, bool, bool)],
    ) {
        let mut segs: Vec<(&str, Vec<(bool, bool)>)> = vec![("All", keyed.iter().map(|k| (k.1, k.2)).collect())];
        if let Some(c) = self.cfg.cutoff.model_cutoff {
            let pre: Vec<_> = keyed.iter().filter(|k| k.0 < c).map(|k| (k.1, k.2)).collect();
            let post: Vec<_> = keyed.iter().filter(|k| k.0 >= c).map(|k| (k.1, k.2)).collect();
            for (l, p) in [("Pre-cutoff", pre), ("Post-cutoff", post)] {
                if !p.is_empty() {
                    segs.push((l, p));
                }
            }
        }
        for (label, items) in segs {
            let answered: Vec<bool> = items.iter().filter(|(_, refused)| !refused).map(|(c, _)| *c).collect();
            let acc = (!answered.is_empty())
                .then(|| 100.0 * answered.iter().filter(|c| **c).count() as f64 / answered.len() as f64);
            table.push(vec![
                name.to_string(),
                label.to_string(),
                fmt_opt(acc, 2),
                answered.len().to_string(),
                (items.len() - answered.len()).to_string(),
            ]);
        }
    }

    fn direction_audit(&mut self, s: &SeriesConfig, series: &Series, table: &mut Table) -> Result<()> {
        let periods: Vec<PeriodKey> = self
            .periods(s, series)?
            .into_iter()
            .filter(|p| series.previous_value(p).is_some())
            .collect();
        let prompts = periods
            .iter()
            .map(|p| self.renderer.render_direction_relative(DirectionTask::Direction, &[&s.name], p))
            .collect::<Result<Vec<_>>>()?;
        let replies = self.ask(&prompts, false)?;
        let mut keyed = Vec::new();
        let mut records = Vec::new();
        for (p, reply) in periods.iter().zip(&replies) {
            let now = series.get(p).expect("period from series").value;
            let prev = series.previous_value(p).expect("filtered");
            let actual = if now > prev {
                "up"
            } else if now < prev {
                "down"
            } else {
                "flat"
            };
            let predicted = reply.answer_text.as_ref().map(|t| t.trim().to_ascii_lowercase());
            let refusal = reply.refusal || !matches!(predicted.as_deref(), Some("up") | Some("down"));
            let correct = !refusal && predicted.as_deref() == Some(actual);
            keyed.push((p.start_date(), correct, refusal));
            records.push(LabelRecord {
                task: "direction",
                key: format!("{} {p}", s.name),
                actual: actual.into(),
                predicted,
                correct,
                refusal,
                confidence: reply.confidence,
                raw_text: &reply.raw_text,
            });
        }
        self.bundle.add_rows(&format!("direction_{}", slug(&s.name)), &records);
        self.label_table_rows(table, &s.name, &keyed);
        Ok(())
    }

    /// Calendar-year return: last value of the year over the last value of the year before.
    fn annual_returns(series: &Series) -> BTreeMap<i32, f64> {
        let mut last: BTreeMap<i32, f64> = BTreeMap::new();
        for o in series.observations() {
            last.insert(o.period.year(), o.value);
        }
        last.iter()
            .filter_map(|(y, v)| last.get(&(y - 1)).filter(|p| **p != 0.0).map(|p| (*y, v / p - 1.0)))
            .collect()
    }

    fn relative_audit(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut table = Table::new(
            "relative",
            "Relative performance",
            &["Series", "Segment", "Directional Accuracy (%)", "Num Obs", "Refusals"],
        );
        for r in &cfg.relative {
            let a = self.load(cfg.series_config(&r.first).expect("validated"))?;
            let b = self.load(cfg.series_config(&r.second).expect("validated"))?;
            let (ra, rb) = (Self::annual_returns(&a), Self::annual_returns(&b));
            let years: Vec<i32> = if r.years.is_empty() {
                ra.keys().filter(|y| rb.contains_key(y)).copied().collect()
            } else {
                r.years.iter().filter(|y| ra.contains_key(y) && rb.contains_key(y)).copied().collect()
            };
            if years.len() < r.years.len() {
                self.bundle
                    .notes
                    .push(format!("{} vs {}: some requested years lack data and were skipped", r.first, r.second));
            }
            let prompts = years
                .iter()
                .map(|y| {
                    let p = PeriodKey::month(*y, 12)?;
                    self.renderer
                        .render_direction_relative(DirectionTask::Relative, &[&r.first, &r.second], &p)
                })
                .collect::<Result<Vec<_>>>()?;
            let replies = self.ask(&prompts, false)?;
            let pair = format!("{} vs {}", r.first, r.second);
            let mut keyed = Vec::new();
            let mut records = Vec::new();
            for (y, reply) in years.iter().zip(&replies) {
                let winner = if ra[y] >= rb[y] { &r.first } else { &r.second };
                let predicted = reply.answer_text.clone();
                let named = predicted
                    .as_deref()
                    .map(|t| t.trim())
                    .filter(|t| t.eq_ignore_ascii_case(&r.first) || t.eq_ignore_ascii_case(&r.second));
                let refusal = reply.refusal || named.is_none();
                let correct = named.is_some_and(|t| t.eq_ignore_ascii_case(winner));
                keyed.push((NaiveDate::from_ymd_opt(*y, 1, 1).expect("valid year"), correct, refusal));
                records.push(LabelRecord {
                    task: "relative",
                    key: format!("{pair} {y}"),
                    actual: winner.clone(),
                    predicted,
                    correct,
                    refusal,
                    confidence: reply.confidence,
                    raw_text: &reply.raw_text,
                });
            }
            self.bundle
                .add_rows(&format!("relative_{}_{}", slug(&r.first), slug(&r.second)), &records);
            self.label_table_rows(&mut table, &pair, &keyed);
        }
        self.bundle.tables.push(table);
        Ok(())
    }

    fn headline_audit(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let h = cfg.headlines.as_ref().expect("checked by caller");
        let records = load_text_records(&cfg.resolve(&h.path))?;
        let mut by_date: BTreeMap<NaiveDate, Vec<TextRecord>> = BTreeMap::new();
        for r in records {
            by_date.entry(r.date).or_default().push(r);
        }
        let level = match &h.level_series {
            Some(name) => Some((name.clone(), self.load(cfg.series_config(name).expect("validated"))?)),
            None => None,
        };
        let prompts = by_date
            .values()
            .map(|group| self.renderer.render_headline(group, level.as_ref().map(|(n, _)| n.as_str())))
            .collect::<Result<Vec<_>>>()?;
        let replies = self.ask(&prompts, false)?;
        let mut rows = Vec::new();
        for (date, reply) in by_date.keys().zip(&replies) {
            let next_close = level.as_ref().and_then(|(_, s)| {
                s.observations()
                    .iter()
                    .find(|o| o.period.start_date() > *date)
                    .map(|o| o.value)
            });
            rows.push(DateEvalRow {
                predicted: if reply.refusal { None } else { reply.answer_text.clone() },
                actual: *date,
                confidence: reply.confidence,
                estimated_level: if reply.refusal { None } else { reply.answer_numeric },
                actual_level: next_close,
            });
        }
        self.bundle.add_rows("headlines", &rows);

        let mut table = Table::new(
            "headlines",
            "Headline dating",
            &[
                "Segment",
                "Mean Days Difference",
                "Mean Absolute Days Difference",
                "Year Accuracy (%)",
                "Month-Year Accuracy (%)",
                "Exact Date Accuracy (%)",
                "Confidence Calibration",
                "MPE (%)",
                "MAPE (%)",
                "Num Obs",
                "Refusals",
            ],
        );
        let mut segs = vec![("All", rows.clone())];
        if let Some(c) = cfg.cutoff.model_cutoff {
            let (pre, post): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.actual < c);
            for (l, p) in [("Pre-cutoff", pre), ("Post-cutoff", post)] {
                if !p.is_empty() {
                    segs.push((l, p));
                }
            }
        }
        for (label, part) in segs {
            match summarize_dates(&part) {
                Ok(s) => table.push(vec![
                    label.into(),
                    format!("{:.2}", s.mean_days_diff),
                    format!("{:.2}", s.mean_abs_days_diff),
                    format!("{:.2}", s.year_accuracy),
                    format!("{:.2}", s.month_year_accuracy),
                    format!("{:.2}", s.exact_date_accuracy),
                    fmt_opt(s.confidence_calibration, 4),
                    fmt_opt(s.level_mpe, 2),
                    fmt_opt(s.level_mape, 2),
                    s.num_obs.to_string(),
                    s.refusals.to_string(),
                ]),
                Err(e) => {
                    self.bundle.notes.push(format!("headlines / {label}: {e}"));
                    let mut cells = vec![label.to_string()];
                    cells.extend(std::iter::repeat("-".to_string()).take(8));
                    cells.extend(["0".to_string(), part.len().to_string()]);
                    table.push(cells);
                }
            }
        }
        self.bundle.tables.push(table);
        Ok(())
    }

    fn cutoff(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let c = &cfg.cutoff;
        let selected: Vec<&SeriesConfig> = if c.series.is_empty() {
            cfg.series.iter().collect()
        } else {
            c.series.iter().map(|n| cfg.series_config(n).expect("validated")).collect()
        };
        let mut header = vec!["Series", "Directive"];
        header.extend_from_slice(&RECALL_HEADER[1..]);
        let mut table = Table::new("cutoff", "Fake knowledge cutoff comparison", &header);
        for s in selected {
            let series = self.load(s)?;
            for &mode in &c.modes {
                let directive = CutoffDirective {
                    mode,
                    fake_cutoff: c.fake_cutoff,
                    current_date: c.current_date,
                    model_cutoff: c.model_cutoff,
                };
                let label = directive_label(mode);
                let stem = format!("cutoff_{}_{label}", slug(&s.name));
                let rows = self.numeric_audit(s, &series, &directive, &stem)?;
                for (seg, part) in Self::segments(&rows, c.fake_cutoff, ("Before fake cutoff", "After fake cutoff")) {
                    self.summary_row(&mut table, &[&s.name, label, seg], s, &part);
                }
            }
        }
        self.bundle.tables.push(table);
        if let Some(f) = c.fake_cutoff {
            self.bundle.notes.push(format!(
                "Segments split at the fake cutoff {f}. Accuracy after the fake cutoff that matches accuracy before it indicates the instruction did not remove memorized knowledge."
            ));
        }
        Ok(())
    }

    fn mask(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let m = cfg.mask.as_ref().ok_or_else(|| Error::Config("no [mask] section in the configuration".into()))?;
        let records = load_text_records(&cfg.resolve(&m.path))?;
        let records: Vec<TextRecord> = records
            .into_iter()
            .filter(|r| {
                let keep = r.ticker.is_some();
                if !keep {
                    log::warn!("record {} has no ticker; skipped", r.record_id);
                }
                keep
            })
            .collect();
        if records.is_empty() {
            return Err(Error::Empty("no masking records with tickers".into()));
        }
        let industry = m.industry_map.as_ref().map(|p| load_industry_map(&cfg.resolve(p))).transpose()?;

        let mut anonymize = Vec::new();
        let mut identify = Vec::new();
        for r in &records {
            let (a, i) = self.renderer.render_masking_pair(&r.body)?;
            anonymize.push(a);
            identify.push(i);
        }
        let anonymized = self.ask(&anonymize, false)?;
        let pending: Vec<usize> = (0..records.len()).filter(|&i| !anonymized[i].refusal).collect();
        let prompts: Vec<PromptBundle> = pending
            .iter()
            .map(|&i| identify[i].fill(anonymized[i].answer_text.as_deref().unwrap_or_default()))
            .collect();
        let identified = self.ask(&prompts, false)?;
        let mut answers: Vec<Option<&ModelReply>> = vec![None; records.len()];
        for (k, &i) in pending.iter().enumerate() {
            answers[i] = Some(&identified[k]);
        }

        #[derive(Serialize)]
        struct MaskRecord<'a> {
            record_id: &'a str,
            actual_ticker: &'a str,
            actual_quarter: Option<u32>,
            actual_year: Option<i32>,
            anonymized: Option<&'a str>,
            identification: Option<&'a crate::gateway::Identification>,
            parse_status: Option<ParseStatus>,
            raw_text: Option<&'a str>,
        }
        let mut rows = Vec::new();
        let mut out = Vec::new();
        for (i, r) in records.iter().enumerate() {
            let reply = answers[i];
            let ident = reply.and_then(|a| a.identification.as_ref());
            rows.push(IdentEvalRow {
                predicted: ident.cloned(),
                actual_ticker: r.ticker.clone().expect("filtered"),
                actual_quarter: r.quarter,
                actual_year: r.year,
            });
            out.push(MaskRecord {
                record_id: &r.record_id,
                actual_ticker: r.ticker.as_deref().expect("filtered"),
                actual_quarter: r.quarter,
                actual_year: r.year,
                anonymized: anonymized[i].answer_text.as_deref(),
                identification: ident,
                parse_status: reply.map(|a| a.parse_status),
                raw_text: reply.map(|a| a.raw_text.as_str()),
            });
        }
        self.bundle.add_rows("mask", &out);

        let s = summarize_identification(&rows, industry.as_ref())?;
        let mut t = Table::new(
            "mask_reconstruction",
            "Masked-text reconstruction",
            &[
                "Firm Accuracy (%)",
                "FF5 Industry Accuracy (%)",
                "FF10 Industry Accuracy (%)",
                "Year Accuracy (%)",
                "Quarter-Year Accuracy (%)",
                "Mean Years Difference",
                "Mean Absolute Years Difference",
                "Num Obs",
            ],
        );
        t.push(vec![
            format!("{:.2}", s.firm_accuracy),
            fmt_opt(s.ff5_accuracy, 2),
            fmt_opt(s.ff10_accuracy, 2),
            fmt_opt(s.year_accuracy, 2),
            fmt_opt(s.quarter_year_accuracy, 2),
            fmt_opt(s.mean_years_diff, 2),
            fmt_opt(s.mean_abs_years_diff, 2),
            s.num_obs.to_string(),
        ]);
        self.bundle.tables.push(t);

        let mut panel: BTreeMap<String, usize> = BTreeMap::new();
        for r in &records {
            *panel.entry(r.ticker.clone().expect("filtered").to_ascii_uppercase()).or_default() += 1;
        }
        let panel: Vec<(String, usize)> = panel.into_iter().collect();
        let b = baseline_rates(&panel, &m.fixed_ticker)?;
        let mut t = Table::new("mask_baselines", "Identification baselines", &["Baseline", "Accuracy (%)", "Num Unique Firms"]);
        t.push(vec!["Random".into(), format!("{:.2}", b.random), b.num_unique_firms.to_string()]);
        t.push(vec![
            format!("Most News ({})", b.most_news_ticker),
            format!("{:.2}", b.most_news),
            b.num_unique_firms.to_string(),
        ]);
        t.push(vec![
            format!("Fixed ({})", m.fixed_ticker.to_ascii_uppercase()),
            format!("{:.2}", b.fixed),
            b.num_unique_firms.to_string(),
        ]);
        self.bundle.tables.push(t);

        let epsilon = m.epsilon.unwrap_or_else(|| default_epsilon(b.random));
        let skill = m.skill.unwrap_or(m.skill_baseline);
        let n = m.skill_n.unwrap_or(records.len());
        let v = masking_validity(s.firm_accuracy, epsilon, skill, m.skill_baseline, n, m.alpha)?;
        let mut t = Table::new(
            "mask_validity",
            "Masking validity",
            &[
                "Reconstruction Rate (%)",
                "Epsilon (%)",
                "Future-Invariance Refuted",
                "Skill (%)",
                "Skill Baseline (%)",
                "Binomial p-value",
                "Detectable Skill",
            ],
        );
        t.push(vec![
            format!("{:.2}", s.firm_accuracy),
            format!("{epsilon:.2}"),
            if v.future_invariance_refuted { "yes" } else { "no" }.into(),
            if m.skill.is_some() { format!("{skill:.2}") } else { "-".into() },
            format!("{:.2}", m.skill_baseline),
            if m.skill.is_some() { format!("{:.4}", v.skill_p_value) } else { "-".into() },
            if m.skill.is_none() {
                "-".into()
            } else if v.detectable_skill {
                "yes".into()
            } else {
                "no".into()
            },
        ]);
        self.bundle.tables.push(t);
        self.bundle.notes.push(v.note);
        if m.skill.is_none() {
            self.bundle
                .notes
                .push("No downstream skill was configured; the skill test is not reported.".into());
        }
        Ok(())
    }

    fn embed(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let e = cfg.embed.as_ref().ok_or_else(|| Error::Config("no [embed] section in the configuration".into()))?;
        let s = cfg.series_config(&e.series).expect("validated");
        let series = self.load(s)?;
        let periods = self.periods(s, &series)?;
        let y: Vec<f64> = periods.iter().map(|p| series.get(p).expect("period").value).collect();
        let five_years = match s.frequency {
            Frequency::Monthly => 60,
            Frequency::Quarterly => 20,
            Frequency::Daily => 0,
        };
        let scheme = e.scheme.unwrap_or(Scheme::Rolling { window: five_years });
        let benchmark_window = e.benchmark_window.unwrap_or(five_years);
        let probe_cfg = ProbeConfig {
            lambda: e.lambda,
            scheme,
            seed: cfg.seed.unwrap_or(0),
            l2_normalize: e.l2_normalize,
        };

        let mut texts = Vec::with_capacity(2 * periods.len());
        for p in &periods {
            texts.push(self.renderer.render_embed_probe(&e.variable_phrase, p, true)?);
        }
        for p in &periods {
            texts.push(self.renderer.render_embed_probe(&e.variable_phrase, p, false)?);
        }
        let model = cfg.provider.embedding_model_id.clone().expect("validated");
        for t in &texts {
            self.bundle.digests.insert(embedding_digest(&model, t));
        }
        let all = self.gateway().embed(&model, &texts)?;
        let rows = all.to_rows();
        let n = periods.len();
        let value = Matrix::from_rows(&rows[..n])?;
        let date_only = Matrix::from_rows(&rows[n..])?;
        self.bundle.extra_files.push(("embeddings/probe.bin".into(), all.to_bytes()?));
        self.bundle.extra_files.push(("embeddings/probe_manifest.csv".into(), all.manifest_csv()));

        let mut variants: Vec<(&str, Matrix)> = vec![("Date and Variable", value.clone()), ("Date Only", date_only.clone())];
        if e.placebos {
            let seed = cfg.seed.expect("validated");
            let p = make_placebos(&value, seed)?;
            variants.push(("Shuffled Date and Variable", p.shuffled));
            variants.push(("Random Numerical Vectors", p.random));
        }

        let mut table = Table::new(
            "embed_probe",
            "Embedding probes",
            &["Embedding Type", "Corr (Model)", "Corr (SMA)", "Corr (Model, SMA)", "Williams t", "p-value", "Num Predictions"],
        );
        #[derive(Serialize)]
        struct ProbeRecord<'a> {
            embedding: &'a str,
            period: PeriodKey,
            actual: f64,
            model: f64,
            sma: f64,
        }
        let mut records = Vec::new();
        for (name, x) in &variants {
            let r = probe_report(x, &y, &probe_cfg, benchmark_window)?;
            table.push(vec![
                name.to_string(),
                fmt_opt(r.corr_model, 4),
                fmt_opt(r.corr_benchmark, 4),
                fmt_opt(r.corr_model_benchmark, 4),
                fmt_opt(r.williams.map(|w| w.t), 2),
                fmt_opt(r.williams.map(|w| w.p_two_sided), 4),
                r.n_predicted.to_string(),
            ]);
            for &t in &r.common {
                records.push(ProbeRecord {
                    embedding: name,
                    period: periods[t],
                    actual: y[t],
                    model: r.predictions[t].expect("common"),
                    sma: r.benchmark[t].expect("common"),
                });
            }
            for note in r.notes {
                if !self.bundle.notes.contains(&note) {
                    self.bundle.notes.push(note);
                }
            }
        }
        self.bundle.tables.push(table);
        self.bundle.add_rows("embed_probe", &records);

        let mut cos = Table::new(
            "embed_cosine",
            "Cosine similarity to value embeddings",
            &["Comparison", "Mean Cosine Similarity", "t-stat", "Num Obs"],
        );
        for (name, x) in variants.iter().skip(1) {
            if x.cols() != value.cols() {
                continue;
            }
            let c = cosine_report(&value, x)?;
            cos.push(vec![
                format!("Date and Variable vs {name}"),
                format!("{:.4}", c.mean),
                fmt_opt(c.paired_t, 2),
                c.cosines.len().to_string(),
            ]);
        }
        self.bundle.tables.push(cos);
        if e.l2_normalize {
            self.bundle.notes.push("Embedding rows were L2-normalized before fitting.".into());
        } else {
            self.bundle.notes.push("Embedding rows were used as returned, without normalization.".into());
        }
        Ok(())
    }

    fn power(&mut self) -> Result<()> {
        let pw = self
            .cfg
            .power
            .as_ref()
            .ok_or_else(|| Error::Config("no [power] section in the configuration".into()))?;
        let mut curve = Table::new("power_curve", "Power of the pre/post accuracy-gap test", &["Delta", "Power"]);
        for &delta in &pw.deltas {
            let p = power_two_prop(&PowerSpec { delta, p_post: pw.p_post, n_post: pw.n_post, alpha: pw.alpha })?;
            curve.push(vec![format!("{delta:.4}"), format!("{p:.4}")]);
        }
        let gap = min_detectable_gap(pw.n_post, pw.p_post, pw.alpha, pw.target_power)?;
        let mut mdg = Table::new(
            "power_min_gap",
            "Minimum detectable accuracy gap",
            &["Num Obs (post)", "Accuracy (post)", "Alpha", "Target Power", "Standard Error", "Minimum Detectable Gap"],
        );
        mdg.push(vec![
            pw.n_post.to_string(),
            format!("{:.4}", pw.p_post),
            format!("{:.4}", pw.alpha),
            format!("{:.4}", pw.target_power),
            format!("{:.4}", gap_standard_error(pw.p_post, pw.n_post)),
            format!("{gap:.4}"),
        ]);
        self.bundle.tables.push(curve);
        self.bundle.tables.push(mdg);
        self.bundle.notes.push(format!(
            "With {} post-cutoff observations at accuracy {:.2}, a one-sided test at alpha {} detects a gap of {gap:.4} with power {}.",
            pw.n_post, pw.p_post, pw.alpha, pw.target_power
        ));
        Ok(())
    }

    fn theory(&mut self) -> Result<()> {
        let t = self.cfg.theory.clone().unwrap_or_default();
        let labels = LabelSet::new(t.labels.clone())?;
        let observed = t.observed.clone().unwrap_or_else(|| labels.labels()[0].clone());

        let mut worlds = Table::new(
            "theory_worlds",
            "Observationally equivalent worlds",
            &[
                "Observed",
                "Counterfactual (world 1)",
                "Counterfactual (world 2)",
                "Constrained Output (world 1)",
                "Constrained Output (world 2)",
                "Observables Identical",
                "Future-Invariant (world 1)",
                "Future-Invariant (world 2)",
            ],
        );
        #[derive(Serialize)]
        struct Pair {
            y_obs: String,
            y_star: String,
            y_dagger: String,
            world_star: crate::theory::World,
            world_dagger: crate::theory::World,
        }
        let mut pairs = Vec::new();
        for a in labels.labels() {
            for b in labels.labels() {
                if a == b {
                    continue;
                }
                let (ws, wd) = construct_equivalent_worlds(&labels, &observed, a, b)?;
                worlds.push(vec![
                    observed.clone(),
                    ws.counterfactual_decision(DEMO_TASK)?,
                    wd.counterfactual_decision(DEMO_TASK)?,
                    ws.constrained_decision(DEMO_TASK, CONSTRAINT_PROMPT)?,
                    wd.constrained_decision(DEMO_TASK, CONSTRAINT_PROMPT)?,
                    if ws.observables()? == wd.observables()? { "yes" } else { "no" }.into(),
                    if future_invariance_check(&ws, DEMO_TASK)? { "yes" } else { "no" }.into(),
                    if future_invariance_check(&wd, DEMO_TASK)? { "yes" } else { "no" }.into(),
                ]);
                pairs.push(Pair {
                    y_obs: observed.clone(),
                    y_star: a.clone(),
                    y_dagger: b.clone(),
                    world_star: ws,
                    world_dagger: wd,
                });
            }
        }
        let mut ident = Table::new("theory_identified_set", "Identified set", &["Observed", "Identified Set", "Num Labels"]);
        for y in labels.labels() {
            let set = identified_set(&labels, y)?;
            ident.push(vec![y.clone(), set.join(" "), set.len().to_string()]);
        }
        self.bundle.tables.push(worlds);
        self.bundle.tables.push(ident);
        self.bundle.add_rows("theory_worlds", &pairs);
        if let Some(first) = pairs.first() {
            self.bundle.add_json(
                "theory/worlds.json",
                &serde_json::json!({"world_star": first.world_star, "world_dagger": first.world_dagger}),
            );
        }
        if labels.len() > 1 {
            let other = labels.labels().iter().find(|l| **l != observed).expect("two labels");
            let ft = fine_tuning_worlds(&labels, &observed, &observed, other)?;
            let same = ft.suppression.observables()? == ft.forgetting.observables()?;
            self.bundle.add_json("theory/fine_tuning_worlds.json", &ft);
            self.bundle.notes.push(format!(
                "Fine-tuning: a world that suppresses '{observed}' and a world that forgot it in favor of '{other}' have {} observables.",
                if same { "identical" } else { "different" }
            ));
        }
        self.bundle.notes.push(
            "Every constructed pair gives identical observable outputs but different counterfactual answers, so the constrained output carries no information about the counterfactual answer."
                .into(),
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("US GDP growth rate"), "us_gdp_growth_rate");
        assert_eq!(slug("S&P 500"), "s_p_500");
        assert_eq!("theory-demo".parse::<Subcommand>().unwrap(), Subcommand::TheoryDemo);
        assert!("nope".parse::<Subcommand>().is_err());
    }

    #[test]
    fn annual_returns_use_year_end_values() {
        use crate::dataset::{Observation, SeriesKind, SeriesSpec};
        let spec = SeriesSpec::new("x", SeriesKind::Level, Frequency::Monthly);
        let obs = vec![
            Observation::new(PeriodKey::month(2000, 6).unwrap(), 50.0),
            Observation::new(PeriodKey::month(2000, 12).unwrap(), 100.0),
            Observation::new(PeriodKey::month(2001, 12).unwrap(), 110.0),
        ];
        let r = Audit::annual_returns(&Series::new(spec, obs).unwrap());
        assert_eq!(r.len(), 1);
        assert!((r[&2001] - 0.1).abs() < 1e-12);
    }
}
