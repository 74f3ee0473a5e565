//! Elicitation prompt rendering.
//!
//! Every template is a plain-text file with `{name}` placeholders. The
//! built-in set is compiled in; a directory of same-named `.txt` files can
//! override any of them, and the override set is fingerprinted so replay
//! caches never mix replies obtained under different wording.
//!
//! Rendering is a pure function of its inputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{NumberStyle, Observation, SeriesKind, SeriesSpec, TextRecord};
use crate::error::{Error, Result};
use crate::period::{Frequency, PeriodKey, MONTH_NAMES};

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../templates/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "system_recall",
    "system_post_cutoff",
    "system_fake_cutoff",
    "system_fake_cutoff_no_date",
    "user_fake_cutoff",
    "user_rolling_cutoff",
    "context_closing_price",
    "context_headlines",
    "question_daily_close",
    "question_monthly",
    "question_quarterly",
    "question_end_of_month",
    "question_stock_close",
    "question_direction",
    "question_pct_change",
    "question_relative",
    "question_headline_date",
    "question_headline_level",
    "instruction_numeric",
    "instruction_numeric_percent",
    "instruction_direction",
    "instruction_relative",
    "instruction_date",
    "instruction_date_level",
    "mask_anonymize",
    "mask_identify",
    "econ_logic",
    "embed_probe",
    "embed_probe_date_only",
];

/// Placeholder left in identification prompts until the anonymized text is known.
pub const ANONYMIZED_HOLE: &str = "{anonymized}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSchema {
    NumericJson,
    DirectionJson,
    DateJson,
    DateAndLevelJson,
    IdentificationLine,
    FreeText,
}

impl AnswerSchema {
    pub fn tag(self) -> &'static str {
        match self {
            AnswerSchema::NumericJson => "numeric_json",
            AnswerSchema::DirectionJson => "direction_json",
            AnswerSchema::DateJson => "date_json",
            AnswerSchema::DateAndLevelJson => "date_and_level_json",
            AnswerSchema::IdentificationLine => "identification_line",
            AnswerSchema::FreeText => "free_text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_message: String,
    pub user_message: String,
    pub answer_schema: AnswerSchema,
    pub task_tag: String,
}

/// Question wording used for a recall series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallTemplate {
    /// "What was the {name} closing value on {date}?" (daily index levels)
    DailyClose,
    /// "What was the {name} in {month}, {year}?"
    Monthly,
    /// "What was the {name} in {quarter} {year}?"
    Quarterly,
    /// "What was the {name} on {end-of-month date}?"
    EndOfMonth,
    /// "What was the closing price of {ticker} on {end-of-month date}?"
    StockClose,
}

impl RecallTemplate {
    pub fn for_spec(spec: &SeriesSpec) -> Result<Self> {
        let template = match spec.template {
            Some(t) => t,
            None => match (spec.frequency, spec.kind) {
                (Frequency::Daily, SeriesKind::Level) => RecallTemplate::DailyClose,
                (Frequency::Monthly, _) => RecallTemplate::Monthly,
                (Frequency::Quarterly, SeriesKind::Rate) => RecallTemplate::Quarterly,
                (freq, kind) => {
                    return Err(Error::invalid(format!(
                        "no recall template for a {freq} {kind:?} series ({})",
                        spec.name
                    )))
                }
            },
        };
        let expected = match template {
            RecallTemplate::DailyClose => Frequency::Daily,
            RecallTemplate::Quarterly => Frequency::Quarterly,
            RecallTemplate::Monthly | RecallTemplate::EndOfMonth | RecallTemplate::StockClose => {
                Frequency::Monthly
            }
        };
        if expected != spec.frequency {
            return Err(Error::invalid(format!(
                "template {template:?} requires a {expected} series, {} is {}",
                spec.name, spec.frequency
            )));
        }
        Ok(template)
    }

    fn tag(self) -> &'static str {
        match self {
            RecallTemplate::DailyClose => "recall.daily_close",
            RecallTemplate::Monthly => "recall.monthly",
            RecallTemplate::Quarterly => "recall.quarterly",
            RecallTemplate::EndOfMonth => "recall.end_of_month",
            RecallTemplate::StockClose => "recall.stock_close",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    #[default]
    None,
    Both,
    SystemOnly,
    UserOnly,
    Rolling,
}

/// Knowledge-cutoff instructions applied on top of a rendered prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CutoffDirective {
    pub mode: CutoffMode,
    /// Artificial cutoff for the fixed modes.
    #[serde(default)]
    pub fake_cutoff: Option<NaiveDate>,
    /// "Current date" stated alongside a fake cutoff in the system message.
    #[serde(default)]
    pub current_date: Option<NaiveDate>,
    /// The model's real training cutoff; queries on or after it get the
    /// extended post-cutoff system message.
    #[serde(default)]
    pub model_cutoff: Option<NaiveDate>,
}

impl CutoffDirective {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn fixed(mode: CutoffMode, fake_cutoff: NaiveDate) -> Self {
        CutoffDirective {
            mode,
            fake_cutoff: Some(fake_cutoff),
            ..Self::default()
        }
    }

    pub fn rolling() -> Self {
        CutoffDirective {
            mode: CutoffMode::Rolling,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionTask {
    Direction,
    PctChange,
    Relative,
}

/// Template set: built-ins plus optional overrides.
#[derive(Debug, Clone)]
pub struct Templates {
    texts: BTreeMap<String, String>,
    overrides: BTreeMap<String, String>,
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            texts: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), strip_final_newline(v).to_string()))
                .collect(),
            overrides: BTreeMap::new(),
        }
    }
}

impl Templates {
    /// Loads `<name>.txt` overrides from `dir`. Unknown names are rejected.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut templates = Templates::default();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            if !templates.texts.contains_key(&name) {
                return Err(Error::Config(format!("unknown template override '{name}'")));
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let text = strip_final_newline(&text).to_string();
            templates.texts.insert(name.clone(), text.clone());
            templates.overrides.insert(name, text);
        }
        Ok(templates)
    }

    pub fn get(&self, name: &str) -> &str {
        self.texts
            .get(name)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("template {name} is not registered"))
    }

    /// SHA-256 over the overridden templates; empty string when none are overridden.
    pub fn override_hash(&self) -> String {
        if self.overrides.is_empty() {
            return String::new();
        }
        let mut hasher = Sha256::new();
        for (name, text) in &self.overrides {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
            hasher.update((text.len() as u64).to_le_bytes());
            hasher.update(text.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// SHA-256 of every effective template, for run manifests.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, text) in &self.texts {
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
        }
        hex::encode(hasher.finalize())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.texts.keys().map(String::as_str)
    }

    /// Substitutes `{name}` placeholders in a single pass. Inserted values are
    /// never rescanned; braces that do not enclose an identifier are literal.
    pub fn fill(&self, name: &str, values: &[(&str, &str)]) -> Result<String> {
        fill_placeholders(self.get(name), values)
            .map_err(|key| Error::Config(format!("template {name} has unbound placeholder {{{key}}}")))
    }
}

fn fill_placeholders(template: &str, values: &[(&str, &str)]) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let key = close.map(|c| &after[..c]);
        match key {
            Some(k) if !k.is_empty() && k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') => {
                let value = values
                    .iter()
                    .find(|(name, _)| *name == k)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| k.to_string())?;
                out.push_str(value);
                rest = &after[k.len() + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// "March 15, 2019"
pub fn long_date(d: NaiveDate) -> String {
    format!("{} {}, {}", MONTH_NAMES[d.month0() as usize], d.day(), d.year())
}

/// "December 31st, 2010"
pub fn ordinal_date(d: NaiveDate) -> String {
    let day = d.day();
    let suffix = match (day % 10, day % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{} {day}{suffix}, {}", MONTH_NAMES[d.month0() as usize], d.year())
}

fn month_name(period: &PeriodKey) -> &'static str {
    MONTH_NAMES[period.start_date().month0() as usize]
}

fn quarter_label(period: &PeriodKey) -> String {
    format!("Q{}", (period.start_date().month0() / 3) + 1)
}

/// How a period is named inside a prompt sentence.
fn period_phrase(period: &PeriodKey, end_of_month: bool) -> String {
    match period {
        PeriodKey::Day(d) => long_date(*d),
        PeriodKey::Month { .. } if end_of_month => long_date(period.end_date()),
        PeriodKey::Month { year, .. } => format!("{}, {year}", month_name(period)),
        PeriodKey::Quarter { year, .. } => format!("{} {year}", quarter_label(period)),
    }
}

/// The phrase completing "restrict your knowledge pool to ...".
fn restriction_phrase(cutoff: NaiveDate) -> String {
    if cutoff.month() == 12 && cutoff.day() == 31 {
        format!("the end of {}", cutoff.year())
    } else {
        ordinal_date(cutoff)
    }
}

fn join_sections(sections: &[&str]) -> String {
    sections
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders every prompt family from a template set.
#[derive(Debug, Clone, Default)]
pub struct PromptRenderer {
    templates: Templates,
}

impl PromptRenderer {
    pub fn new(templates: Templates) -> Self {
        PromptRenderer { templates }
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    fn system_recall(&self) -> String {
        self.templates.get("system_recall").to_string()
    }

    /// "Context: The closing price of X was p2 on d2 and p1 on d1." with the
    /// most recent observation first. Empty when there is no history.
    pub fn render_context(
        &self,
        data_name: &str,
        context: &[Observation],
        style: NumberStyle,
        end_of_month: bool,
    ) -> Result<String> {
        if context.is_empty() {
            return Ok(String::new());
        }
        let items: Vec<String> = context
            .iter()
            .rev()
            .map(|o| format!("{} on {}", style.format(o.value), period_phrase(&o.period, end_of_month)))
            .collect();
        let prices = match items.as_slice() {
            [one] => one.clone(),
            [init @ .., last] => format!("{} and {last}", init.join(", ")),
            [] => unreachable!(),
        };
        self.templates
            .fill("context_closing_price", &[("data_name", data_name), ("prices", &prices)])
    }

    pub fn render_recall(
        &self,
        spec: &SeriesSpec,
        period: &PeriodKey,
        context: &[Observation],
        directive: &CutoffDirective,
    ) -> Result<PromptBundle> {
        let template = RecallTemplate::for_spec(spec)?;
        if period.frequency() != spec.frequency {
            return Err(Error::invalid(format!(
                "period {period} does not match the {} frequency of {}",
                spec.frequency, spec.name
            )));
        }
        let name = spec.name.as_str();
        let year = period.year().to_string();
        let question = match template {
            RecallTemplate::DailyClose => self.templates.fill(
                "question_daily_close",
                &[("data_name", name), ("date", &period_phrase(period, false))],
            )?,
            RecallTemplate::Monthly => self.templates.fill(
                "question_monthly",
                &[("data_name", name), ("month", month_name(period)), ("year", &year)],
            )?,
            RecallTemplate::Quarterly => self.templates.fill(
                "question_quarterly",
                &[("data_name", name), ("quarter", &quarter_label(period)), ("year", &year)],
            )?,
            RecallTemplate::EndOfMonth => self.templates.fill(
                "question_end_of_month",
                &[("data_name", name), ("date", &long_date(period.end_date()))],
            )?,
            RecallTemplate::StockClose => self.templates.fill(
                "question_stock_close",
                &[("data_name", name), ("date", &long_date(period.end_date()))],
            )?,
        };
        let instruction = match spec.kind {
            SeriesKind::Rate => self.templates.get("instruction_numeric_percent"),
            SeriesKind::Level => self.templates.get("instruction_numeric"),
        };
        let end_of_month = matches!(template, RecallTemplate::EndOfMonth | RecallTemplate::StockClose);
        let context = self.render_context(name, context, spec.number_style, end_of_month)?;
        let bundle = PromptBundle {
            system_message: self.system_recall(),
            user_message: join_sections(&[&context, &question, instruction]),
            answer_schema: AnswerSchema::NumericJson,
            task_tag: template.tag().to_string(),
        };
        self.apply_cutoff_directive(&bundle, directive, Some(period.start_date()))
    }

    pub fn render_direction_relative(
        &self,
        task: DirectionTask,
        names: &[&str],
        period: &PeriodKey,
    ) -> Result<PromptBundle> {
        let expected = if task == DirectionTask::Relative { 2 } else { 1 };
        if names.len() != expected {
            return Err(Error::invalid(format!(
                "{task:?} prompts take {expected} series name(s), got {}",
                names.len()
            )));
        }
        let year = period.year().to_string();
        let (question, instruction, schema, tag) = match task {
            DirectionTask::Direction => (
                self.templates.fill(
                    "question_direction",
                    &[("data_name", names[0]), ("month", month_name(period)), ("year", &year)],
                )?,
                self.templates.get("instruction_direction").to_string(),
                AnswerSchema::DirectionJson,
                "direction.monthly",
            ),
            DirectionTask::PctChange => (
                self.templates.fill(
                    "question_pct_change",
                    &[("data_name", names[0]), ("month", month_name(period)), ("year", &year)],
                )?,
                self.templates.get("instruction_numeric").to_string(),
                AnswerSchema::NumericJson,
                "direction.pct_change",
            ),
            DirectionTask::Relative => {
                let pair = [("data_name", names[0]), ("data_name2", names[1]), ("year", year.as_str())];
                (
                    self.templates.fill("question_relative", &pair)?,
                    self.templates.fill("instruction_relative", &pair)?,
                    AnswerSchema::DirectionJson,
                    "direction.relative",
                )
            }
        };
        Ok(PromptBundle {
            system_message: self.system_recall(),
            user_message: join_sections(&[&question, &instruction]),
            answer_schema: schema,
            task_tag: tag.to_string(),
        })
    }

    /// Same-day headline prompt. With `level_index` set, the model is also
    /// asked for that index's next-trading-day close.
    pub fn render_headline(&self, records: &[TextRecord], level_index: Option<&str>) -> Result<PromptBundle> {
        let first = records
            .first()
            .ok_or_else(|| Error::Empty("headline group".into()))?;
        if let Some(other) = records.iter().find(|r| r.date != first.date) {
            return Err(Error::invalid(format!(
                "headline group mixes dates {} and {}",
                first.date, other.date
            )));
        }
        let lines: Vec<String> = records
            .iter()
            .map(|r| match &r.title {
                Some(title) => format!("{title}: {}", r.body),
                None => r.body.clone(),
            })
            .collect();
        let context = self
            .templates
            .fill("context_headlines", &[("headlines", &lines.join("\n"))])?;
        let (question, instruction, schema, tag) = match level_index {
            None => (
                self.templates.get("question_headline_date").to_string(),
                self.templates.get("instruction_date"),
                AnswerSchema::DateJson,
                "headline.date",
            ),
            Some(index) => (
                self.templates
                    .fill("question_headline_level", &[("data_name", index)])?,
                self.templates.get("instruction_date_level"),
                AnswerSchema::DateAndLevelJson,
                "headline.date_and_level",
            ),
        };
        Ok(PromptBundle {
            system_message: self.system_recall(),
            user_message: join_sections(&[&context, &question, instruction]),
            answer_schema: schema,
            task_tag: tag.to_string(),
        })
    }

    /// Entity-neutering prompt for `body` and the identification prompt that
    /// will receive the anonymized text.
    pub fn render_masking_pair(&self, body: &str) -> Result<(PromptBundle, IdentifyTemplate)> {
        if body.trim().is_empty() {
            return Err(Error::invalid("masking body is empty"));
        }
        let anonymize = PromptBundle {
            system_message: String::new(),
            user_message: self.templates.fill("mask_anonymize", &[("body", body)])?,
            answer_schema: AnswerSchema::FreeText,
            task_tag: "mask.anonymize".into(),
        };
        let identify = IdentifyTemplate {
            bundle: PromptBundle {
                system_message: String::new(),
                user_message: self
                    .templates
                    .fill("mask_identify", &[("anonymized", ANONYMIZED_HOLE)])?,
                answer_schema: AnswerSchema::IdentificationLine,
                task_tag: "mask.identify".into(),
            },
        };
        Ok((anonymize, identify))
    }

    pub fn render_econ_logic(&self, headline: &str) -> Result<PromptBundle> {
        if headline.trim().is_empty() {
            return Err(Error::invalid("headline is empty"));
        }
        Ok(PromptBundle {
            system_message: String::new(),
            user_message: self.templates.fill("econ_logic", &[("headline", headline)])?,
            answer_schema: AnswerSchema::FreeText,
            task_tag: "mask.econ_logic".into(),
        })
    }

    /// Probe sentence stopping right before the value, or the date-only placebo.
    pub fn render_embed_probe(&self, variable_phrase: &str, period: &PeriodKey, include_variable: bool) -> Result<String> {
        let when = match period {
            PeriodKey::Month { year, .. } => format!("{} {year}", month_name(period)),
            other => period_phrase(other, false),
        };
        if include_variable {
            self.templates
                .fill("embed_probe", &[("period", &when), ("variable", variable_phrase)])
        } else {
            self.templates.fill("embed_probe_date_only", &[("period", &when)])
        }
    }

    /// Applies a knowledge-cutoff directive. `query_date` is the date being
    /// asked about (first day of the period for monthly/quarterly queries).
    pub fn apply_cutoff_directive(
        &self,
        bundle: &PromptBundle,
        directive: &CutoffDirective,
        query_date: Option<NaiveDate>,
    ) -> Result<PromptBundle> {
        let post_cutoff = matches!((directive.model_cutoff, query_date), (Some(c), Some(q)) if q >= c);
        let base_system = if post_cutoff {
            self.templates.get("system_post_cutoff").to_string()
        } else {
            self.system_recall()
        };
        let fake = || {
            directive.fake_cutoff.ok_or_else(|| {
                Error::invalid(format!("cutoff mode {:?} needs a fake cutoff date", directive.mode))
            })
        };
        let fake_system = |cutoff: NaiveDate| -> Result<String> {
            let cutoff_text = ordinal_date(cutoff);
            match directive.current_date {
                Some(now) => self.templates.fill(
                    "system_fake_cutoff",
                    &[("fake_cutoff", &cutoff_text), ("current_date", &ordinal_date(now))],
                ),
                None => self
                    .templates
                    .fill("system_fake_cutoff_no_date", &[("fake_cutoff", &cutoff_text)]),
            }
        };
        let restricted_user = |cutoff: NaiveDate| -> Result<String> {
            let prefix = self
                .templates
                .fill("user_fake_cutoff", &[("restriction", &restriction_phrase(cutoff))])?;
            Ok(format!("{prefix}\n{}", bundle.user_message))
        };

        let mut out = bundle.clone();
        match directive.mode {
            CutoffMode::None => out.system_message = base_system,
            CutoffMode::Both => {
                let cutoff = fake()?;
                out.system_message = fake_system(cutoff)?;
                out.user_message = restricted_user(cutoff)?;
            }
            CutoffMode::SystemOnly => out.system_message = fake_system(fake()?)?,
            CutoffMode::UserOnly => {
                out.system_message = base_system;
                out.user_message = restricted_user(fake()?)?;
            }
            CutoffMode::Rolling => {
                let query = query_date
                    .ok_or_else(|| Error::invalid("rolling cutoff needs the queried date"))?;
                let day_before = query - Duration::days(1);
                let prefix = self
                    .templates
                    .fill("user_rolling_cutoff", &[("date", &long_date(day_before))])?;
                out.system_message = base_system;
                out.user_message = format!("{prefix}\n{}", bundle.user_message);
            }
        }
        Ok(out)
    }
}

/// Identification prompt awaiting the anonymized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifyTemplate {
    pub bundle: PromptBundle,
}

impl IdentifyTemplate {
    pub fn fill(&self, anonymized: &str) -> PromptBundle {
        let mut bundle = self.bundle.clone();
        bundle.user_message = bundle.user_message.replacen(ANONYMIZED_HOLE, anonymized, 1);
        bundle
    }
}

fn default_renderer() -> &'static PromptRenderer {
    static RENDERER: OnceLock<PromptRenderer> = OnceLock::new();
    RENDERER.get_or_init(PromptRenderer::default)
}

pub fn render_recall(
    spec: &SeriesSpec,
    period: &PeriodKey,
    context: &[Observation],
    directive: &CutoffDirective,
) -> Result<PromptBundle> {
    default_renderer().render_recall(spec, period, context, directive)
}

pub fn render_direction_relative(task: DirectionTask, names: &[&str], period: &PeriodKey) -> Result<PromptBundle> {
    default_renderer().render_direction_relative(task, names, period)
}

pub fn render_headline(records: &[TextRecord], level_index: Option<&str>) -> Result<PromptBundle> {
    default_renderer().render_headline(records, level_index)
}

pub fn render_masking_pair(body: &str) -> Result<(PromptBundle, IdentifyTemplate)> {
    default_renderer().render_masking_pair(body)
}

pub fn render_econ_logic(headline: &str) -> Result<PromptBundle> {
    default_renderer().render_econ_logic(headline)
}

pub fn render_embed_probe(variable_phrase: &str, period: &PeriodKey, include_variable: bool) -> Result<String> {
    default_renderer().render_embed_probe(variable_phrase, period, include_variable)
}

pub fn apply_cutoff_directive(
    bundle: &PromptBundle,
    directive: &CutoffDirective,
    query_date: Option<NaiveDate>,
) -> Result<PromptBundle> {
    default_renderer().apply_cutoff_directive(bundle, directive, query_date)
}
