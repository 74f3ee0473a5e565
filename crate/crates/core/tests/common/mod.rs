//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use memaudit::dataset::{NumberStyle, Observation, SeriesKind, SeriesSpec, TextRecord};
use memaudit::period::{Frequency, PeriodKey};
use memaudit::prompts::{
    render_direction_relative, render_econ_logic, render_embed_probe, render_headline, render_masking_pair,
    render_recall, CutoffDirective, CutoffMode, DirectionTask, PromptBundle, RecallTemplate,
};

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

pub fn fixtures_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures")
}

fn show(b: &PromptBundle) -> String {
    format!("[system]\n{}\n[user]\n{}\n", b.system_message, b.user_message)
}

fn gdp() -> SeriesSpec {
    SeriesSpec::new("earliest estimate of the US GDP growth rate", SeriesKind::Rate, Frequency::Quarterly)
}

fn fake(mode: CutoffMode) -> CutoffDirective {
    CutoffDirective {
        current_date: Some(date(2023, 10, 1)),
        ..CutoffDirective::fixed(mode, date(2010, 12, 31))
    }
}

/// Every prompt family rendered on fixed inputs, keyed by golden file stem.
pub fn golden_cases() -> Vec<(&'static str, String)> {
    let q = PeriodKey::quarter(2012, 2).unwrap();
    let m = PeriodKey::month(2008, 10).unwrap();
    let day = PeriodKey::Day(date(2019, 3, 14));
    let recall = |spec: &SeriesSpec, p: &PeriodKey, ctx: &[Observation], d: &CutoffDirective| {
        show(&render_recall(spec, p, ctx, d).unwrap())
    };

    let mut spx = SeriesSpec::new("S&P 500", SeriesKind::Level, Frequency::Daily);
    spx.number_style = NumberStyle::Grouped;
    let spx_ctx = vec![
        Observation::new(PeriodKey::Day(date(2019, 3, 12)), 2791.52),
        Observation::new(PeriodKey::Day(date(2019, 3, 13)), 2810.92),
    ];
    let unrate = SeriesSpec::new("US unemployment rate", SeriesKind::Rate, Frequency::Monthly);
    let mut vix = SeriesSpec::new("VIX", SeriesKind::Level, Frequency::Monthly);
    vix.template = Some(RecallTemplate::EndOfMonth);
    let mut aapl = SeriesSpec::new("AAPL", SeriesKind::Level, Frequency::Monthly);
    aapl.template = Some(RecallTemplate::StockClose);

    let headlines = vec![
        TextRecord {
            record_id: "h1".into(),
            date: date(2008, 9, 15),
            body: "Lehman files for bankruptcy; Merrill is sold".into(),
            title: Some("Crisis on Wall Street".into()),
            ticker: None,
            quarter: None,
            year: None,
            industry_label: None,
        },
        TextRecord {
            record_id: "h2".into(),
            date: date(2008, 9, 15),
            body: "AIG seeks a lifeline from the Fed".into(),
            title: None,
            ticker: None,
            quarter: None,
            year: None,
            industry_label: None,
        },
    ];
    let (anon, identify) = render_masking_pair("Apple (AAPL) reported record iPhone sales in Q1 2018.").unwrap();
    let no_date = CutoffDirective::fixed(CutoffMode::SystemOnly, date(2010, 12, 31));
    let post = CutoffDirective {
        model_cutoff: Some(date(2023, 10, 1)),
        ..CutoffDirective::none()
    };

    vec![
        ("recall_quarterly", recall(&gdp(), &q, &[], &CutoffDirective::none())),
        ("recall_quarterly_post_cutoff", recall(&gdp(), &PeriodKey::quarter(2024, 1).unwrap(), &[], &post)),
        ("fake_cutoff_both", recall(&gdp(), &q, &[], &fake(CutoffMode::Both))),
        ("fake_cutoff_system_only", recall(&gdp(), &q, &[], &fake(CutoffMode::SystemOnly))),
        ("fake_cutoff_user_only", recall(&gdp(), &q, &[], &fake(CutoffMode::UserOnly))),
        ("fake_cutoff_no_current_date", recall(&gdp(), &q, &[], &no_date)),
        ("rolling_cutoff_daily", recall(&spx, &day, &spx_ctx, &CutoffDirective::rolling())),
        ("recall_daily_close", recall(&spx, &day, &spx_ctx, &CutoffDirective::none())),
        ("recall_monthly", recall(&unrate, &m, &[], &CutoffDirective::none())),
        ("recall_end_of_month", recall(&vix, &m, &[], &CutoffDirective::none())),
        ("recall_stock_close", recall(&aapl, &m, &[], &CutoffDirective::none())),
        (
            "direction_monthly",
            show(&render_direction_relative(DirectionTask::Direction, &["S&P 500"], &m).unwrap()),
        ),
        (
            "direction_pct_change",
            show(&render_direction_relative(DirectionTask::PctChange, &["S&P 500"], &m).unwrap()),
        ),
        (
            "direction_relative",
            show(
                &render_direction_relative(
                    DirectionTask::Relative,
                    &["S&P 500", "Nasdaq Composite"],
                    &PeriodKey::month(2015, 12).unwrap(),
                )
                .unwrap(),
            ),
        ),
        ("headline_date", show(&render_headline(&headlines, None).unwrap())),
        ("headline_date_level", show(&render_headline(&headlines, Some("S&P 500")).unwrap())),
        ("mask_anonymize", show(&anon)),
        (
            "mask_identify",
            show(&identify.fill("Company_1 reported record product_type_1 sales in quarter_x year_x.")),
        ),
        ("econ_logic", show(&render_econ_logic("Apple beats earnings expectations").unwrap())),
        (
            "embed_probe",
            render_embed_probe("unemployment rate", &PeriodKey::month(2009, 10).unwrap(), true).unwrap() + "\n",
        ),
        (
            "embed_probe_date_only",
            render_embed_probe("unemployment rate", &PeriodKey::month(2009, 10).unwrap(), false).unwrap() + "\n",
        ),
    ]
}

/// Compares each case with `tests/golden/<name>.txt`; with `UPDATE_GOLDEN=1`
/// the files are rewritten instead. Returns the names that differ.
pub fn check_golden(dir: &Path) -> Vec<String> {
    let update = std::env::var("UPDATE_GOLDEN").map_or(false, |v| v == "1");
    let mut bad = Vec::new();
    for (name, text) in golden_cases() {
        let path = dir.join(format!("{name}.txt"));
        if update {
            std::fs::create_dir_all(dir).unwrap();
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        match std::fs::read_to_string(&path) {
            Ok(expected) if expected == text => {}
            _ => bad.push(name.to_string()),
        }
    }
    bad
}

pub mod reference;

pub mod oracle {
    //! A fake provider that answers recall questions with the true values.

    use std::collections::BTreeMap;
    use std::path::Path;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use chrono::NaiveDate;
    use memaudit::dataset::{load_series, load_text_records, Series, TextRecord};
    use memaudit::gateway::{ChatRequest, Transport, TransportError};
    use memaudit::period::{PeriodKey, MONTH_NAMES};
    use memaudit::report::AuditConfig;
    use regex::Regex;
    use sha2::{Digest, Sha256};

    pub struct Oracle {
        series: BTreeMap<String, Series>,
        headlines: Vec<(String, NaiveDate)>,
        masked: Vec<TextRecord>,
        pub calls: Arc<AtomicUsize>,
    }

    fn month_number(name: &str) -> u32 {
        MONTH_NAMES.iter().position(|m| *m == name).expect("month name") as u32 + 1
    }

    fn reply(answer: serde_json::Value) -> String {
        serde_json::json!({ "answer": answer, "confidence": 90 }).to_string()
    }

    impl Oracle {
        pub fn from_config(cfg: &AuditConfig) -> Self {
            let series = cfg
                .series
                .iter()
                .map(|s| (s.name.clone(), load_series(&cfg.resolve(&s.path), s.spec()).unwrap()))
                .collect();
            let headlines = match &cfg.headlines {
                Some(h) => load_text_records(&cfg.resolve(&h.path))
                    .unwrap()
                    .into_iter()
                    .map(|r| (r.body, r.date))
                    .collect(),
                None => Vec::new(),
            };
            let masked = match &cfg.mask {
                Some(m) => load_text_records(&cfg.resolve(&m.path)).unwrap(),
                None => Vec::new(),
            };
            Oracle {
                series,
                headlines,
                masked,
                calls: Arc::new(AtomicUsize::new(0)),
            }
        }

        fn value(&self, name: &str, p: PeriodKey) -> Option<f64> {
            self.series.get(name)?.get(&p).map(|o| o.value)
        }

        fn year_end_return(&self, name: &str, year: i32) -> f64 {
            let s = &self.series[name];
            let last = |y: i32| s.observations().iter().filter(|o| o.period.year() == y).last().unwrap().value;
            last(year) / last(year - 1) - 1.0
        }

        pub fn answer(&self, user: &str) -> Option<String> {
            let quarterly = Regex::new(r"What was the (.+?) in Q([1-4]) (\d{4})\?").unwrap();
            let monthly = Regex::new(r"What was the (.+?) in (\w+), (\d{4})\?").unwrap();
            let direction = Regex::new(r"Was the (.+?) up or down for the month of (\w+), (\d{4})\?").unwrap();
            let relative = Regex::new(r"Which performed better in (\d{4}): (.+?) or (.+?)\?").unwrap();
            if let Some(c) = quarterly.captures(user) {
                let p = PeriodKey::quarter(c[3].parse().unwrap(), c[2].parse().unwrap()).unwrap();
                return self.value(&c[1], p).map(|v| reply(v.into()));
            }
            if let Some(c) = direction.captures(user) {
                let p = PeriodKey::month(c[3].parse().unwrap(), month_number(&c[2])).unwrap();
                let s = self.series.get(&c[1])?;
                let now = s.get(&p)?.value;
                let prev = s.previous_value(&p)?;
                return Some(reply(if now >= prev { "up" } else { "down" }.into()));
            }
            if let Some(c) = monthly.captures(user) {
                let p = PeriodKey::month(c[3].parse().unwrap(), month_number(&c[2])).unwrap();
                return self.value(&c[1], p).map(|v| reply(v.into()));
            }
            if let Some(c) = relative.captures(user) {
                let y: i32 = c[1].parse().unwrap();
                let first = self.year_end_return(&c[2], y) >= self.year_end_return(&c[3], y);
                return Some(reply(if first { &c[2] } else { &c[3] }.into()));
            }
            if user.starts_with("Your role is to ANONYMIZE") {
                let i = self.masked.iter().position(|r| user.ends_with(r.body.as_str()))?;
                return Some(format!("Company_1 discussed product_type_1 results in time_x. [ref:{i}]"));
            }
            if user.starts_with("You will receive a body of text which has been anonymized") {
                let i: usize = Regex::new(r"\[ref:(\d+)\]").unwrap().captures(user)?[1].parse().unwrap();
                let r = &self.masked[i];
                return Some(format!(
                    "Company Estimate: {}, Industry Estimate: Unknown, Quarter Estimate: {}, Year Estimate: {}",
                    r.ticker.as_deref()?,
                    r.quarter?,
                    r.year?
                ));
            }
            if user.contains("What is the date of these headlines") {
                let (_, d) = self.headlines.iter().find(|(body, _)| user.contains(body.as_str()))?;
                return Some(reply(d.format("%m/%d/%Y").to_string().into()));
            }
            None
        }
    }

    impl Transport for Oracle {
        fn chat(&self, request: &ChatRequest) -> Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self
                .answer(&request.user_message)
                .unwrap_or_else(|| r#"{"answer": null, "confidence": 0}"#.to_string()))
        }

        /// Deterministic pseudo-embeddings derived from the text hash.
        fn embed(&self, _model_id: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| {
                    Sha256::digest(t.as_bytes())
                        .iter()
                        .take(8)
                        .map(|b| *b as f64 / 255.0 - 0.5)
                        .collect()
                })
                .collect())
        }
    }

    pub fn copy_dir(from: &Path, to: &Path) {
        std::fs::create_dir_all(to).unwrap();
        for entry in std::fs::read_dir(from).unwrap() {
            let entry = entry.unwrap();
            let target = to.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                copy_dir(&entry.path(), &target);
            } else {
                std::fs::copy(entry.path(), target).unwrap();
            }
        }
    }

    /// Copies the recall fixture into `dir` and fills its cache from a live
    /// run against the oracle. Returns the config in strict-replay mode.
    pub fn seeded_recall_fixture(dir: &Path) -> AuditConfig {
        seeded_fixture("recall", dir, &[memaudit::report::Subcommand::Recall])
    }

    /// As [`seeded_recall_fixture`] for any fixture and set of subcommands.
    pub fn seeded_fixture(name: &str, dir: &Path, subs: &[memaudit::report::Subcommand]) -> AuditConfig {
        use memaudit::gateway::ReplayMode;
        use memaudit::report::run_audit_with;
        copy_dir(&super::fixtures_dir().join(name), dir);
        std::fs::create_dir_all(dir.join("cache")).unwrap();
        let text = std::fs::read_to_string(dir.join("config.toml")).unwrap();
        let mut cfg = AuditConfig::from_toml(&text, dir).unwrap();
        cfg.mode = ReplayMode::Live;
        cfg.provider.api_key = Some("test-key".into());
        for sub in subs {
            let oracle = Oracle::from_config(&cfg);
            run_audit_with(&cfg, *sub, Some(Box::new(oracle))).unwrap();
        }
        cfg.mode = ReplayMode::StrictReplay;
        cfg.provider.api_key = None;
        cfg
    }
}
