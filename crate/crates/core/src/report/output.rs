//! Report bundle files: tables, raw rows, plot series, summary and manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::NumericEvalRow;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Missing values print as "-".
pub fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.decimals$}"),
        _ => "-".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem under `tables/`.
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, title: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Invalid(format!("writing table {}: {e}", self.name));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = format!("| {} |\n", self.header.iter().map(|h| esc(h)).collect::<Vec<_>>().join(" | "));
        out.push_str(&format!("|{}\n", " --- |".repeat(self.header.len())));
        for r in &self.rows {
            out.push_str(&format!("| {} |\n", r.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | ")));
        }
        out
    }
}

/// CSV of `period,actual,estimated,pct_error` with pct_error = 100·(est−act)/act.
/// Refusals leave the estimate and error cells empty.
pub fn plot_series_csv(rows: &[NumericEvalRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Invalid(format!("writing plot series: {e}"));
    w.write_record(["period", "actual", "estimated", "pct_error"]).map_err(fail)?;
    for r in rows {
        let est = r.usable_estimate();
        let pct = est
            .filter(|_| r.actual != 0.0)
            .map(|e| (100.0 * (e - r.actual) / r.actual).to_string())
            .unwrap_or_default();
        w.write_record([
            r.period.to_string(),
            r.actual.to_string(),
            est.map(|e| e.to_string()).unwrap_or_default(),
            pct,
        ])
        .map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

pub fn emit_plot_series(rows: &[NumericEvalRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, plot_series_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        out.extend_from_slice(serde_json::to_string(r).expect("serializable row").as_bytes());
        out.push(b'\n');
    }
    out
}

/// Everything one subcommand produces. Files are only written by [`ReportBundle::write`].
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub subcommand: String,
    pub tables: Vec<Table>,
    /// `rows/<name>.jsonl` contents.
    pub row_files: Vec<(String, Vec<u8>)>,
    /// `plots/<name>.csv` series.
    pub plots: Vec<(String, Vec<NumericEvalRow>)>,
    /// Extra files written verbatim relative to the output directory.
    pub extra_files: Vec<(String, Vec<u8>)>,
    pub notes: Vec<String>,
    /// Request digests consulted, for provenance.
    pub digests: BTreeSet<String>,
    /// Set when the run stopped early (e.g. request budget exhausted).
    pub hard_stop: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestInput {
    pub config_hash: String,
    pub mode: String,
    pub seed: Option<u64>,
    pub provider_tag: String,
    pub model_id: String,
    pub template_fingerprint: String,
    pub template_overrides: String,
    pub cache_file: String,
    pub cache_entries_used: usize,
}

#[derive(Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    toolkit_version: &'a str,
    subcommand: &'a str,
    #[serde(flatten)]
    input: &'a ManifestInput,
    cache_digests: &'a BTreeSet<String>,
    hard_stop: &'a Option<String>,
    files: Vec<FileRecord>,
}

impl ReportBundle {
    pub fn new(subcommand: &str) -> Self {
        ReportBundle {
            subcommand: subcommand.into(),
            ..Default::default()
        }
    }

    pub fn add_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) {
        self.row_files.push((name.into(), jsonl(rows)));
    }

    pub fn add_json(&mut self, name: &str, value: &impl Serialize) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable value");
        text.push('\n');
        self.extra_files.push((name.into(), text.into_bytes()));
    }

    pub fn markdown(&self) -> String {
        let mut md = format!("# memaudit {} report\n", self.subcommand);
        if let Some(stop) = &self.hard_stop {
            md.push_str(&format!("\n**Run stopped early:** {stop}\n"));
        }
        for t in &self.tables {
            md.push_str(&format!("\n## {}\n\n{}", t.title, t.to_markdown()));
        }
        if !self.notes.is_empty() {
            md.push_str("\n## Notes\n\n");
            for n in &self.notes {
                md.push_str(&format!("- {n}\n"));
            }
        }
        md
    }

    /// Writes the bundle under `out` and returns the written paths, sorted.
    pub fn write(&self, out: &Path, manifest: &ManifestInput) -> Result<Vec<PathBuf>> {
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for t in &self.tables {
            files.push((format!("tables/{}.csv", t.name), t.to_csv()?));
        }
        for (name, bytes) in &self.row_files {
            files.push((format!("rows/{name}.jsonl"), bytes.clone()));
        }
        for (name, rows) in &self.plots {
            files.push((format!("plots/{name}.csv"), plot_series_csv(rows)?));
        }
        files.extend(self.extra_files.iter().cloned());
        files.push(("report.md".into(), self.markdown().into_bytes()));
        files.sort_by(|a, b| a.0.cmp(&b.0));

        let records = files
            .iter()
            .map(|(p, b)| FileRecord {
                path: p.clone(),
                sha256: hex::encode(Sha256::digest(b)),
            })
            .collect();
        let mut manifest_text = serde_json::to_string_pretty(&Manifest {
            toolkit_version: TOOLKIT_VERSION,
            subcommand: &self.subcommand,
            input: manifest,
            cache_digests: &self.digests,
            hard_stop: &self.hard_stop,
            files: records,
        })
        .expect("serializable manifest");
        manifest_text.push('\n');
        files.push(("manifest.json".into(), manifest_text.into_bytes()));

        let mut written = Vec::new();
        for (rel, bytes) in files {
            let path = out.join(&rel);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        written.sort();
        Ok(written)
    }
}

/// Parses a JSONL file into values, for tests and downstream tools.
pub fn read_jsonl(path: &Path) -> Result<Vec<Value>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
