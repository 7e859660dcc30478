//! Output artifacts: `report.json`, ECDF CSVs, and per-replicate CSVs.
//!
//! Every artifact embeds the full parsed configuration (including the seed)
//! so a file on its own identifies the run that produced it. Nothing
//! time-dependent is written — no timestamps, no wall-clock durations — so
//! reruns of the same config are byte-identical regardless of worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use brw_core::stats::TestReport;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// A test report tagged with the check it came from.
#[derive(Debug, Clone, Serialize)]
pub struct NamedReport {
    pub name: String,
    #[serde(flatten)]
    pub report: TestReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// True when no asserted check rejected.
    pub all_pass: bool,
    /// Names of the checks that rejected.
    pub rejected: Vec<String>,
    /// Names of report-only checks (no pass/fail decision).
    pub diagnostic: Vec<String>,
    pub warnings: Vec<String>,
    /// Experiment-specific scalars worth surfacing without digging into
    /// individual reports.
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    reports: &'a [NamedReport],
    summary: &'a Summary,
}

/// Collects reports and artifacts for one experiment run, then writes them.
pub struct RunOutput {
    experiment: &'static str,
    config: ExperimentConfig,
    config_line: String,
    out_dir: PathBuf,
    pub reports: Vec<NamedReport>,
    pub warnings: Vec<String>,
    pub extra: BTreeMap<String, serde_json::Value>,
    written: Vec<PathBuf>,
}

impl RunOutput {
    pub fn new(experiment: &'static str, config: &ExperimentConfig) -> Result<RunOutput> {
        let config_line =
            serde_json::to_string(config).context("configuration is not serializable")?;
        std::fs::create_dir_all(&config.out_dir).with_context(|| {
            format!("cannot create output directory {}", config.out_dir.display())
        })?;
        Ok(RunOutput {
            experiment,
            config: config.clone(),
            config_line,
            out_dir: config.out_dir.clone(),
            reports: Vec::new(),
            warnings: Vec::new(),
            extra: BTreeMap::new(),
            written: Vec::new(),
        })
    }

    pub fn push(&mut self, name: impl Into<String>, report: TestReport) {
        self.reports.push(NamedReport {
            name: name.into(),
            report,
        });
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn set_extra(&mut self, key: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.extra.insert(key.to_string(), v);
        }
    }

    fn header(&self) -> String {
        format!(
            "# experiment: {}\n# config: {}\n",
            self.experiment, self.config_line
        )
    }

    /// Write a CSV with the standard two-line comment header.
    pub fn write_csv<I>(&mut self, file: &str, columns: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = String>,
    {
        let mut body = self.header();
        body.push_str(&columns.join(","));
        body.push('\n');
        for row in rows {
            body.push_str(&row);
            body.push('\n');
        }
        let path = self.out_dir.join(file);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// Write an empirical CDF: one row per sample point, ascending.
    pub fn write_ecdf(&mut self, file: &str, column: &str, sample: &[f64]) -> Result<()> {
        let mut sorted: Vec<f64> = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len().max(1) as f64;
        let rows = sorted.iter().enumerate().map(|(i, v)| {
            let mut row = String::new();
            let _ = write!(row, "{},{}", v, (i + 1) as f64 / n);
            row
        });
        self.write_csv(file, &[column, "ecdf"], rows)
    }

    /// Compute the summary, write `report.json`, and print one line per
    /// check. Returns true when no asserted check rejected.
    pub fn finish(mut self) -> Result<bool> {
        let mut rejected = Vec::new();
        let mut diagnostic = Vec::new();
        for r in &self.reports {
            match r.report.reject_null {
                Some(true) => rejected.push(r.name.clone()),
                Some(false) => {}
                None => diagnostic.push(r.name.clone()),
            }
        }
        let all_pass = rejected.is_empty();
        let summary = Summary {
            all_pass,
            rejected,
            diagnostic,
            warnings: self.warnings.clone(),
            extra: self.extra.clone(),
        };
        let file = ReportFile {
            experiment: self.experiment,
            config: &self.config,
            reports: &self.reports,
            summary: &summary,
        };
        let json =
            serde_json::to_string_pretty(&file).context("report is not serializable")? + "\n";
        let path = self.out_dir.join("report.json");
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path);

        for r in &self.reports {
            let verdict = match r.report.reject_null {
                Some(true) => "REJECT",
                Some(false) => "pass",
                None => "report",
            };
            eprintln!(
                "{:<44} {:>7}  {} = {:.6}{}",
                r.name,
                verdict,
                r.report.statistic_name,
                r.report.statistic_value,
                match r.report.p_value {
                    Some(p) => format!("  (p = {p:.4})"),
                    None => String::new(),
                }
            );
        }
        for w in &self.warnings {
            eprintln!("warning: {w}");
        }
        for p in &self.written {
            eprintln!("wrote {}", p.display());
        }
        eprintln!(
            "{}: {}",
            self.experiment,
            if all_pass { "all checks passed" } else { "CHECKS REJECTED" }
        );
        Ok(all_pass)
    }
}

/// Format a float for file names: `2` -> "2", `1.5` -> "1p5".
pub fn slug(x: f64) -> String {
    format!("{x}").replace('.', "p").replace('-', "m")
}

/// Join floats for CSV rows with full precision.
pub fn row(fields: &[f64]) -> String {
    let mut s = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{f}");
    }
    s
}
