//! Run reports and their files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use curvature_core::report::CheckResult;
use serde::Serialize;

/// Long-format plot data: rows of `(series, x, y)`, written to one file.
#[derive(Debug, Clone, Default)]
pub struct PlotData {
    pub file: String,
    pub rows: Vec<(String, f64, f64)>,
}

impl PlotData {
    pub fn new(file: &str) -> Self {
        PlotData {
            file: file.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, series: impl Into<String>, x: f64, y: f64) {
        self.rows.push((series.into(), x, y));
    }
}

/// A CSV table produced verbatim by an experiment.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub content: String,
}

/// Result of one experiment. Serialises to `report.json`; wall time and the
/// file payloads are kept out of it so repeated runs are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: String,
    /// Resolved parameters, defaults included.
    pub config: BTreeMap<String, String>,
    pub checks: Vec<CheckResult>,
    pub data: serde_json::Value,
    /// Files written next to `report.json`.
    pub artifacts: Vec<String>,
    /// All checks without conditional flags pass.
    pub pass: bool,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub plots: Vec<PlotData>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl RunReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass && !c.is_conditional())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub(crate) fn artifact_names(plots: &[PlotData], tables: &[Table]) -> Vec<String> {
    let mut names: Vec<String> = tables.iter().map(|t| t.file.clone()).chain(plots.iter().map(|p| p.file.clone())).collect();
    names.sort();
    names
}

/// Writes every plot-data file of the report as `series,x,y` CSV.
pub fn emit_plotdata(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for plot in &report.plots {
        let path = dir.join(&plot.file);
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(f, "series,x,y")?;
        for (series, x, y) in &plot.rows {
            writeln!(f, "{series},{x:?},{y:?}")?;
        }
        out.push(path);
    }
    Ok(out)
}

/// Writes `report.json`, the tables and the plot data into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(&t.file);
        fs::write(&path, &t.content).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    written.extend(emit_plotdata(report, dir)?);
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}
