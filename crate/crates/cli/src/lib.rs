//! Experiment runner over `curvature-core`: configuration, dispatch and
//! report/plot-data output.

pub mod config;
pub mod experiments;
pub mod output;

use std::time::Instant;

use anyhow::Result;

pub use config::ExperimentConfig;
pub use experiments::{lookup, ExperimentDef, EXPERIMENTS};
pub use output::{emit_plotdata, write_outputs, PlotData, RunReport, Table};

/// Runs the configured experiment. Nothing is written; see [`write_outputs`].
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let def = config.definition();
    let start = Instant::now();
    let outcome = (def.run)(config)?;
    let pass = outcome.checks.iter().all(|c| c.pass || c.is_conditional());
    let mut artifacts = output::artifact_names(&outcome.plots, &outcome.tables);
    artifacts.push("report.json".into());
    Ok(RunReport {
        experiment: def.name.to_string(),
        config: config.resolved(),
        checks: outcome.checks,
        data: outcome.data,
        artifacts,
        pass,
        wall_time: start.elapsed(),
        plots: outcome.plots,
        tables: outcome.tables,
    })
}
