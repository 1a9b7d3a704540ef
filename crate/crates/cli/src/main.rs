use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use curvature_lab::config::read_pairs;
use curvature_lab::{run, write_outputs, ExperimentConfig, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "curvature-lab", version, about = "Comparison-geometry experiments", after_help = experiment_list())]
struct Args {
    /// Experiment name.
    experiment: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for report.json and CSV files.
    #[arg(long)]
    out: PathBuf,
}

fn experiment_list() -> String {
    let mut s = String::from("Experiments:\n");
    for d in EXPERIMENTS {
        s += &format!("  {:<24}{}\n", d.name, d.about);
    }
    s
}

fn load(args: &Args) -> Result<ExperimentConfig> {
    let mut pairs = match &args.config {
        Some(p) => read_pairs(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Vec::new(),
    };
    for s in &args.set {
        let (k, v) = s.split_once('=').with_context(|| format!("--set expects key=value, got {s:?}"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    ExperimentConfig::from_pairs(Some(&args.experiment), pairs)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|cfg| {
        let report = run(&cfg)?;
        write_outputs(&report, &args.out)?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for c in &report.checks {
                let state = match (c.pass, c.is_conditional()) {
                    (true, _) => "pass",
                    (false, true) => "fail (conditional)",
                    (false, false) => "FAIL",
                };
                eprintln!("{:<32} slack_min {:>12.4e}  {state}", c.check, c.slack_min);
            }
            eprintln!("wall time {:.2} s; outputs in {}", report.wall_time.as_secs_f64(), args.out.display());
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
