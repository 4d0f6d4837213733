use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vrmec::agents::Algorithm;
use vrmec::config::ExperimentConfig;
use vrmec::harness;
use vrmec::latency::Scheme;

#[derive(Parser)]
#[command(name = "vrmec", version, about = "MEC-assisted wireless VR simulator and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    prediction: Option<bool>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = a;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(p) = self.prediction {
            cfg.prediction = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the FoV predictor on synthetic Brownian traces.
    TrainPredictor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a controller and evaluate it greedily.
    TrainAgent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-evaluate a finished run from its checkpoints.
    Evaluate {
        /// Directory written by `train-agent`.
        #[arg(long)]
        out: PathBuf,
    },
    /// One run per value of a dotted config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// e.g. `rendering.uplink_latency`
        #[arg(long)]
        axis: String,
        /// Comma-separated values, parsed as TOML.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, env = "VRMEC_WORKERS", default_value_t = 1)]
        workers: usize,
    },
    /// Rank algorithms over finished runs by mean final reward.
    Report {
        /// Run directories, or parents containing them.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn collect_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for p in paths {
        if p.join("evaluation.csv").is_file() {
            found.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(p)
            .with_context(|| format!("listing {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| c.join("evaluation.csv").is_file())
            .collect();
        children.sort();
        found.extend(children);
    }
    if found.is_empty() {
        bail!("no finished runs found");
    }
    Ok(found)
}

fn print_evaluation(dir: &Path, e: &harness::Evaluation) {
    println!(
        "{}: {} slots, reward/slot {:.4}, QoE/user {:.4}, latency {:.6} s, FoV accuracy {:.2}%",
        dir.display(),
        e.slots,
        e.avg_reward_per_slot,
        e.avg_qoe_per_user,
        e.avg_interaction_latency,
        e.prediction_accuracy
    );
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::TrainPredictor { common, out } => {
            let cfg = common.resolve()?;
            let trained = harness::run_predictor_training(&cfg, &out)?;
            println!("held-out accuracy {:.4} after {} epochs", trained.final_accuracy, trained.curve.len());
        }
        Command::TrainAgent { common, out } => {
            let cfg = common.resolve()?;
            let result = harness::run_experiment(&cfg, Some(&out))?;
            print_evaluation(&out, &result.evaluation);
        }
        Command::Evaluate { out } => {
            let e = harness::evaluate_run(&out)?;
            print_evaluation(&out, &e);
        }
        Command::Sweep { common, out, axis, values, workers } => {
            let cfg = common.resolve()?;
            for p in harness::run_sweep(&cfg, &axis, &values, &out, workers)? {
                println!("{axis} = {}: QoE/user {:.4}, latency {:.6} s", p.value, p.evaluation.avg_qoe_per_user, p.evaluation.avg_interaction_latency);
            }
        }
        Command::Report { runs, out } => {
            let summaries = collect_runs(&runs)?
                .iter()
                .map(|d| harness::read_run_summary(d))
                .collect::<vrmec::Result<Vec<_>>>()?;
            let table = harness::format_report(&harness::compare_report(&summaries));
            print!("{table}");
            if let Some(path) = out {
                harness::write_atomic(&path, table.as_bytes())?;
            }
        }
    }
    Ok(())
}
