use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use deconflict::report::merge_reports;
use deconflict::run::{cmd_evaluate, cmd_train, seed_sweep, FleetSpec, RunSpec};

const DEFAULT_TRAIN_EPISODES: u64 = 400;
const DEFAULT_EVAL_EPISODES: u64 = 100;
const GRAD_CLIP_NORM: f64 = 0.5;

/// Multi-fleet sUAS separation-assurance workbench.
#[derive(Debug, Parser)]
#[command(name = "deconflict", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the ppoa2c fleets and write checkpoints plus a training log.
    Train(RunArgs),
    /// Evaluate a fleet pairing and write report.json / report.csv.
    Evaluate(RunArgs),
    /// Merge several evaluation directories into one comparison table.
    Report {
        /// Evaluation output directories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario TOML; the built-in reference scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Fleet A as <policy>:<config>, policy one of ppoa2c, rulebased, random.
    #[arg(long)]
    fleet_a: FleetSpec,
    /// Fleet B as <policy>:<config>.
    #[arg(long)]
    fleet_b: FleetSpec,
    #[arg(long)]
    episodes: Option<u64>,
    /// Seed, or a comma-separated list to sweep; each seed of a sweep
    /// writes to `<out>/seed-<n>`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seed: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint for fleet A (evaluation, or warm start when training).
    #[arg(long)]
    checkpoint_a: Option<PathBuf>,
    #[arg(long)]
    checkpoint_b: Option<PathBuf>,
    /// Also write trajectories.csv.
    #[arg(long)]
    trajectories: bool,
    /// Take the argmax action of learned fleets when evaluating (default).
    #[arg(long, conflicts_with = "sample")]
    greedy: bool,
    /// Sample learned actions instead of taking the argmax when evaluating.
    #[arg(long)]
    sample: bool,
    /// Clip the global gradient norm at 0.5 when training.
    #[arg(long)]
    grad_clip: bool,
}

impl RunArgs {
    fn into_specs(self, default_episodes: u64) -> Vec<RunSpec> {
        let mut spec = RunSpec::new(self.fleet_a, self.fleet_b, self.out);
        spec.scenario = self.scenario;
        spec.episodes = self.episodes.unwrap_or(default_episodes);
        spec.checkpoints = [self.checkpoint_a, self.checkpoint_b];
        spec.trajectories = self.trajectories;
        spec.greedy = !self.sample;
        if self.grad_clip {
            spec.train.max_grad_norm = Some(GRAD_CLIP_NORM);
        }
        seed_sweep(&spec, &self.seed)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            for spec in args.into_specs(DEFAULT_TRAIN_EPISODES) {
                let s = cmd_train(&spec)?;
                println!("training log: {}", s.log.display());
                for c in &s.checkpoints {
                    println!("checkpoint: {}", c.display());
                }
            }
        }
        Command::Evaluate(args) => {
            let specs = args.into_specs(DEFAULT_EVAL_EPISODES);
            let sweep = specs.len() > 1;
            for spec in specs {
                let s = cmd_evaluate(&spec)?;
                if sweep {
                    println!("# seed {}: {}", spec.seed, spec.out.display());
                }
                print!("{}", s.report.to_csv());
            }
        }
        Command::Report { dirs, out } => {
            let merged = merge_reports(&dirs)?;
            for (dir, err) in &merged.failures {
                eprintln!("skipped {}: {err}", dir.display());
            }
            match out {
                Some(p) => std::fs::write(&p, &merged.csv)
                    .with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", merged.csv),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
