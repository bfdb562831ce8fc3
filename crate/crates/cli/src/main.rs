use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedcon_cli::{cmd_gen, cmd_run, drift_replay, parse_confidences, Overrides, EVENTS_FILE, METRICS_FILE};

/// Federated continual learning simulator.
#[derive(Parser)]
#[command(name = "fedcon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv, events.log and manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run on streams written by `gen` instead of generating them.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Step devices concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        eval_interval: Option<u64>,
    },
    /// Write the scenario's streams and test set as CSV.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Replay a confidence log (one value per line) through the drift detector.
    DriftReplay {
        file: PathBuf,
        #[arg(long, default_value_t = 100)]
        delta: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { common, data, parallel, eval_interval } => {
            let overrides = Overrides { seed: common.seed, eval_interval, parallel };
            let output = cmd_run(&common.config, &overrides, &common.out, data.as_deref())?;
            let t = output.config.iterations;
            let members: Vec<String> = output.global_members().iter().map(|d| d.to_string()).collect();
            if let Some(g) = output.global_at(t) {
                println!("iteration {t}: global balanced accuracy {g:.4}, members [{}]", members.join(", "));
            }
            println!("wrote {} and {} to {}", METRICS_FILE, EVENTS_FILE, common.out.display());
        }
        Command::Gen { common } => {
            let overrides = Overrides { seed: common.seed, ..Default::default() };
            let out = cmd_gen(&common.config, &overrides, &common.out)?;
            println!("wrote dataset to {}", out.display());
        }
        Command::DriftReplay { file, delta, alpha } => {
            let text =
                std::fs::read_to_string(&file).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", file.display()))?;
            let values = parse_confidences(&text, &file.display().to_string())?;
            println!("index,change_point,score");
            for f in drift_replay(&values, delta, alpha)? {
                let k = f.change_point.map_or(String::new(), |k| k.to_string());
                println!("{},{k},{:.6}", f.index, f.score);
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
