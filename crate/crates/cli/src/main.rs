use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use realdepth_core::MetricReport;
use realdepth_cli::{cmd_eval, cmd_gradcheck, cmd_optimize, cmd_synth, CliError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "realdepth", version, about = "Two-view metric depth recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a scene descriptor to images, ground truth and a sparse cloud.
    Synth {
        descriptor: PathBuf,
        out_dir: PathBuf,
        /// Overrides the descriptor's sparse-sampling seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize both depth fields for the scene named in a config.
    Optimize {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of pyramid levels.
        #[arg(long)]
        scales: Option<usize>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scales: Option<usize>,
        /// Maximum accepted relative error.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Depth metrics of a predicted PFM against a ground-truth PFM.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// Skip median alignment.
        #[arg(long)]
        no_align: bool,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>, scales: Option<usize>) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path)?.with_overrides(seed, scales)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { descriptor, out_dir, seed } => {
            for path in cmd_synth(&descriptor, &out_dir, seed)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Optimize { config, seed, scales } => {
            let config = load_config(&config, seed, scales)?;
            let summary = cmd_optimize(&config)?;
            println!("median depth  view1 {}  view2 {}", summary.medians[0].value(), summary.medians[1].value());
            println!("final loss    {:.6e}", summary.final_total);
            if let Some(metrics) = summary.metrics {
                for (k, m) in metrics.iter().enumerate() {
                    print!("view {} (median-aligned)\n{}", k + 1, m.table());
                }
            }
            println!("outputs in {}", config.output_dir.display());
        }
        Command::Gradcheck { config, seed, scales, threshold } => {
            let mut config = load_config(&config, seed, scales)?;
            if let Some(t) = threshold {
                config.gradcheck.threshold = t;
            }
            let report = cmd_gradcheck(&config)?;
            print!("{}", report.summary(config.gradcheck.threshold));
        }
        Command::Eval { pred, gt, no_align } => {
            let m = cmd_eval(&pred, &gt, !no_align)?;
            print!("{}", m.table());
            println!("{}\n{}", MetricReport::CSV_HEADER, m.csv_row());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
