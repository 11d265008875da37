use std::path::PathBuf;
use std::process::ExitCode;

use beamsweep::cli::{cmd_analyze, cmd_codebook, cmd_synth, ExperimentConfig, Overrides};
use beamsweep::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamsweep", version, about = "Beam sweep period analysis for mmWave V2I links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the receive codebook and write codebook.csv
    Codebook(CommonArgs),
    /// Synthesize per-beam SNR traces, one CSV per run
    Synth(CommonArgs),
    /// Sweep the period grid and write results.csv and summary.json
    Analyze(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed of the built-in ensemble
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
        }))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let args = match &cli.command {
        Command::Codebook(a) | Command::Synth(a) | Command::Analyze(a) => a,
    };
    let config = args.load()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Simulation(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Codebook(_) => {
            let report = cmd_codebook(&config)?;
            println!("beams: {}", report.n_beams);
            println!("covering radius: {:.4} deg", report.covering_radius_deg);
            println!("wrote {}", report.path.display());
            Ok(())
        }
        Command::Synth(_) => {
            let manifest = cmd_synth(&config)?;
            for run in &manifest.runs {
                println!("{} (seed {}): {} rows -> {}", run.run_id, run.seed, run.rows, run.file);
            }
            println!("wrote {}", config.output_dir.join("manifest.json").display());
            Ok(())
        }
        Command::Analyze(_) => {
            let analysis = cmd_analyze(&config)?;
            for curve in &analysis.summary.curves {
                println!("n_chains={}: optimal period {} ms", curve.n_chains, curve.optimal_period_ms);
            }
            for row in &analysis.summary.chain_comparison.rows {
                println!(
                    "n_chains={}: peak {:.4} at {} ms, >=95% plateau over {} grid point(s)",
                    row.n_chains, row.peak, row.peak_period_ms, row.plateau_count
                );
            }
            println!("wrote {}", config.output_dir.display());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
