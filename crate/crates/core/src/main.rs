use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rotaris::config::{default_config_toml, load_config};
use rotaris::harness::{
    run_experiment, run_trace, write_summary_csv, write_trials_csv, ExperimentConfig, TrialStatus,
};
use rotaris::Result;

/// Rotatable-RIS multicast simulations: Monte-Carlo trials, iteration
/// traces and transmit-power sweeps.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and write trials.csv and summary.csv.
    Run(Common),
    /// Run a single trial and write one per-iteration CSV per arm.
    Trace {
        #[command(flatten)]
        common: Common,
        /// Transmit power in dBm (defaults to the first configured value).
        #[arg(long)]
        power: Option<f64>,
    },
    /// Run the experiment over a list of transmit powers.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated transmit powers in dBm.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0, 20.0, 30.0])]
        powers: Vec<f64>,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed base for `run`/`sweep`, trial seed for `trace`.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials (overrides the configuration).
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed_base = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        cfg.validate()?;
        cfg.ao.validate()?;
        Ok(cfg)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn experiment(cfg: &ExperimentConfig) -> Result<()> {
    let exp = run_experiment(cfg)?;
    write_trials_csv(create(&cfg.output_dir, "trials.csv")?, &exp.records)?;
    write_summary_csv(create(&cfg.output_dir, "summary.csv")?, &exp.summary)?;
    let failed = exp
        .records
        .iter()
        .filter(|r| matches!(r.status, TrialStatus::Failed(_)))
        .count();
    for row in &exp.summary {
        let gain = row
            .improvement_pct
            .map(|p| format!("  {p:+.1}% vs fixed"))
            .unwrap_or_default();
        println!(
            "{:<10} {:>6.1} dBm  mean {:.4}  std {:.4}  n {}{gain}",
            row.arm.as_str(),
            row.p_max_dbm,
            row.mean,
            row.std,
            row.count
        );
    }
    if failed > 0 {
        eprintln!("{failed} trial runs failed; see the status column of trials.csv");
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => experiment(&common.load()?),
        Command::Sweep { common, powers } => {
            let mut cfg = common.load()?;
            cfg.p_max_dbm = powers;
            cfg.validate()?;
            experiment(&cfg)
        }
        Command::Trace { common, power } => {
            let cfg = common.load()?;
            let p = power.unwrap_or(cfg.p_max_dbm[0]);
            for (arm, trace) in run_trace(&cfg, cfg.seed_base, p)? {
                let name = format!("trace_{}.csv", arm.as_str());
                trace.write_csv(create(&cfg.output_dir, &name)?)?;
                println!(
                    "{:<10} best {:.4} at iteration {} of {}{}",
                    arm.as_str(),
                    trace.best_objective,
                    trace.best_iteration,
                    trace.iterations(),
                    if trace.converged { " (converged)" } else { "" }
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(())
        }
        Command::DefaultConfig => {
            print!("{}", default_config_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
