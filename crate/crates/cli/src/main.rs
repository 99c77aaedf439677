//! `vaxnet` batch front end.
//!
//! Exit codes: 0 on success, 2 when the configuration cannot be read or is
//! invalid, 3 when some calibration cell did not converge (outputs are still
//! written and the cell is flagged), 1 on any other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vaxnet::config::Config;
use vaxnet::workflow::{self, Command};

#[derive(Parser, Debug)]
#[command(name = "vaxnet", version, about = "SEIRM vaccination-policy experiments on small-world networks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve for vaccinated infection parameters and write efficacy_table.csv
    Calibrate(Args),
    /// Run ensembles per k and write timeseries.csv and deaths.csv
    Run(Args),
    /// Sweep (k, second-dose ratio a) and write sweep_dose.csv
    SweepDose(Args),
    /// Sweep (k, age priority c) and write sweep_age.csv
    SweepAge(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// JSON config file or a manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Realizations per ensemble
    #[arg(long)]
    realizations: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Share one network across the realizations of an ensemble
    #[arg(long)]
    freeze_network: bool,
}

impl Args {
    fn resolve(&self) -> vaxnet::Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(r) = self.realizations {
            cfg.run.realizations = r;
        }
        if self.freeze_network {
            cfg.run.freeze_network = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Calibrate(a) => (Command::Calibrate, a),
        Cmd::Run(a) => (Command::Run, a),
        Cmd::SweepDose(a) => (Command::SweepDose, a),
        Cmd::SweepAge(a) => (Command::SweepAge, a),
    };

    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(1);
        }
    }

    match workflow::execute(command, &cfg, args.config.as_deref(), &args.out) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            if report.converged() {
                ExitCode::SUCCESS
            } else {
                for (e0, k) in &report.non_converged {
                    eprintln!("warning: calibration did not converge for e0 = {e0}, k = {k}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
