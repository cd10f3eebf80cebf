#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;
mod error;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::ConfigFile;
use error::{CliError, CliResult};
use report::Artifact;

fn threads_from_env() -> CliResult<()> {
    match std::env::var("KFP_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("KFP_THREADS must be a positive integer, got `{v}`")))?;
            Ok(kfp_core::par::configure_threads(n)?)
        }
        Err(_) => Ok(()),
    }
}

fn emit(cli: &Cli, art: &Artifact) -> CliResult<()> {
    for path in art.write(&cli.out, cli.plot)? {
        eprintln!("wrote {}", path.display());
    }
    for c in &art.comparisons {
        match c.relative_error {
            Some(e) => {
                println!("{}: predicted {} measured {} (relative error {e:.3e})", c.quantity, c.predicted, c.measured)
            }
            None => println!("{}: predicted {} measured {}", c.quantity, c.predicted, c.measured),
        }
    }
    let bad = art.violated();
    if bad.is_empty() {
        Ok(())
    } else {
        let msg: Vec<String> = bad.iter().map(|g| format!("{} ({})", g.name, g.detail)).collect();
        Err(CliError::Trust(msg.join("; ")))
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    threads_from_env()?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let art = match &cli.command {
        Command::Constants(a) => commands::constants(&file.resolve("constants", a)?)?,
        Command::FiberSpectrum(a) => commands::fiber(&file.resolve("fiber-spectrum", a)?)?,
        Command::GreenCoeffs(a) => commands::green(&file.resolve("green-coeffs", a)?)?,
        Command::FreeDecay(a) => commands::free_decay(&file.resolve("free-decay", a)?)?,
        Command::Evolve(a) => commands::evolve(&file.resolve("evolve", a)?)?,
        Command::ResolventFit(a) => commands::resolvent_fit(&file.resolve("resolvent-fit", a)?)?,
        Command::LapScan(a) => commands::lap_scan(&file.resolve("lap-scan", a)?)?,
        Command::HighEnergyScan(a) => commands::high_energy(&file.resolve("high-energy-scan", a)?)?,
        Command::Acceptance(a) => {
            let (art, failed) = commands::acceptance(&file.resolve("acceptance", a)?)?;
            art.write(&cli.out, false)?;
            if !failed.is_empty() {
                let ids: Vec<String> = failed.iter().map(u8::to_string).collect();
                return Err(CliError::Acceptance(format!("criteria {}", ids.join(", "))));
            }
            return Ok(());
        }
    };
    emit(cli, &art)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kfp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
