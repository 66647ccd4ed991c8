//! `nfield`: command-line front end for the neural-field library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use neural_field::run::{run, Command, RunOptions, StudyKind};

#[derive(Parser, Debug)]
#[command(name = "nfield", version, about = "Amari neural field with Hebbian plasticity")]
struct Cli {
    /// JSON configuration; defaults are used for anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "nfield-out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate the field and check the a-priori bounds.
    Simulate,
    /// Compute a stationary state.
    Stationary,
    /// Learned kernel, Mercer decomposition, gain field and Schrödinger cross-check.
    Gainfield,
    /// Finite-difference square-well eigenproblem.
    Schrodinger {
        /// Half-width and height of the well, `a,V0`.
        #[arg(long, value_parser = parse_well)]
        well: Option<(f64, f64)>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run one of the verification studies.
    Study {
        #[arg(value_enum)]
        name: StudyName,
    },
    /// Print the theory constants for the configuration.
    Constants,
    /// Validate the configuration only.
    Validate,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StudyName {
    PlasticityLimit,
    Dependence,
    Contraction,
    L1,
}

fn parse_well(s: &str) -> Result<(f64, f64), String> {
    let (a, v) = s.split_once(',').ok_or_else(|| format!("expected `a,V0`, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("half-width: {e}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("height: {e}"))?;
    Ok((a, v))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Stationary => Command::Stationary,
        Cmd::Gainfield => Command::Gainfield,
        Cmd::Schrodinger { well, lambda } => Command::Schrodinger { well, lambda },
        Cmd::Study { name } => Command::Study(match name {
            StudyName::PlasticityLimit => StudyKind::PlasticityLimit,
            StudyName::Dependence => StudyKind::Dependence,
            StudyName::Contraction => StudyKind::Contraction,
            StudyName::L1 => StudyKind::L1,
        }),
        Cmd::Constants => Command::Constants,
        Cmd::Validate => Command::Validate,
    };
    let opts = RunOptions { config: cli.config, out: cli.out, seed: cli.seed, threads: cli.threads };
    let outcome = run(&command, &opts);
    if outcome.exit_code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("error: {}", outcome.message);
    }
    if let Some(m) = outcome.manifest {
        println!("manifest: {}", m.display());
    }
    ExitCode::from(outcome.exit_code as u8)
}
