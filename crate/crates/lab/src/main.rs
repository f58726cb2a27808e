use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use moistpe::commands::{self, Report};
use moistpe::config::{ExperimentKind, Settings};
use moistpe::output::{prepare_out, write_manifest};
use moistpe::LabError;

#[derive(Parser)]
#[command(name = "moistpe", version, about = "Stochastic moist primitive equations on the spherical shell")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (must be empty unless --force).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured snapshot interval (steps, 0 = none).
    #[arg(long, global = true)]
    snapshot_every: Option<u64>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate one trajectory and write the energy ledger and snapshots.
    Run,
    /// Pullback contraction of a finite initial set.
    Pullback,
    /// Empirical absorbing radius.
    Absorb,
    /// Time averages of observables with a stationarity check.
    Measure,
    /// Operator identity, eigenrelation and constraint checks.
    Checks,
    /// Write the noise mode table.
    DumpSpectrum,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Pullback => "pullback",
            Command::Absorb => "absorb",
            Command::Measure => "measure",
            Command::Checks => "checks",
            Command::DumpSpectrum => "dump-spectrum",
        }
    }

    fn kind(self) -> Option<ExperimentKind> {
        self.name().parse().ok()
    }
}

fn load(cli: &Cli) -> Result<Settings, LabError> {
    let mut settings = match &cli.config {
        None => Settings::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| LabError::Validation(format!("--config {}: {e}", p.display())))?;
            Settings::parse(&text).map_err(|e| LabError::Validation(format!("{}: {e}", p.display())))?
        }
    };
    if let (Some(want), Some(kind)) = (settings.experiment.kind, cli.command.kind()) {
        if want != kind {
            return Err(LabError::Validation(format!(
                "config key `experiment` = {} does not match the subcommand {}",
                want.name(),
                kind.name()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        settings.run.seed = seed;
    }
    if let Some(every) = cli.snapshot_every {
        settings.run.snapshot_every = every;
    }
    Ok(settings)
}

fn execute(cli: &Cli) -> Result<Report, LabError> {
    let settings = load(cli)?;
    let out: &Path = cli
        .out
        .as_deref()
        .ok_or_else(|| LabError::Validation("missing --out DIR".into()))?;
    // Validate everything before touching the filesystem.
    let model = match cli.command {
        Command::DumpSpectrum => None,
        _ => Some(commands::build_model(&settings)?),
    };
    prepare_out(out, cli.force)?;
    let result = match (cli.command, &model) {
        (Command::DumpSpectrum, _) | (_, None) => commands::dump_spectrum(&settings, out),
        (Command::Run, Some(m)) => commands::run(&settings, m, out),
        (Command::Pullback, Some(m)) => commands::pullback(&settings, m, out),
        (Command::Absorb, Some(m)) => commands::absorb(&settings, m, out),
        (Command::Measure, Some(m)) => commands::measure(&settings, m, out),
        (Command::Checks, Some(m)) => commands::checks(&settings, m, out),
    };
    let outputs = match &result {
        Ok(r) => r.outputs.clone(),
        Err(_) => Vec::new(),
    };
    write_manifest(
        out.join("manifest.txt"),
        cli.command.name(),
        settings.run.seed,
        &outputs,
        &settings.echo(),
    )?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            println!("{}", report.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("moistpe {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
