use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use skinflow_cli::config::Format;
use skinflow_cli::{run, CliError, Command, Figure, RunConfig};

/// Phase-space analysis of the saturating nonlinear Hatano-Nelson model.
#[derive(Parser, Debug)]
#[command(name = "skinflow", version)]
struct Cli {
    /// TOML run configuration; built-in defaults are used without it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dataset format (overrides `output.format`).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker threads for parallel scans.
    #[arg(long, global = true, env = "SKINFLOW_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Averaged amplitudes, fold threshold and regime over a γ grid.
    Predict,
    /// Limit-cycle branch through the fold with theory overlay.
    Bifurcation,
    /// One shot from ψ(0) = 0 with the given slope, sampled on a uniform grid.
    Trajectory {
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        slope: Option<f64>,
        #[arg(long)]
        length: Option<f64>,
    },
    /// Separatrix slope and skin fraction over a γ grid.
    Basin,
    /// Quasi-static γ sweeps in both directions.
    Sweep,
    /// Canonical datasets for one figure: fig1, fig2, fig3 or fig4.
    Reproduce { figure: String },
}

fn configure(cli: &Cli) -> Result<(RunConfig, Command), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    let command = match &cli.command {
        Cmd::Predict => Command::Predict,
        Cmd::Bifurcation => Command::Bifurcation,
        Cmd::Trajectory { gamma, slope, length } => {
            let t = &mut cfg.trajectory;
            t.gamma = gamma.unwrap_or(t.gamma);
            t.slope = slope.unwrap_or(t.slope);
            t.length = length.or(t.length);
            Command::Trajectory
        }
        Cmd::Basin => Command::Basin,
        Cmd::Sweep => Command::Sweep,
        Cmd::Reproduce { figure } => Command::Reproduce(Figure::parse(figure)?),
    };
    Ok((cfg.finalize()?, command))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => 4,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 4,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = configure(&cli).and_then(|(cfg, command)| {
        let dir = cfg.output.dir.clone();
        run(command, &cfg).map(|()| dir)
    });
    match result {
        Ok(dir) => {
            eprintln!("wrote {}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
