use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcrx_cli::presets::preset;
use mcrx_cli::spec::{AlgorithmChoice, Command, SweepSpec};
use mcrx_cli::table::Format;
use mcrx_cli::{runners, CliError, CliResult};

#[derive(Parser)]
#[command(name = "mcrx", version, about = "Detection-interval sweeps for diffusive molecular links")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// BER against T_r/T_b.
    BerCurve(Flags),
    /// Optimal T_r per sweep point.
    Optimize(Flags),
    /// Optimal T_r against a/b for an interferer of unknown location (1D).
    UnknownLocation(Flags),
    /// Simulated ISI BER at T_r* and T_b against T_b.
    Isi(Flags),
    /// Particle simulation against closed-form hit probabilities.
    Particle(Flags),
    /// Built-in figure recipe.
    Preset {
        /// fig2..fig8, fig10, fig11
        name: String,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    /// JSON sweep spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials; particle count for `particle`, sequences for `isi`.
    #[arg(long)]
    trials: Option<u64>,
    /// Grid oracle points.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmChoice>,
}

fn load(command: Command, flags: &Flags, preset_spec: Option<SweepSpec>) -> CliResult<SweepSpec> {
    let mut spec = match (&flags.config, preset_spec) {
        (Some(path), _) => SweepSpec::from_path(path)?,
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(out) = &flags.out {
        spec.out = Some(out.clone());
    }
    if let Some(f) = flags.format {
        spec.format = f;
    }
    if let Some(s) = flags.seed {
        spec.seed = s;
    }
    if let Some(n) = flags.trials {
        match command {
            Command::Particle => spec.particles = n,
            Command::Isi => spec.sequences = n,
            _ => spec.trials = Some(n),
        }
    }
    if let Some(g) = flags.grid {
        spec.grid = g;
    }
    if let Some(a) = flags.algorithm {
        spec.algorithms = vec![a];
    }
    Ok(spec)
}

fn execute(cli: Cli) -> CliResult<()> {
    let (command, flags, preset_spec) = match cli.command {
        Sub::BerCurve(f) => (Command::BerCurve, f, None),
        Sub::Optimize(f) => (Command::Optimize, f, None),
        Sub::UnknownLocation(f) => (Command::UnknownLocation, f, None),
        Sub::Isi(f) => (Command::Isi, f, None),
        Sub::Particle(f) => (Command::Particle, f, None),
        Sub::Preset { name, flags } => {
            let (c, s) = preset(&name)?;
            (c, flags, Some(s))
        }
    };
    let spec = load(command, &flags, preset_spec)?;
    let table = runners::run(command, &spec)?;
    let text = table.render(spec.format);
    match &spec.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Config(format!("out {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcrx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
