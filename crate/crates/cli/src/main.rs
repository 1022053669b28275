use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use fracedwards_cli::{output_root, parse_config, run_subcommand, CliError, RunConfig, RunOptions, Subcommand};

/// Fractional Edwards measure numerics at desk scale.
#[derive(Parser, Debug)]
#[command(name = "fracedwards", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file (`key = value` lines under [run], [model], [silt], [mala], [scan], [form]).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Base output directory; beats FRACEDWARDS_OUT and `run.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `model.N`, the number of grid points.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Overrides `run.replicas`.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Overrides `run.threads` (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Sample fBm paths to CSV.
    SampleFbm {
        /// Davies–Harte circulant embedding instead of Cholesky.
        #[arg(long)]
        circulant: bool,
    },
    /// Regularized and centered local time along the ε ladder, per path.
    Silt,
    /// L² squared differences of the shifted local time and their log–log slope.
    HolderCheck,
    /// Scan of the shifted density a_u over a u grid.
    DensityScan,
    /// Importance-weighted Edwards ensemble, ESS and a Dirichlet form value.
    EdwardsEstimate,
    /// MALA chains targeting the fixed-ε Edwards density.
    QuantizeRun {
        /// Directory with `checkpoint_<c>.bin` files from an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Reduced-scale invariant suite; exit code 3 on any failure.
    Selftest,
}

fn load(common: &Common) -> Result<(RunConfig, Option<String>), CliError> {
    let text = match &common.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?),
        None => None,
    };
    let mut config = parse_config(text.as_deref().unwrap_or(""))?;
    if let Some(s) = common.seed {
        config.run.seed = s;
    }
    if let Some(n) = common.n {
        config.model.grid_points = n;
    }
    if let Some(r) = common.replicas {
        config.run.replicas = r;
    }
    if let Some(t) = common.threads {
        config.run.threads = t;
    }
    config.validate()?;
    Ok((config, text))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (config, source_text) = load(&cli.common)?;
    let mut options = RunOptions { out: Some(output_root(cli.common.out.as_deref(), &config)), source_text, ..RunOptions::default() };
    let cmd = match cli.command {
        Command::SampleFbm { circulant } => {
            options.circulant = circulant;
            Subcommand::SampleFbm
        }
        Command::Silt => Subcommand::Silt,
        Command::HolderCheck => Subcommand::HolderCheck,
        Command::DensityScan => Subcommand::DensityScan,
        Command::EdwardsEstimate => Subcommand::EdwardsEstimate,
        Command::QuantizeRun { resume } => {
            options.resume = resume;
            Subcommand::QuantizeRun
        }
        Command::Selftest => Subcommand::Selftest,
    };
    if let Some(w) = config.regime_warning() {
        eprintln!("warning: {w}");
    }
    let manifest = run_subcommand(cmd, &config, &options)?;
    for w in manifest.warnings.iter().skip(config.regime_warning().is_some() as usize) {
        eprintln!("warning: {w}");
    }
    let dir = options.out.unwrap_or_default().join(cmd.name());
    println!("{}: {} outputs in {} ({:.2}s)", cmd.name(), manifest.outputs.len(), dir.display(), manifest.wall_clock_seconds);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
