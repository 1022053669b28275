//! Command-line front end for `fracedwards`: configuration, output
//! directories, manifests and the subcommands themselves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub mod commands;
pub mod config;
pub mod manifest;
pub mod selftest;

pub use config::{parse_config, RunConfig};
pub use manifest::{OutputDir, RunManifest};

/// Overrides the base output directory unless `--out` is given.
pub const OUT_ENV: &str = "FRACEDWARDS_OUT";

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration.
    Config(String),
    /// A library computation failed.
    Numeric {
        context: String,
        source: fracedwards::Error,
    },
    Io(String),
    /// Names of the failed suites.
    Selftest(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric { .. } | CliError::Io(_) => 2,
            CliError::Selftest(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric { context, source } => write!(f, "{context}: {source}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Selftest(names) => write!(f, "selftest failed: {}", names.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

/// Attaches subcommand context to library errors.
pub trait Context<T> {
    fn ctx(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for fracedwards::Result<T> {
    fn ctx(self, context: &str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            // a parameter the config let through but the library refuses
            fracedwards::Error::InvalidParameter { .. } => CliError::Config(format!("{context}: {source}")),
            source => CliError::Numeric { context: context.to_string(), source },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    SampleFbm,
    Silt,
    HolderCheck,
    DensityScan,
    EdwardsEstimate,
    QuantizeRun,
    Selftest,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::SampleFbm,
        Subcommand::Silt,
        Subcommand::HolderCheck,
        Subcommand::DensityScan,
        Subcommand::EdwardsEstimate,
        Subcommand::QuantizeRun,
        Subcommand::Selftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::SampleFbm => "sample-fbm",
            Subcommand::Silt => "silt",
            Subcommand::HolderCheck => "holder-check",
            Subcommand::DensityScan => "density-scan",
            Subcommand::EdwardsEstimate => "edwards-estimate",
            Subcommand::QuantizeRun => "quantize-run",
            Subcommand::Selftest => "selftest",
        }
    }
}

impl FromStr for Subcommand {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| CliError::Config(format!("unknown subcommand `{s}`")))
    }
}

/// Everything about a run that is not part of the config itself.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Base output directory; the run goes to `<out>/<subcommand>/`. [`output_root`] picks the default.
    pub out: Option<PathBuf>,
    /// Config file text as given, copied verbatim into the run directory.
    pub source_text: Option<String>,
    /// `sample-fbm`: use the circulant backend.
    pub circulant: bool,
    /// `quantize-run`: directory holding `checkpoint_<c>.bin` files to continue from.
    pub resume: Option<PathBuf>,
}

/// `--out`, then the environment variable, then `run.output`.
pub fn output_root(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(&config.run.output),
    }
}

/// Runs one subcommand into `<root>/<name>/` and writes its manifest.
pub fn run_subcommand(cmd: Subcommand, config: &RunConfig, options: &RunOptions) -> Result<RunManifest, CliError> {
    config.validate()?;
    let dir = options.out.clone().unwrap_or_else(|| output_root(None, config)).join(cmd.name());
    let mut out = OutputDir::create(dir)?;
    let canonical = config.to_text();
    out.write("config.toml", options.source_text.as_deref().unwrap_or(&canonical).as_bytes())?;
    out.write("config.effective.toml", canonical.as_bytes())?;
    let mut warnings: Vec<String> = config.regime_warning().into_iter().collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.threads)
        .build()
        .map_err(|e| CliError::Config(format!("`run.threads`: {e}")))?;
    let outcome = pool.install(|| match cmd {
        Subcommand::SampleFbm => commands::sample_fbm(config, options, &mut out),
        Subcommand::Silt => commands::silt(config, &mut out),
        Subcommand::HolderCheck => commands::holder_check(config, &mut out),
        Subcommand::DensityScan => commands::density_scan(config, &mut out),
        Subcommand::EdwardsEstimate => commands::edwards_estimate(config, &mut out),
        Subcommand::QuantizeRun => commands::quantize_run(config, options, &mut out),
        Subcommand::Selftest => selftest::run(config, &mut out),
    });
    let failed = match outcome {
        Ok(w) => {
            warnings.extend(w);
            Vec::new()
        }
        Err(CliError::Selftest(names)) => names,
        Err(e) => return Err(e),
    };
    let manifest = out.finish(cmd.name(), config.hash(), warnings)?;
    if failed.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::Selftest(failed))
    }
}
