//! Run configuration: `key = value` text in sections, parsed as TOML.
//!
//! Every section and key has a default, so an empty file is a valid config.
//! Unknown sections or keys are rejected with the offending name in the
//! message.

use std::str::FromStr;

use fracedwards::cameron_martin::NamedShift;
use fracedwards::edwards::MalaConfig;
use fracedwards::fbm::ModelParams;
use fracedwards::moments::{ExponentMode, PairSchedule};
use fracedwards::silt::{Centering, LadderConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Base output directory; each subcommand writes into `<output>/<name>/`.
    pub output: String,
    pub seed: u64,
    /// Path count for ensemble-style subcommands.
    pub replicas: usize,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { output: "runs".into(), seed: 0, replicas: 1000, threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(rename = "H")]
    pub hurst: f64,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub g: f64,
    #[serde(rename = "N")]
    pub grid_points: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hurst: 0.5, d: 2, horizon: 1.0, g: 0.1, grid_points: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringName {
    Grid,
    Continuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiltSection {
    pub eps0: f64,
    /// Ladder runs `eps0 · 2^{-j}` for `j = 0..=levels`.
    pub levels: usize,
    pub centering: CenteringName,
}

impl Default for SiltSection {
    fn default() -> Self {
        Self { eps0: 0.1, levels: 4, centering: CenteringName::Grid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MalaSection {
    pub step: f64,
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
    pub chains: usize,
    pub target_accept: f64,
    pub adapt: bool,
}

impl Default for MalaSection {
    fn default() -> Self {
        let m = MalaConfig::<f64>::default();
        Self {
            step: m.step,
            burn_in: m.burn_in,
            iterations: m.iterations,
            thin: m.thin,
            chains: m.chains,
            target_accept: m.target_accept,
            adapt: m.adapt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Coupling,
    Strict,
}

/// Shift direction and `u` grid shared by `holder-check` and `density-scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// `linear`, `sine` or `covcol:j`.
    pub shift: String,
    pub anchor: f64,
    pub gaps: Vec<f64>,
    pub u_lo: f64,
    pub u_hi: f64,
    /// Fine-grid steps of the density scan; must be even.
    pub steps: usize,
    pub paths: usize,
    pub mode: ModeName,
}

impl Default for ScanSection {
    fn default() -> Self {
        let schedule = PairSchedule::<f64>::default();
        Self {
            shift: "sine".into(),
            anchor: schedule.anchor,
            gaps: schedule.gaps,
            u_lo: 0.0,
            u_hi: 1.0,
            steps: 20,
            paths: 100,
            mode: ModeName::Coupling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormSection {
    /// Covariance columns per component in the Cameron–Martin basis.
    pub n_trunc: usize,
}

impl Default for FormSection {
    fn default() -> Self {
        Self { n_trunc: 8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub silt: SiltSection,
    pub mala: MalaSection,
    pub scan: ScanSection,
    pub form: FormSection,
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {reason}"))
}

/// Parses and validates a config; defaults fill every missing key.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if !(m.hurst > 0.0 && m.hurst < 1.0) {
            return Err(invalid("model.H", format!("{} not in (0, 1)", m.hurst)));
        }
        if m.d == 0 {
            return Err(invalid("model.d", "must be at least 1"));
        }
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(invalid("model.T", format!("{} must be positive", m.horizon)));
        }
        if !(m.g >= 0.0 && m.g.is_finite()) {
            return Err(invalid("model.g", format!("{} must be finite and nonnegative", m.g)));
        }
        if m.grid_points < 3 {
            return Err(invalid("model.N", "need at least 3 grid points"));
        }
        if !(self.silt.eps0 > 0.0 && self.silt.eps0.is_finite()) {
            return Err(invalid("silt.eps0", "must be positive"));
        }
        if self.silt.levels < 3 {
            return Err(invalid("silt.levels", "ladder needs at least 3 levels"));
        }
        let k = &self.mala;
        if !(k.step > 0.0 && k.step.is_finite()) {
            return Err(invalid("mala.step", "must be positive"));
        }
        if k.thin == 0 || k.chains == 0 || k.iterations == 0 {
            return Err(invalid("mala", "iterations, thin and chains must be positive"));
        }
        if !(k.target_accept > 0.0 && k.target_accept < 1.0) {
            return Err(invalid("mala.target_accept", "must lie in (0, 1)"));
        }
        let s = &self.scan;
        NamedShift::from_str(&s.shift).map_err(|e| invalid("scan.shift", e))?;
        if s.gaps.len() < 2 || s.gaps.iter().any(|g| !(*g > 0.0)) {
            return Err(invalid("scan.gaps", "need at least two positive gaps"));
        }
        if s.steps < 2 || !s.steps.is_multiple_of(2) {
            return Err(invalid("scan.steps", "must be even and at least 2"));
        }
        if !(s.u_hi > s.u_lo) {
            return Err(invalid("scan.u_hi", "must exceed u_lo"));
        }
        if s.paths == 0 {
            return Err(invalid("scan.paths", "must be positive"));
        }
        if self.form.n_trunc == 0 {
            return Err(invalid("form.n_trunc", "must be positive"));
        }
        if self.run.seed > i64::MAX as u64 {
            return Err(invalid("run.seed", "must fit in a signed 64-bit integer"));
        }
        if self.run.replicas == 0 {
            return Err(invalid("run.replicas", "must be positive"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// `H·d = 1`, the regime the Edwards construction is built for.
    pub fn critical(&self) -> bool {
        (self.model.hurst * self.model.d as f64 - 1.0).abs() < 1e-12
    }

    pub fn regime_warning(&self) -> Option<String> {
        (!self.critical()).then(|| {
            format!("H·d = {} ≠ 1: outside the regime the centered local time construction targets", self.model.hurst * self.model.d as f64)
        })
    }

    pub fn params(&self) -> Result<ModelParams<f64>, CliError> {
        let m = &self.model;
        ModelParams::new(m.hurst, m.d, m.horizon, m.g, m.grid_points, self.run.seed).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ladder(&self) -> Result<LadderConfig<f64>, CliError> {
        LadderConfig::new(self.silt.eps0, self.silt.levels).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn centering(&self) -> Centering {
        match self.silt.centering {
            CenteringName::Grid => Centering::Grid,
            CenteringName::Continuum => Centering::Continuum,
        }
    }

    /// The chain targets the ladder floor `ε`.
    pub fn mala(&self) -> Result<MalaConfig<f64>, CliError> {
        let k = &self.mala;
        Ok(MalaConfig {
            eps: self.ladder()?.smallest(),
            step: k.step,
            burn_in: k.burn_in,
            iterations: k.iterations,
            thin: k.thin,
            chains: k.chains,
            target_accept: k.target_accept,
            adapt: k.adapt,
        })
    }

    pub fn shift(&self) -> Result<NamedShift, CliError> {
        NamedShift::from_str(&self.scan.shift).map_err(|e| invalid("scan.shift", e))
    }

    pub fn schedule(&self) -> PairSchedule<f64> {
        PairSchedule { anchor: self.scan.anchor, gaps: self.scan.gaps.clone() }
    }

    pub fn mode(&self) -> ExponentMode {
        match self.scan.mode {
            ModeName::Coupling => ExponentMode::Coupling,
            ModeName::Strict => ExponentMode::StrictPaper,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_model_section_gives_defaults() {
        let c = parse_config("[model]\n").unwrap();
        assert_eq!((c.model.hurst, c.model.d, c.model.horizon, c.model.g, c.model.grid_points), (0.5, 2, 1.0, 0.1, 256));
        assert!(c.critical());
        assert!(c.regime_warning().is_none());
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn regime_flag_follows_product() {
        let c = parse_config("[model]\nH = 0.25\nd = 4\n").unwrap();
        assert!(c.critical());
        let c = parse_config("[model]\nH = 0.3\nd = 2\n").unwrap();
        assert!(!c.critical());
        assert!(c.regime_warning().unwrap().contains("0.6"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[model]\nhurst = 0.4\n").unwrap_err();
        assert!(matches!(&err, CliError::Config(m) if m.contains("hurst")), "{err}");
        let err = parse_config("[chain]\nstep = 1\n").unwrap_err();
        assert!(err.to_string().contains("chain"), "{err}");
    }

    #[test]
    fn type_mismatch_and_constraints_name_the_key() {
        let err = parse_config("[model]\nd = \"two\"\n").unwrap_err();
        assert!(err.to_string().contains('d'), "{err}");
        let err = parse_config("[model]\nH = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("model.H"), "{err}");
        let err = parse_config("[scan]\nsteps = 7\n").unwrap_err();
        assert!(err.to_string().contains("scan.steps"), "{err}");
        let err = parse_config("[scan]\nshift = \"zigzag\"\n").unwrap_err();
        assert!(err.to_string().contains("scan.shift"), "{err}");
    }

    #[test]
    fn mala_targets_ladder_floor() {
        let c = RunConfig::default();
        assert_eq!(c.mala().unwrap().eps, 0.1 / 16.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn text_round_trip(
            h in 0.01f64..0.99, d in 1usize..6, t in 0.1f64..10.0, g in 0.0f64..2.0, n in 10usize..2000,
            seed in 0u64..i64::MAX as u64, eps0 in 1e-4f64..1.0, levels in 3usize..10, step in 0.01f64..2.0, chains in 1usize..8,
            continuum: bool, strict: bool,
        ) {
            let c = RunConfig {
                run: RunSection { seed, ..RunSection::default() },
                model: ModelSection { hurst: h, d, horizon: t, g, grid_points: n },
                silt: SiltSection { eps0, levels, centering: if continuum { CenteringName::Continuum } else { CenteringName::Grid } },
                mala: MalaSection { step, chains, ..MalaSection::default() },
                scan: ScanSection { mode: if strict { ModeName::Strict } else { ModeName::Coupling }, ..ScanSection::default() },
                form: FormSection::default(),
            };
            let back = parse_config(&c.to_text()).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.hash(), c.hash());
        }
    }
}
