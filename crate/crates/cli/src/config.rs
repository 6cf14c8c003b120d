//! TOML run configuration. Every key is optional; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use scamdyn_core::inference::{ErrorModel, PriorBounds};
use scamdyn_core::integrators::{RemovedUpdate, Scheme};
use scamdyn_core::model::DEFAULT_THRESHOLD_TOL;
use scamdyn_core::observe::{Observable, LIKELIHOOD_STEP};
use scamdyn_core::sensitivity::{ParamRange, DEFAULT_RANGES};
use scamdyn_core::{Param, Parameters, State};

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub init: InitSection,
    pub sim: SimSection,
    pub fit: FitSection,
    pub sensitivity: SensitivitySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub psi: f64,
    pub delta: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let p = Parameters::POSTERIOR_MEANS;
        ParamsSection {
            beta: p.beta,
            sigma: p.sigma,
            gamma: p.gamma,
            psi: p.psi,
            delta: p.delta,
            mu: p.mu,
            lambda: p.lambda,
        }
    }
}

impl ParamsSection {
    pub fn parameters(&self) -> Parameters {
        Parameters::from_array([self.beta, self.sigma, self.gamma, self.psi, self.delta, self.mu, self.lambda])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "As")]
    pub a_s: f64,
    #[serde(rename = "Rs")]
    pub r_s: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection { s: 1000.0, v: 100.0, r: 0.0, a_s: 200.0, r_s: 0.0 }
    }
}

impl InitSection {
    pub fn state(&self) -> State {
        State::new(self.s, self.v, self.r, self.a_s, self.r_s)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub h: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub removed_update: RemovedUpdate,
    /// Population used for R0; defaults to the initial total.
    pub n: Option<f64>,
    pub threshold_tol: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            h: 1.0,
            t_end: 1520.0,
            scheme: Scheme::Nsfd,
            removed_update: RemovedUpdate::Forward,
            n: None,
            threshold_tol: DEFAULT_THRESHOLD_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModelKind {
    #[default]
    Sampled,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    /// Fit a single province; all provinces are pooled when absent.
    pub province: Option<String>,
    /// Multiplier applied to report counts before fitting.
    pub scale: f64,
    pub iterations: usize,
    pub adapt_interval: usize,
    pub adapt: bool,
    pub dr_stages: u8,
    pub dr_scale: f64,
    pub seed: u64,
    pub error_model: ErrorModelKind,
    pub sigma2: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub observable: Observable,
    pub h: f64,
    pub burn_in: f64,
    pub predictive_draws: usize,
    /// `V(0)`; the first observation when absent.
    pub v0: Option<f64>,
    pub lower: Option<BTreeMap<String, f64>>,
    pub upper: Option<BTreeMap<String, f64>>,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            data: None,
            province: None,
            scale: 1.0,
            iterations: 10_000,
            adapt_interval: 100,
            adapt: true,
            dr_stages: 2,
            dr_scale: 5.0,
            seed: 0,
            error_model: ErrorModelKind::Sampled,
            sigma2: 1.0,
            sigma2_shape: 0.5,
            sigma2_scale: 0.5,
            observable: Observable::Prevalence,
            h: LIKELIHOOD_STEP,
            burn_in: 0.5,
            predictive_draws: 200,
            v0: None,
            lower: None,
            upper: None,
        }
    }
}

impl FitSection {
    pub fn error_model(&self) -> ErrorModel {
        match self.error_model {
            ErrorModelKind::Sampled => ErrorModel::SampledSigma { shape: self.sigma2_shape, scale: self.sigma2_scale },
            ErrorModelKind::Fixed => ErrorModel::FixedSigma(self.sigma2),
        }
    }

    /// Default bounds with any per-parameter overrides applied.
    pub fn bounds(&self) -> Result<PriorBounds, ConfigError> {
        let mut b = PriorBounds::default();
        apply_overrides(&mut b.lower, self.lower.as_ref(), "fit.lower")?;
        apply_overrides(&mut b.upper, self.upper.as_ref(), "fit.upper")?;
        PriorBounds::new(b.lower, b.upper).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn apply_overrides(slots: &mut [f64; 7], map: Option<&BTreeMap<String, f64>>, key: &str) -> Result<(), ConfigError> {
    for (name, value) in map.into_iter().flatten() {
        let param: Param = name.parse().map_err(|e| ConfigError::Invalid(format!("{key}: {e}")))?;
        slots[param.index()] = *value;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    pub n: usize,
    pub seed: u64,
    pub h: f64,
    pub horizon: f64,
    /// Per-parameter `[low, high]` overrides of the sampling ranges.
    pub ranges: BTreeMap<String, [f64; 2]>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection { n: 2500, seed: 0, h: 1.0, horizon: 1520.0, ranges: BTreeMap::new() }
    }
}

impl SensitivitySection {
    pub fn ranges(&self) -> Result<[ParamRange; 7], ConfigError> {
        let mut ranges = DEFAULT_RANGES;
        for (name, [low, high]) in &self.ranges {
            let param: Param = name.parse().map_err(|e| ConfigError::Invalid(format!("sensitivity.ranges: {e}")))?;
            ranges[param.index()] = ParamRange { low: *low, high: *high };
        }
        Ok(ranges)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parameters(&self) -> Parameters {
        self.params.parameters()
    }

    /// Population entering R0: `[sim] n`, else the initial total.
    pub fn population(&self) -> f64 {
        self.sim.n.unwrap_or_else(|| self.init.state().total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.parameters(), Parameters::POSTERIOR_MEANS);
        assert_eq!(cfg.init.state(), State::new(1000.0, 100.0, 0.0, 200.0, 0.0));
        assert_eq!(cfg.population(), 1300.0);
        assert_eq!(cfg.fit.iterations, 10_000);
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            r#"
            [params]
            lambda = 0.05
            [init]
            S = 500.0
            As = 10.0
            [sim]
            scheme = "reference"
            removed_update = "lagged"
            n = 1000.0
            [fit]
            observable = "incidence"
            error_model = "fixed"
            lower = { beta = 0.001 }
            [sensitivity]
            n = 50
            ranges = { lambda = [0.0, 0.5] }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.params.lambda, 0.05);
        assert_eq!(cfg.init.s, 500.0);
        assert_eq!(cfg.init.v, 100.0);
        assert_eq!(cfg.sim.scheme, Scheme::ReferenceRk);
        assert_eq!(cfg.sim.removed_update, RemovedUpdate::Lagged);
        assert_eq!(cfg.population(), 1000.0);
        assert_eq!(cfg.fit.observable, Observable::Incidence);
        assert_eq!(cfg.fit.error_model(), ErrorModel::FixedSigma(1.0));
        assert_eq!(cfg.fit.bounds().unwrap().lower[0], 0.001);
        assert_eq!(cfg.sensitivity.ranges().unwrap()[6], ParamRange { low: 0.0, high: 0.5 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[params]\nbeta_typo = 1.0").is_err());
        assert!(RunConfig::parse("[nonsense]\nx = 1").is_err());
        assert!(RunConfig::parse("top = 1").is_err());
        assert!(RunConfig::parse("[sim]\nscheme = \"euler\"").is_err());
    }

    #[test]
    fn bad_override_names() {
        let cfg = RunConfig::parse("[fit]\nupper = { zeta = 1.0 }").unwrap();
        assert!(cfg.fit.bounds().is_err());
        let cfg = RunConfig::parse("[sensitivity]\nranges = { zeta = [0.0, 1.0] }").unwrap();
        assert!(cfg.sensitivity.ranges().is_err());
    }
}
