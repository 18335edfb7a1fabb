//! Experiment configuration files (TOML).

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crra::HdraSpec;
use crate::equilibrium::SolverConfig;
use crate::error::{GdaError, Result};
use crate::market::MarketModel;
use crate::preference::{GdaParams, Utility};
use crate::verify::{CertifyOptions, McConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Surface,
    Equilibrium,
    Crra,
    Hdra,
    Verify,
    Figures,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Surface => "surface",
            Mode::Equilibrium => "equilibrium",
            Mode::Crra => "crra",
            Mode::Hdra => "hdra",
            Mode::Verify => "verify",
            Mode::Figures => "figures",
        }
    }
}

impl FromStr for Mode {
    type Err = GdaError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "surface" => Mode::Surface,
            "equilibrium" => Mode::Equilibrium,
            "crra" => Mode::Crra,
            "hdra" => Mode::Hdra,
            "verify" => Mode::Verify,
            "figures" => Mode::Figures,
            other => return Err(GdaError::Config(format!("unknown mode '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub start: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

/// Either constant coefficients (`mu`, `sigma`) or a list of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentSpec>,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec { horizon: 3.0, mu: Some(vec![0.06]), sigma: Some(vec![vec![0.3]]), segments: Vec::new() }
    }
}

impl MarketSpec {
    pub fn build(&self) -> Result<MarketModel> {
        match (&self.mu, &self.sigma, self.segments.is_empty()) {
            (Some(mu), Some(sigma), true) => MarketModel::constant(mu.clone(), sigma.clone(), self.horizon),
            (None, None, false) => MarketModel::piecewise(
                self.horizon,
                self.segments.iter().map(|s| (s.start, s.mu.clone(), s.sigma.clone())).collect(),
            ),
            _ => Err(GdaError::Config(
                "market needs either both `mu` and `sigma` or a non-empty `segments` list".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKindSpec {
    #[default]
    Crra,
    /// `w·U_{ρ_a} + (1-w)·U_{ρ_b}`.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtilitySpec {
    pub kind: UtilityKindSpec,
    pub rho: f64,
    pub rho_b: Option<f64>,
    pub weight: Option<f64>,
}

impl Default for UtilitySpec {
    fn default() -> Self {
        UtilitySpec { kind: UtilityKindSpec::Crra, rho: 1.0, rho_b: None, weight: None }
    }
}

impl UtilitySpec {
    pub fn build(&self) -> Result<Utility> {
        match self.kind {
            UtilityKindSpec::Crra => {
                if self.rho_b.is_some() || self.weight.is_some() {
                    return Err(GdaError::Config("`rho_b` and `weight` apply to mixture utilities only".into()));
                }
                Utility::crra(self.rho)
            }
            UtilityKindSpec::Mixture => {
                let rho_b = self.rho_b.ok_or_else(|| GdaError::Config("mixture utility needs `rho_b`".into()))?;
                let w = self.weight.ok_or_else(|| GdaError::Config("mixture utility needs `weight`".into()))?;
                Utility::crra_mixture(self.rho, rho_b, w)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HdraSection {
    /// `ρ(t) = ρ + αt`, with `ρ` from the utility section.
    pub alpha: f64,
}

impl Default for HdraSection {
    fn default() -> Self {
        HdraSection { alpha: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Strategy CSV to certify; solved afresh when absent.
    pub input: Option<PathBuf>,
    pub k_scale: f64,
    pub tol: f64,
    pub n_paths: usize,
    /// Also run the Monte-Carlo value oracle on the wealth at `t = 0`.
    pub monte_carlo: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        let c = CertifyOptions::default();
        VerifySection { input: None, k_scale: c.k_scale, tol: c.tol, n_paths: 100_000, monte_carlo: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub v_max: f64,
    pub n_v: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
    /// Level of the indifference curve; defaults to the one through the origin.
    pub level: Option<f64>,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection { v_max: 0.5, n_v: 51, y_min: -0.2, y_max: 0.2, n_y: 5, level: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub preset: Option<String>,
    pub seed: u64,
    pub market: MarketSpec,
    pub utility: UtilitySpec,
    pub gda: GdaParams,
    pub solver: SolverConfig,
    pub hdra: HdraSection,
    pub verify: VerifySection,
    pub surface: SurfaceSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: None,
            preset: None,
            seed: McConfig::default().seed,
            market: MarketSpec::default(),
            utility: UtilitySpec::default(),
            gda: GdaParams { beta: 0.5, delta: 0.9 },
            solver: SolverConfig::default(),
            hdra: HdraSection::default(),
            verify: VerifySection::default(),
            surface: SurfaceSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks every section; `mode` decides which extra rules apply.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        let market = self.market.build()?;
        let u = self.utility.build()?;
        GdaParams::new(self.gda.beta, self.gda.delta)?;
        self.solver.validate()?;
        if self.solver.grid_step > market.horizon() {
            return Err(GdaError::Config("solver.grid_step exceeds the horizon".into()));
        }
        match mode {
            Mode::Crra | Mode::Hdra => {
                if u.crra_rho().is_none() {
                    return Err(GdaError::Config(format!("{} mode needs a power utility", mode.as_str())));
                }
                if self.gda.delta == 1.0 && self.gda.beta > 0.0 {
                    return Err(GdaError::Config(format!(
                        "{} mode needs delta != 1; with delta = 1 the equilibrium is not to invest \
                         (run the `equilibrium` mode to get the zero strategy)",
                        mode.as_str()
                    )));
                }
                if mode == Mode::Hdra {
                    HdraSpec::affine(self.hdra.alpha)?;
                }
            }
            Mode::Surface => {
                let s = &self.surface;
                if !(s.v_max >= 0.0) || s.n_v < 2 || s.n_y < 1 || !(s.y_max >= s.y_min) {
                    return Err(GdaError::Config("surface grid needs v_max >= 0, n_v >= 2, n_y >= 1, y_min <= y_max".into()));
                }
                if let Some(l) = s.level {
                    if !(l > 0.0) {
                        return Err(GdaError::Config("surface.level must be positive".into()));
                    }
                }
            }
            Mode::Verify => {
                let v = &self.verify;
                if !(v.k_scale > 0.0) || !(v.tol > 0.0) {
                    return Err(GdaError::Config("verify.k_scale and verify.tol must be positive".into()));
                }
                McConfig { n_paths: v.n_paths, n_steps: 1, seed: self.seed }.validate()?;
            }
            Mode::Figures => {
                let p = self.preset.as_deref().ok_or_else(|| GdaError::Config("figures mode needs a preset".into()))?;
                super::presets::Preset::from_str(p)?;
            }
            Mode::Equilibrium => {}
        }
        Ok(())
    }
}

/// Parses a TOML configuration. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| GdaError::Config(e.message().to_string()))
}
