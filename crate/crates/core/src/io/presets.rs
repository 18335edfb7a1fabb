//! Named experiment presets reproducing the standard figure set.

use std::fmt;
use std::str::FromStr;

use crate::error::{GdaError, Result};
use crate::market::MarketModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Indifference curves through the origin: GDA with δ = 1.1 and 0.9, and EU.
    Fig1,
    /// The same for disappointment aversion (δ = 1) against EU.
    Fig2,
    Fig3a,
    Fig3b,
    Fig4a,
    Fig4b,
    Fig5a,
    Fig5b,
}

pub const ALL_PRESETS: [Preset; 8] = [
    Preset::Fig1,
    Preset::Fig2,
    Preset::Fig3a,
    Preset::Fig3b,
    Preset::Fig4a,
    Preset::Fig4b,
    Preset::Fig5a,
    Preset::Fig5b,
];

/// One curve of a preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSpec {
    pub beta: f64,
    pub delta: f64,
    /// Slope of `ρ(t) = 1 + αt`, for the horizon-dependent presets.
    pub alpha: Option<f64>,
}

impl SeriesSpec {
    pub fn label(&self) -> String {
        let mut s = format!("beta{}_delta{}", self.beta, self.delta);
        if let Some(a) = self.alpha {
            s.push_str(&format!("_alpha{a}"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    /// Indifference curves and MRS over `v`.
    Curves,
    /// Equilibrium `(t, π)` paths.
    Strategies,
}

pub const PRESET_RHO: f64 = 1.0;
pub const PRESET_MU: f64 = 0.06;
pub const PRESET_SIGMA: f64 = 0.3;
pub const PRESET_HORIZON: f64 = 3.0;
/// `v` range and resolution of the indifference-curve presets.
pub const CURVE_V_MAX: f64 = 0.5;
pub const CURVE_POINTS: usize = 101;

fn s(beta: f64, delta: f64) -> SeriesSpec {
    SeriesSpec { beta, delta, alpha: None }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3a => "fig3a",
            Preset::Fig3b => "fig3b",
            Preset::Fig4a => "fig4a",
            Preset::Fig4b => "fig4b",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
        }
    }

    pub fn kind(self) -> PresetKind {
        match self {
            Preset::Fig1 | Preset::Fig2 => PresetKind::Curves,
            _ => PresetKind::Strategies,
        }
    }

    pub fn series(self) -> Vec<SeriesSpec> {
        match self {
            // β = 0 is the expected-utility reference; δ is then irrelevant.
            Preset::Fig1 => vec![s(0.5, 1.1), s(0.5, 0.9), s(0.0, 0.9)],
            Preset::Fig2 => vec![s(0.5, 1.0), s(0.0, 1.0)],
            Preset::Fig3a => vec![s(0.5, 0.7), s(0.5, 0.8), s(0.5, 0.9)],
            Preset::Fig3b => vec![s(0.5, 1.1), s(0.5, 1.2), s(0.5, 1.3)],
            Preset::Fig4a => vec![s(0.5, 0.9), s(0.6, 0.9), s(0.7, 0.9)],
            Preset::Fig4b => vec![s(0.5, 1.1), s(0.6, 1.1), s(0.7, 1.1)],
            Preset::Fig5a | Preset::Fig5b => {
                let alpha = if self == Preset::Fig5a { 0.5 } else { 2.0 };
                [0.0, 0.5].map(|beta| SeriesSpec { beta, delta: 0.9, alpha: Some(alpha) }).to_vec()
            }
        }
    }

    /// One stock with `μ = 0.06`, `σ = 0.3` over `T = 3`.
    pub fn market() -> MarketModel {
        MarketModel::constant(vec![PRESET_MU], vec![vec![PRESET_SIGMA]], PRESET_HORIZON)
            .expect("preset market is valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = GdaError;

    fn from_str(s: &str) -> Result<Self> {
        ALL_PRESETS
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| GdaError::Config(format!("unknown preset '{s}' (expected fig1, fig2, fig3a..fig5b)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in ALL_PRESETS {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("fig6".parse::<Preset>().is_err());
    }

    #[test]
    fn series_counts() {
        assert_eq!(Preset::Fig3a.series().len(), 3);
        assert_eq!(Preset::Fig5b.series()[1].alpha, Some(2.0));
        assert_eq!(Preset::Fig4b.series()[2].label(), "beta0.7_delta1.1");
    }
}
