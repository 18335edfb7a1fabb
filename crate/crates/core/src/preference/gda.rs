//! Disappointment-averse certainty equivalents of a single random outcome.

use serde::{Deserialize, Serialize};

use super::kernel::{LogNormalKernel, ROOT_TOL};
use super::utility::Utility;
use crate::error::{GdaError, Result};
use crate::numerics::roots::{bracket_increasing, try_find_root};

/// Disappointment aversion `β >= 0` and threshold `δ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdaParams {
    pub beta: f64,
    pub delta: f64,
}

impl GdaParams {
    pub fn new(beta: f64, delta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(GdaError::param(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(GdaError::param(format!("delta must be finite and > 0, got {delta}")));
        }
        Ok(GdaParams { beta, delta })
    }

    pub fn log_delta(&self) -> f64 {
        self.delta.ln()
    }
}

/// The law of a positive outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeDistribution {
    /// `ln Y ~ N(mean_log, var_log)`.
    LogNormal { mean_log: f64, var_log: f64 },
    /// Finitely many atoms.
    Empirical { values: Vec<f64>, probs: Vec<f64> },
}

impl OutcomeDistribution {
    pub fn lognormal(mean_log: f64, var_log: f64) -> Result<Self> {
        if !mean_log.is_finite() || !(var_log >= 0.0) || !var_log.is_finite() {
            return Err(GdaError::param(format!(
                "log-normal law needs finite mean and variance >= 0, got ({mean_log}, {var_log})"
            )));
        }
        Ok(OutcomeDistribution::LogNormal { mean_log, var_log })
    }

    pub fn empirical(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(GdaError::param("empirical law needs matching, nonempty values and probabilities"));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(GdaError::domain("outcomes must be positive and finite"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(GdaError::param("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GdaError::param(format!("probabilities sum to {total}, not 1")));
        }
        Ok(OutcomeDistribution::Empirical { values, probs })
    }

    /// Equally weighted sample.
    pub fn sample(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::empirical(values, vec![1.0 / n.max(1) as f64; n])
    }
}

/// Outcomes sorted by utility with prefix sums, for `O(log n)` evaluation of
/// `E[(U(t) - U(Y))₊]`.
#[derive(Debug, Clone)]
pub struct SortedOutcomes {
    values: Vec<f64>,
    cum_prob: Vec<f64>,
    cum_pu: Vec<f64>,
    eu: f64,
}

impl SortedOutcomes {
    pub fn new(u: &Utility, values: &[f64], probs: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> =
            values.iter().copied().zip(probs.iter().copied()).filter(|p| p.1 > 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum_prob = Vec::with_capacity(pairs.len() + 1);
        let mut cum_pu = Vec::with_capacity(pairs.len() + 1);
        cum_prob.push(0.0);
        cum_pu.push(0.0);
        let (mut cp, mut cu) = (0.0, 0.0);
        for &(v, p) in &pairs {
            cp += p;
            cu += p * u.value(v);
            cum_prob.push(cp);
            cum_pu.push(cu);
        }
        SortedOutcomes { values: pairs.into_iter().map(|p| p.0).collect(), cum_prob, cum_pu, eu: cu }
    }

    pub fn expected_utility(&self) -> f64 {
        self.eu
    }

    pub fn mean(&self) -> f64 {
        let mut m = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            m += v * (self.cum_prob[i + 1] - self.cum_prob[i]);
        }
        m
    }

    /// `E[(U(t) - U(Y))₊]`.
    pub fn shortfall(&self, u: &Utility, t: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < t);
        (u.value(t) * self.cum_prob[k] - self.cum_pu[k]).max(0.0)
    }

    fn single_atom(&self) -> Option<f64> {
        match self.values.as_slice() {
            [w] => Some(*w),
            [first, .., last] if first == last => Some(*first),
            _ => None,
        }
    }
}

/// `U(η) - E U(Y) + β E[(U(δη) - U(Y))₊]`; zero at the value.
pub fn gda_equation_residual(
    u: &Utility,
    params: &GdaParams,
    dist: &OutcomeDistribution,
    eta: f64,
) -> Result<f64> {
    match dist {
        OutcomeDistribution::Empirical { values, probs } => {
            let s = SortedOutcomes::new(u, values, probs);
            Ok(u.value(eta) - s.eu + params.beta * s.shortfall(u, params.delta * eta))
        }
        OutcomeDistribution::LogNormal { mean_log, var_log } => {
            let x = var_log.sqrt();
            let t = params.delta * eta;
            if x == 0.0 {
                let y = mean_log.exp();
                return Ok(u.value(eta) - u.value(y) + params.beta * (u.value(t) - u.value(y)).max(0.0));
            }
            let k = LogNormalKernel::new(u, params.beta, 0.0, x, *mean_log)?;
            let a = (t.ln() - mean_log) / x;
            let shortfall = crate::numerics::quadrature::gaussian_expect_range(
                |xi| u.value(t) - u.value_log(x * xi + mean_log),
                f64::NEG_INFINITY,
                a,
            )?;
            Ok(u.value(eta) - k.expected_utility() + params.beta * shortfall)
        }
    }
}

/// The value `η` of `Y`, solving `U(η) = E U(Y) - β E[(U(δη) - U(Y))₊]`.
pub fn gda_value(u: &Utility, params: &GdaParams, dist: &OutcomeDistribution) -> Result<f64> {
    match dist {
        OutcomeDistribution::LogNormal { mean_log, var_log } => {
            let x = var_log.sqrt();
            if x == 0.0 {
                return deterministic_value(u, params, mean_log.exp());
            }
            let k = LogNormalKernel::new(u, params.beta, params.log_delta(), x, *mean_log)?;
            let h = k.solve(None)?;
            Ok((mean_log + h - params.log_delta()).exp())
        }
        OutcomeDistribution::Empirical { values, probs } => {
            gda_value_sorted(u, params, &SortedOutcomes::new(u, values, probs))
        }
    }
}

/// [`gda_value`] for outcomes already sorted.
pub fn gda_value_sorted(u: &Utility, params: &GdaParams, s: &SortedOutcomes) -> Result<f64> {
    if s.values.is_empty() {
        return Err(GdaError::param("empty outcome set"));
    }
    if let Some(w) = s.single_atom() {
        return deterministic_value(u, params, w);
    }
    let f = |ls: f64| {
        let p = ls.exp();
        Ok(u.value(p) - s.eu + params.beta * s.shortfall(u, params.delta * p))
    };
    let guess = u.inverse(s.eu).unwrap_or_else(|_| s.mean()).ln();
    let br = bracket_increasing(f, guess, 0.05)?;
    if br.lo == br.hi {
        return Ok(br.lo.exp());
    }
    Ok(try_find_root(f, br, ROOT_TOL)?.exp())
}

/// The value of a sure amount `w`: `w` itself when `δ <= 1`, else `ψ(w)`.
fn deterministic_value(u: &Utility, params: &GdaParams, w: f64) -> Result<f64> {
    if params.delta <= 1.0 || params.beta == 0.0 {
        Ok(w)
    } else {
        psi(u, params, w)
    }
}

/// For `δ > 1`, the root of `U(ψ) + β U(δψ) = (1 + β) U(w)`.
pub fn psi(u: &Utility, params: &GdaParams, w: f64) -> Result<f64> {
    if !(params.delta > 1.0) {
        return Err(GdaError::param(format!("psi needs delta > 1, got {}", params.delta)));
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(GdaError::domain(format!("psi at w = {w}")));
    }
    let (b, ld) = (params.beta, params.log_delta());
    let lw = w.ln();
    let target = (1.0 + b) * u.value_log(lw);
    let f = |s: f64| Ok(u.value_log(s) + b * u.value_log(s + ld) - target);
    let br = bracket_increasing(f, lw - ld * b / (1.0 + b), 0.01 + 0.1 * ld)?;
    if br.lo == br.hi {
        return Ok(br.lo.exp());
    }
    Ok(try_find_root(f, br, ROOT_TOL)?.exp())
}

/// `φ(w) = U⁻¹((U(w) + β U(δw)) / (1 + β))`, the inverse of [`psi`].
pub fn phi(u: &Utility, params: &GdaParams, w: f64) -> Result<f64> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(GdaError::domain(format!("phi at w = {w}")));
    }
    let b = params.beta;
    let lw = w.ln();
    u.inverse((u.value_log(lw) + b * u.value_log(lw + params.log_delta())) / (1.0 + b))
}

/// The certainty equivalent: the sure amount valued like `Y`.
pub fn certainty_equivalent(
    u: &Utility,
    params: &GdaParams,
    dist: &OutcomeDistribution,
) -> Result<f64> {
    let eta = gda_value(u, params, dist)?;
    if params.delta <= 1.0 || params.beta == 0.0 {
        Ok(eta)
    } else {
        phi(u, params, eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta: f64, delta: f64) -> GdaParams {
        GdaParams::new(beta, delta).unwrap()
    }

    #[test]
    fn lognormal_value_matches_reference() {
        // 40-digit references.
        let u = Utility::log();
        let d = OutcomeDistribution::lognormal(-0.045, 0.09).unwrap();
        let eta = gda_value(&u, &p(0.5, 0.9), &d).unwrap();
        assert!((eta - 0.926_155_617_304_052_7).abs() < 1e-12, "eta = {eta}");
        let d = OutcomeDistribution::lognormal(0.015, 0.09).unwrap();
        let eta = gda_value(&u, &p(0.5, 0.9), &d).unwrap();
        assert!((eta - 0.983_425_882_241_721).abs() < 1e-12, "eta = {eta}");
    }

    #[test]
    fn deterministic_outcome() {
        let u = Utility::crra(2.0).unwrap();
        let d = OutcomeDistribution::empirical(vec![1.7], vec![1.0]).unwrap();
        assert_eq!(certainty_equivalent(&u, &p(0.5, 0.9), &d).unwrap(), 1.7);
        let ce = certainty_equivalent(&u, &p(0.5, 1.1), &d).unwrap();
        assert!((ce - 1.7).abs() < 1e-13);
        let eta = gda_value(&u, &p(0.5, 1.1), &d).unwrap();
        assert!(eta < 1.7);
    }

    #[test]
    fn psi_closed_forms() {
        let u = Utility::crra(2.0).unwrap();
        let v = psi(&u, &p(0.5, 1.1), 2.0).unwrap();
        assert!((v - (1.0 + 0.5 / 1.1) / 0.75).abs() < 1e-13);
        let v = psi(&Utility::log(), &p(0.5, 1.2), 1.0).unwrap();
        assert!((v - 1.2f64.powf(-1.0 / 3.0)).abs() < 1e-14);
        let w = phi(&Utility::log(), &p(0.5, 1.2), 1.0).unwrap();
        assert!((w - 1.2f64.powf(1.0 / 3.0)).abs() < 1e-14);
        assert!(psi(&u, &p(0.5, 0.9), 1.0).is_err());
    }

    #[test]
    fn two_point_law() {
        // log utility, Y ∈ {1, e} equally likely, δ = 1: η solves
        // ln η = 1/2 - β/2 (ln η - 0)₊ with η > 1, so ln η = 1/(2 + β).
        let u = Utility::log();
        let d = OutcomeDistribution::empirical(vec![1.0, std::f64::consts::E], vec![0.5, 0.5]).unwrap();
        let eta = gda_value(&u, &p(1.0, 1.0), &d).unwrap();
        assert!((eta.ln() - 1.0 / 3.0).abs() < 1e-14);
        let r = gda_equation_residual(&u, &p(1.0, 1.0), &d, eta).unwrap();
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn lognormal_residual_vanishes_at_value() {
        let u = Utility::crra_mixture(1.0, 2.0, 1.0).unwrap();
        let d = OutcomeDistribution::lognormal(0.1, 0.2).unwrap();
        for delta in [0.8, 1.0, 1.3] {
            let eta = gda_value(&u, &p(0.7, delta), &d).unwrap();
            let r = gda_equation_residual(&u, &p(0.7, delta), &d, eta).unwrap();
            assert!(r.abs() < 1e-13, "delta={delta}, r={r}");
        }
    }

    #[test]
    fn validation() {
        assert!(GdaParams::new(-0.1, 1.0).is_err());
        assert!(GdaParams::new(0.1, 0.0).is_err());
        assert!(OutcomeDistribution::empirical(vec![1.0, -1.0], vec![0.5, 0.5]).is_err());
        assert!(OutcomeDistribution::empirical(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(OutcomeDistribution::lognormal(0.0, -1.0).is_err());
    }
}
