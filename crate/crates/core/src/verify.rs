//! Independent checks: a Monte-Carlo oracle for values, wealth simulation
//! under a deterministic strategy, and the spike-perturbation test of the
//! equilibrium condition.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GdaError, Result};
use crate::market::{MarketModel, StrategyPath};
use crate::preference::{gda_value_sorted, GdaParams, OutcomeDistribution, SortedOutcomes, Utility};
use crate::surface::{c_star, GdaSurface};

/// Batches used for the standard error of Monte-Carlo estimates.
pub const MC_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 1_000_000, n_steps: 1, seed: 20_240_601 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < MC_BATCHES {
            return Err(GdaError::param(format!("n_paths must be at least {MC_BATCHES}")));
        }
        if self.n_steps == 0 {
            return Err(GdaError::param("n_steps must be positive"));
        }
        Ok(())
    }

    /// Independent generator for batch `b`; the same `(seed, b)` always
    /// yields the same stream.
    pub fn stream(&self, b: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(b);
        rng
    }

    fn batch_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        let base = self.n_paths / MC_BATCHES;
        let extra = self.n_paths % MC_BATCHES;
        (0..MC_BATCHES).map(move |b| base + usize::from(b < extra))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// Value of a lognormal outcome from sample averages: the fixed point of
/// the empirical equation on all samples, with the standard error taken
/// from the spread of the per-batch fixed points.
pub fn mc_gda_value(
    u: &Utility,
    params: &GdaParams,
    dist: &OutcomeDistribution,
    mc: &McConfig,
) -> Result<McEstimate> {
    mc.validate()?;
    let (mean_log, var_log) = match dist {
        OutcomeDistribution::LogNormal { mean_log, var_log } => (*mean_log, *var_log),
        OutcomeDistribution::Empirical { .. } => {
            return Err(GdaError::param("the Monte-Carlo oracle samples lognormal outcomes only"))
        }
    };
    let sd = var_log.sqrt();
    let mut all = Vec::with_capacity(mc.n_paths);
    let mut batch_values = Vec::with_capacity(MC_BATCHES);
    for (b, size) in mc.batch_sizes().enumerate() {
        let mut rng = mc.stream(b as u64);
        let start = all.len();
        for _ in 0..size {
            let z: f64 = rng.sample(StandardNormal);
            all.push((mean_log + sd * z).exp());
        }
        let batch = &all[start..];
        let probs = vec![1.0 / size as f64; size];
        batch_values.push(gda_value_sorted(u, params, &SortedOutcomes::new(u, batch, &probs))?);
    }
    let probs = vec![1.0 / all.len() as f64; all.len()];
    let estimate = gda_value_sorted(u, params, &SortedOutcomes::new(u, &all, &probs))?;
    let nb = batch_values.len() as f64;
    let mean_b = batch_values.iter().sum::<f64>() / nb;
    let var_b = batch_values.iter().map(|v| (v - mean_b).powi(2)).sum::<f64>() / (nb - 1.0);
    Ok(McEstimate { estimate, std_err: (var_b / nb).sqrt(), n_paths: all.len() })
}

/// `∫ |a|²` and `∫ aᵀλ` over `[s0, s1] ⊂ [t_i, t_{i+1}]` with `a` linear
/// between its node value and its left limit at `t_{i+1}`.
fn interval_moments(market: &MarketModel, path: &StrategyPath, i: usize, s0: f64, s1: f64) -> (f64, f64) {
    let (t0, t1) = (path.grid[i], path.interval_end(i));
    let a0 = DVector::from_column_slice(&path.a[i]);
    let a1 = DVector::from_vec(path.right_end(market, i));
    let lam = market.lambda_at(t0);
    let at = |s: f64| {
        let w = if t1 > t0 { (s - t0) / (t1 - t0) } else { 0.0 };
        &a0 * (1.0 - w) + &a1 * w
    };
    let (p, q) = (at(s0), at(s1));
    let h = s1 - s0;
    // |a|² is quadratic along the segment: Simpson is exact.
    let mid = at(0.5 * (s0 + s1));
    let v = h / 6.0 * (p.norm_squared() + 4.0 * mid.norm_squared() + q.norm_squared());
    let y = 0.5 * h * (p.dot(lam) + q.dot(lam));
    (v, y)
}

/// Samples of `W_T / W_{t0}` under the path's exposures. Increments of
/// `ln W` are Gaussian for a deterministic strategy, so each of the
/// `n_steps` blocks of grid intervals is drawn from its exact law.
pub fn simulate_wealth(
    market: &MarketModel,
    path: &StrategyPath,
    t0: f64,
    mc: &McConfig,
) -> Result<Vec<f64>> {
    mc.validate()?;
    if path.is_empty() || !(t0 >= 0.0) || t0 >= path.horizon {
        return Err(GdaError::param(format!("t0 = {t0} is outside [0, T)")));
    }
    let first = path.node_at_or_before(t0);
    // Per-interval variance and mean of the log increment.
    let mut blocks_v = Vec::new();
    let mut blocks_m = Vec::new();
    for i in first..path.len() {
        let s0 = if i == first { t0.max(path.grid[i]) } else { path.grid[i] };
        let (v, y) = interval_moments(market, path, i, s0, path.interval_end(i));
        blocks_v.push(v);
        blocks_m.push(y - 0.5 * v);
    }
    let n_int = blocks_v.len();
    let steps = mc.n_steps.min(n_int).max(1);
    let mut step_v = vec![0.0; steps];
    let mut step_m = vec![0.0; steps];
    for j in 0..n_int {
        let s = j * steps / n_int;
        step_v[s] += blocks_v[j];
        step_m[s] += blocks_m[j];
    }
    let step_sd: Vec<f64> = step_v.iter().map(|v| v.sqrt()).collect();
    let mut out = Vec::with_capacity(mc.n_paths);
    for (b, size) in mc.batch_sizes().enumerate() {
        let mut rng = mc.stream(b as u64);
        for _ in 0..size {
            let mut lw = 0.0;
            for s in 0..steps {
                let z: f64 = if step_sd[s] > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                lw += step_m[s] + step_sd[s] * z;
            }
            out.push(lw.exp());
        }
    }
    Ok(out)
}

/// A spike `k 1_{[t, t+ε)}` added to the strategy `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub t: f64,
    pub k: Vec<f64>,
    /// Decreasing, positive, and all below `T - t`.
    pub epsilons: Vec<f64>,
}

impl PerturbationSpec {
    /// Spike of size `ε ∈ {10⁻³, 10⁻⁴, 10⁻⁵}·min(1, T - t)`.
    pub fn new(t: f64, k: Vec<f64>, horizon: f64) -> Self {
        let scale = (horizon - t).min(1.0);
        PerturbationSpec { t, k, epsilons: vec![1e-3 * scale, 1e-4 * scale, 1e-5 * scale] }
    }

    /// The `ε ∈ {10⁻², 10⁻⁴, 10⁻⁶}` ladder used for the square-root limit.
    pub fn square_root_ladder(t: f64, k: Vec<f64>) -> Self {
        PerturbationSpec { t, k, epsilons: vec![1e-2, 1e-4, 1e-6] }
    }

    fn validate(&self, horizon: f64, d: usize) -> Result<()> {
        if !(self.t >= 0.0 && self.t < horizon) {
            return Err(GdaError::param(format!("perturbation time {} outside [0, T)", self.t)));
        }
        if self.k.len() != d || self.k.iter().any(|x| !x.is_finite()) {
            return Err(GdaError::param("spike direction must be a finite vector of the market dimension"));
        }
        if self.epsilons.len() < 2 {
            return Err(GdaError::param("need at least two spike lengths"));
        }
        for w in self.epsilons.windows(2) {
            if !(w[1] < w[0]) {
                return Err(GdaError::param("spike lengths must be strictly decreasing"));
            }
        }
        if !(self.epsilons[self.epsilons.len() - 1] > 0.0) || self.t + self.epsilons[0] >= horizon {
            return Err(GdaError::param("spike lengths must be positive and end before T"));
        }
        Ok(())
    }
}

/// Which limit was extrapolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationScale {
    /// `Δ(ε)/ε`, the regular case `δ ≠ 1`.
    Linear,
    /// `Δ(ε)/√ε` at the zero strategy with `δ = 1`.
    SquareRoot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub t: f64,
    pub k: Vec<f64>,
    pub scale: PerturbationScale,
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    /// The extrapolated limit of `Δ/ε` (or `Δ/√ε`).
    pub first_order_coeff: f64,
    /// The same limit from the surface derivatives (or from `c*`).
    pub analytic_coeff: f64,
    /// `g_v |σᵀk|²`, the part of the limit that survives at an equilibrium.
    pub second_order: f64,
    pub pass: bool,
}

/// Value at zero of the polynomial through `(xs, ys)` (Neville).
fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

/// Increments of `(v, y)` caused by the spike over `[t, t+ε)`.
fn spike_increments(market: &MarketModel, path: &StrategyPath, t: f64, k: &[f64], eps: f64) -> (f64, f64) {
    let kv = DVector::from_column_slice(k);
    let end = t + eps;
    let (mut dv, mut dy) = (0.0, 0.0);
    let mut i = path.node_at_or_before(t);
    let mut s = t;
    while s < end && i < path.len() {
        let mut e = path.interval_end(i).min(end);
        // Coefficients are constant between breakpoints.
        for b in market.breakpoints() {
            if b > s && b < e {
                e = b;
            }
        }
        let seg = market.segment_at(s);
        let sk = seg.sigma.transpose() * &kv;
        let (t0, t1) = (path.grid[i], path.interval_end(i));
        let a0 = DVector::from_column_slice(&path.a[i]);
        let a1 = DVector::from_vec(path.right_end(market, i));
        let at = |r: f64| {
            let w = if t1 > t0 { (r - t0) / (t1 - t0) } else { 0.0 };
            &a0 * (1.0 - w) + &a1 * w
        };
        let h = e - s;
        dv += h * sk.norm_squared() + h * (sk.dot(&at(s)) + sk.dot(&at(e)));
        dy += h * kv.dot(&seg.mu);
        s = e;
        if e >= t1 {
            i += 1;
        }
    }
    (dv, dy)
}

/// Spike-perturbation test at `pert.t` (snapped to the grid node at or
/// before it). For `δ ≠ 1` the limit of `Δ(ε)/ε` must be `<= tol`; for
/// `δ = 1` the limit of `Δ(ε)/√ε` must match `|σᵀk| c*` within `tol`.
pub fn perturbation_test(
    u: &Utility,
    params: &GdaParams,
    market: &MarketModel,
    path: &StrategyPath,
    pert: &PerturbationSpec,
    tol: f64,
) -> Result<PerturbationReport> {
    pert.validate(market.horizon(), market.dim())?;
    let s = GdaSurface::new(u, *params);
    let i = path.node_at_or_before(pert.t);
    let t = path.grid[i];
    let (v, y) = (path.v[i], path.y[i]);
    let g0 = s.g(v, y)?;
    let mut deltas = Vec::with_capacity(pert.epsilons.len());
    for &eps in &pert.epsilons {
        let (dv, dy) = spike_increments(market, path, t, &pert.k, eps);
        deltas.push(s.g((v + dv).max(0.0), y + dy)? - g0);
    }
    let seg = market.segment_at(t);
    let kv = DVector::from_column_slice(&pert.k);
    let sk = seg.sigma.transpose() * &kv;
    let da = params.delta == 1.0 && params.beta > 0.0 && v == 0.0;
    if da {
        let roots: Vec<f64> = pert.epsilons.iter().map(|e| e.sqrt()).collect();
        let ratios: Vec<f64> = deltas.iter().zip(&roots).map(|(d, r)| d / r).collect();
        let coeff = extrapolate_to_zero(&roots, &ratios);
        let analytic = sk.norm() * c_star(params.beta)?.value;
        return Ok(PerturbationReport {
            t,
            k: pert.k.clone(),
            scale: PerturbationScale::SquareRoot,
            epsilons: pert.epsilons.clone(),
            deltas,
            first_order_coeff: coeff,
            analytic_coeff: analytic,
            second_order: f64::NAN,
            pass: coeff < 0.0 && (coeff - analytic).abs() <= tol,
        });
    }
    let ratios: Vec<f64> = deltas.iter().zip(&pert.epsilons).map(|(d, e)| d / e).collect();
    let coeff = extrapolate_to_zero(&pert.epsilons, &ratios);
    let gp = s.g_partials(v, y)?;
    let a = DVector::from_column_slice(&path.a[i]);
    let analytic = gp.g_v * (sk.norm_squared() + 2.0 * sk.dot(&a)) + gp.g_y * kv.dot(&seg.mu);
    Ok(PerturbationReport {
        t,
        k: pert.k.clone(),
        scale: PerturbationScale::Linear,
        epsilons: pert.epsilons.clone(),
        deltas,
        first_order_coeff: coeff,
        analytic_coeff: analytic,
        second_order: gp.g_v * sk.norm_squared(),
        pass: coeff <= tol,
    })
}

/// Eight spike directions of length `k_scale`: `±λ̂`, `±e₁` and four
/// seeded random unit vectors.
pub fn direction_basket(market: &MarketModel, t: f64, k_scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let d = market.dim();
    let lam = market.lambda_at(t);
    let lam_hat: Vec<f64> = if lam.norm() > 0.0 {
        (lam / lam.norm()).iter().copied().collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let mut out = vec![lam_hat.clone(), lam_hat.iter().map(|x| -x).collect(), e1.clone(), e1.iter().map(|x| -x).collect()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < 8 {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.push(z.iter().map(|x| x / n).collect());
        }
    }
    out.into_iter().map(|k| k.into_iter().map(|x| x * k_scale).collect()).collect()
}

/// One row of a certification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationRow {
    pub t: f64,
    pub k_index: usize,
    pub report: PerturbationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyOptions {
    pub k_scale: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { k_scale: 0.05, tol: 1e-6, seed: 7 }
    }
}

/// Runs the perturbation test for every basket direction at `t = 0, T/3,
/// 2T/3` and the last grid node.
pub fn certify(
    u: &Utility,
    params: &GdaParams,
    market: &MarketModel,
    path: &StrategyPath,
    opts: &CertifyOptions,
) -> Result<Vec<CertificationRow>> {
    if path.is_empty() {
        return Err(GdaError::param("empty strategy path"));
    }
    let horizon = market.horizon();
    let times = [0.0, horizon / 3.0, 2.0 * horizon / 3.0, *path.grid.last().unwrap()];
    let da = params.delta == 1.0 && params.beta > 0.0;
    let mut rows = Vec::new();
    for &t in &times {
        let node_t = path.grid[path.node_at_or_before(t)];
        for (k_index, k) in direction_basket(market, node_t, opts.k_scale, opts.seed).into_iter().enumerate() {
            let pert = if da && node_t + 1e-2 < horizon {
                PerturbationSpec::square_root_ladder(node_t, k)
            } else {
                PerturbationSpec::new(node_t, k, horizon)
            };
            let tol = if da { 1e-3 } else { opts.tol };
            let report = perturbation_test(u, params, market, path, &pert, tol)?;
            rows.push(CertificationRow { t: node_t, k_index, report });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crra::{equilibrium_crra, CrraSpec};
    use crate::market::time_grid;

    fn market() -> MarketModel {
        MarketModel::constant(vec![0.06], vec![vec![0.3]], 3.0).unwrap()
    }

    fn merton(step: f64) -> StrategyPath {
        let m = market();
        let spec = CrraSpec::new(1.0, 0.0, 0.9).unwrap();
        equilibrium_crra(&spec, &m, &time_grid(&m, step).unwrap()).unwrap()
    }

    #[test]
    fn neville_is_exact_on_quadratics() {
        let xs = [0.3, 0.1, 0.02];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - x + 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn streams_are_reproducible() {
        let mc = McConfig { n_paths: 64, n_steps: 1, seed: 3 };
        let a: Vec<u64> = (0..4).map(|_| mc.stream(5).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| mc.stream(5).random()).collect();
        assert_eq!(a, b);
        let mut r5 = mc.stream(5);
        let mut r6 = mc.stream(6);
        assert_ne!(r5.random::<u64>(), r6.random::<u64>());
    }

    #[test]
    fn degenerate_outcome_is_exact() {
        let u = Utility::log();
        let p = GdaParams::new(0.5, 0.9).unwrap();
        let d = OutcomeDistribution::lognormal(0.2, 0.0).unwrap();
        let e = mc_gda_value(&u, &p, &d, &McConfig { n_paths: 1000, ..Default::default() }).unwrap();
        assert!((e.estimate - 0.2f64.exp()).abs() < 1e-13);
        assert!(e.std_err < 1e-15);
    }

    #[test]
    fn zero_strategy_keeps_wealth() {
        let m = market();
        let z = crate::equilibrium::solve_equilibrium_da(&Utility::log(), &GdaParams::new(0.5, 1.0).unwrap(), &m, 0.1)
            .unwrap();
        let w = simulate_wealth(&m, &z, 0.0, &McConfig { n_paths: 256, n_steps: 5, seed: 1 }).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn merton_is_certified_and_strict() {
        let m = market();
        let path = merton(0.01);
        let u = Utility::log();
        let p = GdaParams::new(0.0, 0.9).unwrap();
        let pert = PerturbationSpec::new(0.0, vec![0.5], 3.0);
        let r = perturbation_test(&u, &p, &m, &path, &pert, 1e-8).unwrap();
        assert!(r.pass);
        assert!(r.second_order < 0.0);
        assert!((r.first_order_coeff - r.analytic_coeff).abs() < 1e-8);
    }

    #[test]
    fn basket_has_eight_scaled_directions() {
        let b = direction_basket(&market(), 0.0, 0.05, 1);
        assert_eq!(b.len(), 8);
        for k in &b {
            assert!((k.iter().map(|x| x * x).sum::<f64>().sqrt() - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_spike_rejected() {
        let m = market();
        let path = merton(0.1);
        let u = Utility::log();
        let p = GdaParams::new(0.0, 0.9).unwrap();
        let bad = PerturbationSpec { t: 2.95, k: vec![1.0], epsilons: vec![0.1, 0.01] };
        assert!(perturbation_test(&u, &p, &m, &path, &bad, 1e-6).is_err());
        let unsorted = PerturbationSpec { t: 0.0, k: vec![1.0], epsilons: vec![0.01, 0.1] };
        assert!(perturbation_test(&u, &p, &m, &path, &unsorted, 1e-6).is_err());
    }
}
