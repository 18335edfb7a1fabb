//! Equilibrium strategies for general utilities.
//!
//! An equilibrium in the deterministic class has `a_t = m_t λ(t)` with
//!
//! ```text
//! m_t = m(√(∫_t^T |a|²), ∫_t^T aᵀλ),
//! ```
//!
//! so the unknown is one scalar per grid node. The equation is solved
//! backward in time, window by window; on each window a plain Picard
//! iteration (every node updated from the frozen previous iterate) is a
//! contraction once the window is short enough.

use serde::{Deserialize, Serialize};

use crate::error::{GdaError, Result};
use crate::market::{time_grid, MarketModel, SolveDiagnostics, StrategyPath};
use crate::preference::{GdaParams, Utility};
use crate::surface::GdaSurface;

/// How each window's Picard iteration is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Copy the multiplier already solved at the window's right end.
    #[default]
    Continuation,
    /// `a ≡ 0`.
    Zero,
    /// `|a| ≡ C₀ sup|λ|`, the a priori bound.
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub grid_step: f64,
    pub picard_tol: f64,
    pub max_picard_iters: usize,
    pub window_shrink: f64,
    /// Longest window allowed, on top of the Lipschitz-based choice.
    pub max_window: Option<f64>,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_step: 1e-3,
            picard_tol: 1e-11,
            max_picard_iters: 200,
            window_shrink: 0.5,
            max_window: None,
            initial_guess: InitialGuess::Continuation,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(GdaError::param(format!("grid_step must be positive, got {}", self.grid_step)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(GdaError::param(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        if self.max_picard_iters == 0 {
            return Err(GdaError::param("max_picard_iters must be at least 1"));
        }
        if !(self.window_shrink > 0.0 && self.window_shrink < 1.0) {
            return Err(GdaError::param(format!(
                "window_shrink must lie in (0, 1), got {}",
                self.window_shrink
            )));
        }
        if let Some(w) = self.max_window {
            if !(w >= self.grid_step) {
                return Err(GdaError::param("max_window must be at least grid_step"));
            }
        }
        Ok(())
    }
}

/// Multiplier function `(node, x, y) -> m`.
pub(crate) type MultiplierFn<'f> = dyn FnMut(usize, f64, f64) -> Result<f64> + 'f;

pub(crate) struct PicardOutput {
    /// Multipliers at the grid nodes, including `T` as the last entry.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub y: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Backward windowed Picard iteration on `grid` (which ends at `T`).
/// `lam2[i]` is `|λ|²` on `[t_i, t_{i+1})`.
pub(crate) fn picard_backward(
    grid: &[f64],
    lam2: &[f64],
    m_terminal: f64,
    m_fn: &mut MultiplierFn,
    cfg: &SolverConfig,
    window: f64,
    upper_guess: &dyn Fn(usize) -> f64,
) -> Result<PicardOutput> {
    let n = grid.len() - 1;
    let mut m = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut y = vec![0.0; n + 1];
    m[n] = m_terminal;
    let mut diag = SolveDiagnostics { initial_window: window, ..Default::default() };
    let lam_abs: Vec<f64> = lam2.iter().map(|l| l.sqrt()).collect();

    let mut hi = n; // nodes >= hi are solved
    let mut win = window;
    let mut shrinks_here = 0;
    while hi > 0 {
        let t_hi = grid[hi];
        let lo = grid[..hi].partition_point(|&t| t < t_hi - win - 1e-12 * win).min(hi - 1);
        let mut cur: Vec<f64> = (lo..hi)
            .map(|i| match cfg.initial_guess {
                InitialGuess::Continuation => m[hi],
                InitialGuess::Zero => 0.0,
                InitialGuess::UpperBound => upper_guess(i),
            })
            .collect();
        let mut prev_change = f64::INFINITY;
        let mut growing = 0;
        let mut converged = false;
        for _ in 0..cfg.max_picard_iters {
            diag.picard_iterations += 1;
            // Tails from the frozen iterate.
            let (mut vv, mut yy) = (v[hi], y[hi]);
            let mut next_m = m[hi];
            let mut change: f64 = 0.0;
            let mut fresh = vec![0.0; hi - lo];
            for i in (lo..hi).rev() {
                let mi = cur[i - lo];
                let h = grid[i + 1] - grid[i];
                vv += 0.5 * h * (mi * mi + next_m * next_m) * lam2[i];
                yy += 0.5 * h * (mi + next_m) * lam2[i];
                next_m = mi;
                let new = m_fn(i, vv.max(0.0).sqrt(), yy)?;
                change = change.max((new - mi).abs() * lam_abs[i]);
                fresh[i - lo] = new;
                v[i] = vv;
                y[i] = yy;
            }
            cur = fresh;
            if change <= cfg.picard_tol {
                converged = true;
                break;
            }
            if change >= prev_change {
                growing += 1;
                if growing >= 3 {
                    break;
                }
            } else {
                growing = 0;
            }
            prev_change = change;
        }
        if !converged {
            if growing >= 3 {
                // Not contracting: shrink and retry this window.
                if hi - lo <= 1 || shrinks_here >= 40 {
                    return Err(GdaError::StepSize(format!(
                        "no contraction on a single grid interval ending at t={t_hi}"
                    )));
                }
                win *= cfg.window_shrink;
                shrinks_here += 1;
                diag.window_shrinks += 1;
                continue;
            }
            return Err(GdaError::no_convergence(
                format!("Picard iteration on window ending at t={t_hi}"),
                cfg.max_picard_iters,
            ));
        }
        // Final tails consistent with the accepted iterate.
        let (mut vv, mut yy) = (v[hi], y[hi]);
        let mut next_m = m[hi];
        for i in (lo..hi).rev() {
            let mi = cur[i - lo];
            let h = grid[i + 1] - grid[i];
            vv += 0.5 * h * (mi * mi + next_m * next_m) * lam2[i];
            yy += 0.5 * h * (mi + next_m) * lam2[i];
            next_m = mi;
            m[i] = mi;
            v[i] = vv;
            y[i] = yy;
        }
        diag.windows += 1;
        shrinks_here = 0;
        hi = lo;
    }

    // One more sweep to measure the fixed-point residual of the result.
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let r = (m_fn(i, v[i].max(0.0).sqrt(), y[i])? - m[i]).abs() * lam_abs[i];
        worst = worst.max(r);
    }
    diag.max_fixed_point_residual = worst;
    Ok(PicardOutput { m, v, y, diagnostics: diag })
}

/// Largest difference quotient of `m` over a 5×5 grid on the box
/// `[0, x_max] × [-y_max, y_max]`.
pub(crate) fn lipschitz_estimate(
    m: &mut dyn FnMut(f64, f64) -> Result<f64>,
    x_max: f64,
    y_max: f64,
) -> Result<f64> {
    const K: usize = 5;
    if !(x_max > 0.0) {
        return Ok(0.0);
    }
    let xs: Vec<f64> = (0..K).map(|i| x_max * i as f64 / (K - 1) as f64).collect();
    let ys: Vec<f64> = (0..K).map(|j| -y_max + 2.0 * y_max * j as f64 / (K - 1) as f64).collect();
    let mut vals = [[0.0; K]; K];
    for i in 0..K {
        for j in 0..K {
            // Stay off x = 0, where m may not be defined.
            vals[i][j] = m(xs[i].max(1e-3 * x_max), ys[j])?;
        }
    }
    let mut l: f64 = 0.0;
    for i in 0..K {
        for j in 0..K {
            if i + 1 < K {
                l = l.max((vals[i + 1][j] - vals[i][j]).abs() / (xs[i + 1] - xs[i].max(1e-3 * x_max)));
            }
            if j + 1 < K && y_max > 0.0 {
                l = l.max((vals[i][j + 1] - vals[i][j]).abs() / (ys[j + 1] - ys[j]));
            }
        }
    }
    Ok(l)
}

/// Window length `min{1, T, 1/(4 L² Λ² (1 + Λ)²)}` with `Λ = sup|λ|`.
pub(crate) fn initial_window(l: f64, lam_sup: f64, horizon: f64, cfg: &SolverConfig) -> f64 {
    let denom = 4.0 * l * l * lam_sup * lam_sup * (1.0 + lam_sup).powi(2);
    let mut w = 1.0f64.min(horizon);
    if denom > 0.0 {
        w = w.min(1.0 / denom);
    }
    if let Some(mw) = cfg.max_window {
        w = w.min(mw);
    }
    w.max(cfg.grid_step)
}

pub(crate) fn interval_lambda_sq(market: &MarketModel, grid: &[f64]) -> Vec<f64> {
    grid[..grid.len() - 1].iter().map(|&t| market.lambda_at(t).norm_squared()).collect()
}

/// Dispatches on `δ`: the `δ = 1` case has the zero strategy as its
/// equilibrium, everything else goes to [`solve_equilibrium`].
pub fn solve(
    u: &Utility,
    params: &GdaParams,
    market: &MarketModel,
    cfg: &SolverConfig,
) -> Result<StrategyPath> {
    if params.delta == 1.0 && params.beta > 0.0 {
        solve_equilibrium_da(u, params, market, cfg.grid_step)
    } else {
        solve_equilibrium(u, params, market, cfg)
    }
}

/// Equilibrium for `δ ≠ 1` by backward windowed Picard iteration.
pub fn solve_equilibrium(
    u: &Utility,
    params: &GdaParams,
    market: &MarketModel,
    cfg: &SolverConfig,
) -> Result<StrategyPath> {
    cfg.validate()?;
    if params.delta == 1.0 && params.beta > 0.0 {
        return Err(GdaError::param(
            "delta = 1 has the zero strategy as its unique equilibrium; use solve_equilibrium_da",
        ));
    }
    if (params.delta - 1.0).abs() < 1e-6 && params.beta > 0.0 {
        log::warn!(
            "delta = {} is within 1e-6 of 1; the multiplier is nearly singular near the horizon",
            params.delta
        );
    }
    let c0 = u.tolerance_bound()?;
    let surface = GdaSurface::new(u, *params).with_memo();
    let grid = time_grid(market, cfg.grid_step)?;
    let lam2 = interval_lambda_sq(market, &grid);
    let lam_sup = market.lambda_sup();
    let horizon = market.horizon();

    let l_hat = lipschitz_estimate(
        &mut |x, y| surface.m(x, y),
        c0 * lam_sup * horizon.sqrt(),
        c0 * lam_sup * lam_sup * horizon,
    )?;
    let window = initial_window(l_hat, lam_sup, horizon, cfg);
    let m_terminal = surface.m(0.0, 0.0)?;

    let mut hints: Vec<Option<f64>> = vec![None; grid.len()];
    let mut m_fn = |i: usize, x: f64, y: f64| -> Result<f64> {
        let (m, h) = surface.m_hint(x, y, hints[i])?;
        hints[i] = Some(h);
        Ok(m)
    };
    let upper = |i: usize| if lam2[i] > 0.0 { c0 * lam_sup / lam2[i].sqrt() } else { 0.0 };
    let out = picard_backward(&grid, &lam2, m_terminal, &mut m_fn, cfg, window, &upper)?;

    let n = grid.len() - 1;
    let mut path = StrategyPath::from_multipliers(market, &grid[..n], &out.m[..n], m_terminal)?;
    path.v.copy_from_slice(&out.v[..n]);
    path.y.copy_from_slice(&out.y[..n]);
    let mut diag = out.diagnostics;
    diag.lipschitz_estimate = l_hat;
    diag.exposure_bound = c0 * lam_sup;
    diag.exposure_bound_respected = max_exposure(&path) <= c0 * lam_sup * (1.0 + 1e-9);
    if !diag.exposure_bound_respected {
        log::warn!("equilibrium exposure exceeds the a priori bound C0 sup|lambda|");
    }
    path.residual = residuals_with(&surface, market, &path)?;
    path.diagnostics = Some(diag);
    Ok(path)
}

pub(crate) fn max_exposure(path: &StrategyPath) -> f64 {
    path.a.iter().map(|a| a.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// The `δ = 1` equilibrium: no risky investment at all.
pub fn solve_equilibrium_da(
    _u: &Utility,
    params: &GdaParams,
    market: &MarketModel,
    grid_step: f64,
) -> Result<StrategyPath> {
    if params.delta != 1.0 {
        return Err(GdaError::param(format!(
            "the zero-strategy result needs delta = 1, got {}",
            params.delta
        )));
    }
    let grid = time_grid(market, grid_step)?;
    let n = grid.len() - 1;
    let d = market.dim();
    Ok(StrategyPath {
        horizon: market.horizon(),
        grid: grid[..n].to_vec(),
        a: vec![vec![0.0; d]; n],
        pi: vec![vec![0.0; d]; n],
        v: vec![0.0; n],
        y: vec![0.0; n],
        m: vec![0.0; n],
        residual: vec![f64::NAN; n],
        terminal_a: Some(vec![0.0; d]),
        diagnostics: None,
    })
}

/// Per node, `|2 σᵀπ g_v + λ g_y| / (|g_v| + |g_y|)` plus any positive part
/// of `g_v`; `None` where the surface is not differentiable (`δ = 1`, `v = 0`).
pub fn equilibrium_residual(
    u: &Utility,
    params: &GdaParams,
    market: &MarketModel,
    path: &StrategyPath,
) -> Result<Vec<Option<f64>>> {
    let s = GdaSurface::new(u, *params);
    Ok(residuals_with(&s, market, path)?
        .into_iter()
        .map(|r| if r.is_nan() { None } else { Some(r) })
        .collect())
}

pub(crate) fn residuals_with(s: &GdaSurface, market: &MarketModel, path: &StrategyPath) -> Result<Vec<f64>> {
    (0..path.len()).map(|i| node_residual(s, market, path, i)).collect()
}

/// NaN where the surface has no derivative.
pub(crate) fn node_residual(s: &GdaSurface, market: &MarketModel, path: &StrategyPath, i: usize) -> Result<f64> {
    let (v, y) = (path.v[i], path.y[i]);
    if s.params().delta == 1.0 && v <= 0.0 {
        return Ok(f64::NAN);
    }
    let gp = s.g_partials(v.max(0.0), y)?;
    let seg = market.segment_at(path.grid[i]);
    let pi = nalgebra::DVector::from_column_slice(&path.pi[i]);
    let s_pi = seg.sigma.transpose() * pi;
    let r = (2.0 * gp.g_v * s_pi + gp.g_y * seg.lambda()).norm();
    let scale = gp.g_v.abs() + gp.g_y.abs();
    Ok((r + gp.g_v.max(0.0)) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merton_market() -> MarketModel {
        MarketModel::constant(vec![0.06], vec![vec![0.3]], 3.0).unwrap()
    }

    #[test]
    fn expected_utility_gives_merton() {
        let u = Utility::crra(2.0).unwrap();
        let p = GdaParams::new(0.0, 0.9).unwrap();
        let cfg = SolverConfig { grid_step: 0.01, ..Default::default() };
        let path = solve_equilibrium(&u, &p, &merton_market(), &cfg).unwrap();
        for (a, pi) in path.a.iter().zip(&path.pi) {
            assert!((a[0] - 0.1).abs() < 1e-9);
            assert!((pi[0] - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!(path.residual.iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn zero_drift_gives_zero_strategy() {
        let u = Utility::log();
        let p = GdaParams::new(0.5, 0.9).unwrap();
        let m = MarketModel::constant(vec![0.0], vec![vec![0.3]], 1.0).unwrap();
        let cfg = SolverConfig { grid_step: 0.01, ..Default::default() };
        let path = solve_equilibrium(&u, &p, &m, &cfg).unwrap();
        assert!(path.pi.iter().all(|p| p[0] == 0.0));
        let da = solve_equilibrium_da(&u, &GdaParams::new(0.5, 1.0).unwrap(), &m, 0.01).unwrap();
        assert!(da.pi.iter().all(|p| p[0] == 0.0));
    }

    #[test]
    fn delta_one_is_dispatched() {
        let u = Utility::log();
        let p = GdaParams::new(0.01, 1.0).unwrap();
        let cfg = SolverConfig { grid_step: 0.01, ..Default::default() };
        assert!(solve_equilibrium(&u, &p, &merton_market(), &cfg).is_err());
        let path = solve(&u, &p, &merton_market(), &cfg).unwrap();
        assert!(path.pi.iter().all(|p| p[0] == 0.0));
        assert!(path.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { window_shrink: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { grid_step: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { picard_tol: -1.0, ..Default::default() }.validate().is_err());
    }
}
