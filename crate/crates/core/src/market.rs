//! Deterministic piecewise-constant market coefficients and strategy paths.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{GdaError, Result};

/// Coefficients in force on `[start, next start)`.
#[derive(Debug, Clone)]
pub struct MarketSegment {
    pub start: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl MarketSegment {
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }
}

/// `d` risky assets with drift `μ(t)` and volatility `σ(t)` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct MarketModel {
    d: usize,
    horizon: f64,
    segments: Vec<MarketSegment>,
    /// Bounds `c₁ <= λ_min(σσᵀ)`, `λ_max(σσᵀ) <= c₂` over all segments.
    c1: f64,
    c2: f64,
}

impl MarketModel {
    /// Time-homogeneous market.
    pub fn constant(mu: Vec<f64>, sigma: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        Self::piecewise(horizon, vec![(0.0, mu, sigma)])
    }

    /// Segments given as `(start, μ, σ rows)`; the first start must be 0.
    pub fn piecewise(horizon: f64, segments: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GdaError::Model(format!("horizon must be positive, got {horizon}")));
        }
        let first = segments.first().ok_or_else(|| GdaError::Model("no market segments".into()))?;
        if first.0 != 0.0 {
            return Err(GdaError::Model("first segment must start at t = 0".into()));
        }
        let d = first.1.len();
        if d == 0 {
            return Err(GdaError::Model("market needs at least one asset".into()));
        }
        let mut out = Vec::with_capacity(segments.len());
        let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
        let mut prev = f64::NEG_INFINITY;
        for (start, mu, rows) in segments {
            if !(start > prev) || !(start < horizon) {
                return Err(GdaError::Model(format!(
                    "segment starts must increase within [0, {horizon}), got {start}"
                )));
            }
            prev = start;
            if mu.len() != d || rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(GdaError::Model(format!("segment at t={start} is not {d}-dimensional")));
            }
            if mu.iter().chain(rows.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(GdaError::Model(format!("non-finite coefficient in segment at t={start}")));
            }
            let mu = DVector::from_vec(mu);
            let sigma = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            let eig = SymmetricEigen::new(&sigma * sigma.transpose()).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 1e-14 * hi.max(1.0)) {
                return Err(GdaError::Model(format!(
                    "volatility at t={start} is singular or not elliptic (smallest eigenvalue of σσᵀ = {lo:e})"
                )));
            }
            c1 = c1.min(lo);
            c2 = c2.max(hi);
            let lambda = sigma
                .clone()
                .lu()
                .solve(&mu)
                .ok_or_else(|| GdaError::Model(format!("singular volatility at t={start}")))?;
            out.push(MarketSegment { start, mu, sigma, lambda });
        }
        Ok(MarketModel { d, horizon, segments: out, c1, c2 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[MarketSegment] {
        &self.segments
    }

    pub fn ellipticity(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    /// Segment starts, beginning with 0.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.start).collect()
    }

    /// Index of the segment in force at `t` (right-continuous; `t = T` maps
    /// to the last segment).
    pub fn segment_index(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    pub fn segment_at(&self, t: f64) -> &MarketSegment {
        &self.segments[self.segment_index(t)]
    }

    pub fn lambda_at(&self, t: f64) -> &DVector<f64> {
        &self.segment_at(t).lambda
    }

    /// `sup_t |λ(t)|`.
    pub fn lambda_sup(&self) -> f64 {
        self.segments.iter().map(|s| s.lambda.norm()).fold(0.0, f64::max)
    }

    /// `∫_t^T |λ(s)|² ds`, exactly.
    pub fn lambda_sq_tail(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map_or(self.horizon, |n| n.start);
            let lo = s.start.max(t);
            if end > lo {
                acc += (end - lo) * s.lambda.norm_squared();
            }
        }
        acc
    }

    /// `π = (σᵀ(t))⁻¹ a`.
    pub fn portfolio(&self, t: f64, a: &[f64]) -> Result<Vec<f64>> {
        let seg = self.segment_at(t);
        let rhs = DVector::from_column_slice(a);
        let pi = seg
            .sigma
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| GdaError::Model(format!("singular volatility at t={t}")))?;
        Ok(pi.as_slice().to_vec())
    }
}

/// `λ(t) = σ(t)⁻¹ μ(t)`.
pub fn market_price_of_risk(market: &MarketModel, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t <= market.horizon()) {
        return Err(GdaError::domain(format!("t = {t} outside [0, {}]", market.horizon())));
    }
    Ok(market.lambda_at(t).as_slice().to_vec())
}

/// Nodes `k·step` in `[0, T)` merged with the market breakpoints, followed
/// by `T` itself.
pub fn time_grid(market: &MarketModel, step: f64) -> Result<Vec<f64>> {
    let t_end = market.horizon();
    if !(step > 0.0) || !step.is_finite() {
        return Err(GdaError::param(format!("grid step must be positive, got {step}")));
    }
    let n = (t_end / step).ceil() as usize;
    if n > 50_000_000 {
        return Err(GdaError::param(format!("grid step {step} gives too many nodes")));
    }
    let tol = 1e-9 * step;
    let mut nodes: Vec<f64> = (0..n).map(|k| k as f64 * step).filter(|&t| t < t_end - tol).collect();
    for b in market.breakpoints() {
        if b > 0.0 && b < t_end - tol {
            nodes.push(b);
        }
    }
    nodes.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(nodes.len() + 1);
    let bps = market.breakpoints();
    for t in nodes {
        match merged.last_mut() {
            Some(last) if (t - *last).abs() <= tol => {
                // Prefer the exact breakpoint when two nodes coincide.
                if bps.contains(&t) {
                    *last = t;
                }
            }
            _ => merged.push(t),
        }
    }
    merged.push(t_end);
    Ok(merged)
}

/// Per-run solver statistics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveDiagnostics {
    pub windows: usize,
    pub picard_iterations: usize,
    pub window_shrinks: usize,
    pub initial_window: f64,
    pub lipschitz_estimate: f64,
    /// `max_i |a_i - m(x_i, y_i) λ_i|` after convergence.
    pub max_fixed_point_residual: f64,
    /// `C₀ sup|λ|`, the a priori bound on `|a|`.
    pub exposure_bound: f64,
    pub exposure_bound_respected: bool,
}

/// A deterministic strategy sampled on a time grid in `[0, T)`.
#[derive(Debug, Clone)]
pub struct StrategyPath {
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    /// `∫_t^T |a|²`.
    pub v: Vec<f64>,
    /// `∫_t^T aᵀλ`.
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    /// Normalized equilibrium residual per node; NaN where not applicable.
    pub residual: Vec<f64>,
    /// `a(T⁻)`, when known.
    pub terminal_a: Option<Vec<f64>>,
    pub diagnostics: Option<SolveDiagnostics>,
}

impl StrategyPath {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    /// Builds a path from exposures `a = m λ` on `grid` (which excludes `T`),
    /// with tails `v`, `y` accumulated by the trapezoid rule.
    pub fn from_multipliers(market: &MarketModel, grid: &[f64], m: &[f64], m_terminal: f64) -> Result<Self> {
        let n = grid.len();
        if m.len() != n {
            return Err(GdaError::param("multiplier and grid lengths differ"));
        }
        let mut a = Vec::with_capacity(n);
        let mut pi = Vec::with_capacity(n);
        for (i, &t) in grid.iter().enumerate() {
            let ai: Vec<f64> = market.lambda_at(t).iter().map(|l| m[i] * l).collect();
            pi.push(market.portfolio(t, &ai)?);
            a.push(ai);
        }
        let last_t = grid.last().copied().unwrap_or(0.0);
        let terminal_a: Vec<f64> = market.lambda_at(last_t).iter().map(|l| m_terminal * l).collect();
        let mut p = StrategyPath {
            horizon: market.horizon(),
            grid: grid.to_vec(),
            a,
            pi,
            v: vec![0.0; n],
            y: vec![0.0; n],
            m: m.to_vec(),
            residual: vec![f64::NAN; n],
            terminal_a: Some(terminal_a),
            diagnostics: None,
        };
        p.recompute_tails(market);
        Ok(p)
    }

    /// `a` at the right end of interval `i` (its left limit at `t_{i+1}`).
    pub fn right_end(&self, market: &MarketModel, i: usize) -> Vec<f64> {
        if i + 1 < self.len() {
            let t_next = self.grid[i + 1];
            let seg_i = market.segment_index(self.grid[i]);
            if market.segment_index(t_next) != seg_i {
                // λ jumps at t_{i+1}: keep the multiplier, use the old λ.
                let lam = market.segments()[seg_i].lambda();
                return lam.iter().map(|l| self.m[i + 1] * l).collect();
            }
            self.a[i + 1].clone()
        } else {
            self.terminal_a.clone().unwrap_or_else(|| self.a[i].clone())
        }
    }

    /// End of interval `i`: the next node or `T`.
    pub fn interval_end(&self, i: usize) -> f64 {
        self.grid.get(i + 1).copied().unwrap_or(self.horizon)
    }

    /// Recomputes `v`, `y` from `a` with the trapezoid rule on each interval.
    pub fn recompute_tails(&mut self, market: &MarketModel) {
        let n = self.len();
        let (mut v, mut y) = (0.0, 0.0);
        for i in (0..n).rev() {
            let h = self.interval_end(i) - self.grid[i];
            let lam = market.lambda_at(self.grid[i]);
            let a0 = &self.a[i];
            let a1 = self.right_end(market, i);
            let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
            let dot = |a: &[f64]| a.iter().zip(lam.iter()).map(|(p, q)| p * q).sum::<f64>();
            v += 0.5 * h * (sq(a0) + sq(&a1));
            y += 0.5 * h * (dot(a0) + dot(&a1));
            self.v[i] = v;
            self.y[i] = y;
        }
    }

    /// The same strategy with every exposure multiplied by `factor`.
    pub fn scaled(&self, market: &MarketModel, factor: f64) -> Result<Self> {
        let mut p = self.clone();
        for (i, a) in p.a.iter_mut().enumerate() {
            for x in a.iter_mut() {
                *x *= factor;
            }
            p.pi[i] = market.portfolio(self.grid[i], a)?;
            p.m[i] *= factor;
        }
        if let Some(ta) = p.terminal_a.as_mut() {
            ta.iter_mut().for_each(|x| *x *= factor);
        }
        p.residual.iter_mut().for_each(|r| *r = f64::NAN);
        p.diagnostics = None;
        p.recompute_tails(market);
        Ok(p)
    }

    /// Index of the last node at or before `t`.
    pub fn node_at_or_before(&self, t: f64) -> usize {
        self.grid.partition_point(|&s| s <= t + 1e-12).saturating_sub(1)
    }
}
