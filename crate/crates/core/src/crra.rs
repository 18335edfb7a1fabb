//! Power utilities: the equilibrium in closed form up to one integral.
//!
//! With `U(w) = w^{1-ρ}/(1-ρ)` the surface is homogeneous in `e^y`, the
//! multiplier depends on `x` alone, and the equilibrium equation separates:
//! `v(t) = M⁻¹(∫_t^T |λ|²)` with `M(v) = ∫_0^v m(√u)⁻² du`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    initial_window, interval_lambda_sq, node_residual, picard_backward, residuals_with, SolverConfig,
};
use crate::error::{GdaError, Result};
use crate::market::{time_grid, MarketModel, StrategyPath};
use crate::numerics::{
    bracket_increasing, integrate_adaptive_vec, norm_cdf, norm_pdf, try_find_root, QuadOptions,
    RootBracket,
};
use crate::preference::{GdaParams, Utility};
use crate::surface::GdaSurface;

const ROOT_TOL: f64 = 1e-15;
const M_PANELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrraSpec {
    pub rho: f64,
    pub beta: f64,
    pub delta: f64,
}

impl CrraSpec {
    pub fn new(rho: f64, beta: f64, delta: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(GdaError::param(format!("rho must be positive, got {rho}")));
        }
        GdaParams::new(beta, delta)?;
        if delta == 1.0 {
            return Err(GdaError::param(
                "delta = 1 gives the zero strategy; the power-utility solver needs delta != 1",
            ));
        }
        Ok(CrraSpec { rho, beta, delta })
    }

    pub fn params(&self) -> GdaParams {
        GdaParams { beta: self.beta, delta: self.delta }
    }

    fn ld(&self) -> f64 {
        self.delta.ln()
    }

    /// `H` at `x = 0`: `ln δ` below one, the two-date certainty equivalent
    /// shift above one.
    fn z_boundary(&self) -> f64 {
        let ld = self.ld();
        if self.delta < 1.0 || self.beta == 0.0 {
            return ld;
        }
        let b = self.beta;
        let ln_psi = if self.rho == 1.0 {
            -b * ld / (1.0 + b)
        } else {
            let k = 1.0 - self.rho;
            ((1.0 + b).ln() - (1.0 + b * (k * ld).exp()).ln()) / k
        };
        ln_psi + ld
    }

    /// Increasing function whose root is `H(x, ·)`.
    fn h_equation(&self, x: f64, z: f64) -> f64 {
        let (b, ld, rho) = (self.beta, self.ld(), self.rho);
        let a = z / x;
        if rho == 1.0 {
            z - ld + b * norm_cdf(a) * z + b * x * norm_pdf(a)
        } else {
            let k = 1.0 - rho;
            let f = k * z + ((-k * ld).exp() + b * norm_cdf(a)).ln()
                - 0.5 * k * k * x * x
                - (b * norm_cdf(a - k * x)).ln_1p();
            if k > 0.0 { f } else { -f }
        }
    }

    /// `H(x, y)`, which for power utility does not depend on `y`.
    pub fn solve_h(&self, x: f64, hint: Option<f64>) -> Result<f64> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(GdaError::domain(format!("x must be finite and nonnegative, got {x}")));
        }
        if x == 0.0 {
            return Ok(self.z_boundary());
        }
        if self.beta == 0.0 {
            return Ok(self.ld() + 0.5 * (1.0 - self.rho) * x * x);
        }
        let f = |z: f64| Ok(self.h_equation(x, z));
        let (guess, step) = match hint {
            Some(h) => (h, 1e-4 * (1.0 + x)),
            None => (self.z_boundary() + 0.5 * (1.0 - self.rho) * x * x, 0.05 + 0.5 * x),
        };
        let br = bracket_increasing(f, guess, step)?;
        if br.lo == br.hi {
            return Ok(br.lo);
        }
        try_find_root(f, br, ROOT_TOL)
    }

    /// `(s, G'(s))` with `s = H/x - (1-ρ)x`, `G(s) = ln(1 + βN(s))`.
    fn g_prime(&self, x: f64, z: f64) -> f64 {
        let s = z / x - (1.0 - self.rho) * x;
        self.beta * norm_pdf(s) / (1.0 + self.beta * norm_cdf(s))
    }

    /// `m(x)` together with `H(x)`, reusing `hint` as a starting point.
    pub fn m_hint(&self, x: f64, hint: Option<f64>) -> Result<(f64, f64)> {
        let z = self.solve_h(x, hint)?;
        if x == 0.0 {
            return Ok((1.0 / self.rho, z));
        }
        Ok((x / (self.rho * x + self.g_prime(x, z)), z))
    }

    /// `1/ρ - m(x)`, computed without cancellation.
    pub fn m_gap(&self, x: f64) -> Result<f64> {
        let z = self.solve_h(x, None)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let gp = self.g_prime(x, z);
        Ok(gp / (self.rho * (self.rho * x + gp)))
    }

    /// `ln(1/ρ - m(x))`. Finite for every `x > 0` when `β > 0`, including
    /// near `x = 0` where the gap itself underflows; `-∞` otherwise.
    pub fn ln_m_gap(&self, x: f64) -> Result<f64> {
        let z = self.solve_h(x, None)?;
        if x == 0.0 || self.beta == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let s = z / x - (1.0 - self.rho) * x;
        let ln_gp = self.beta.ln() - 0.5 * s * s - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - (self.beta * norm_cdf(s)).ln_1p();
        let gp = ln_gp.exp();
        Ok(ln_gp - self.rho.ln() - (self.rho * x + gp).ln())
    }
}

/// `g(x², 0)`, the certainty equivalent of `e^{xξ - x²/2}`.
pub fn solve_g_crra(spec: &CrraSpec, x: f64) -> Result<f64> {
    let z = spec.solve_h(x, None)?;
    Ok((z - 0.5 * x * x - spec.ld()).exp())
}

/// The equilibrium multiplier `m(x)`; equals `1/ρ` at `x = 0` and for `β = 0`.
pub fn m_crra(spec: &CrraSpec, x: f64) -> Result<f64> {
    spec.m_hint(x, None).map(|r| r.0)
}

/// `1/ρ - m(x) >= 0`, accurate even where `m` rounds to `1/ρ`.
pub fn m_crra_gap(spec: &CrraSpec, x: f64) -> Result<f64> {
    spec.m_gap(x)
}

/// `ln(1/ρ - m(x))`; finite exactly when the gap is strictly positive.
pub fn ln_m_crra_gap(spec: &CrraSpec, x: f64) -> Result<f64> {
    spec.ln_m_gap(x)
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-300, rel_tol: 1e-14, max_segments: 2000 }
}

/// `[∫ m⁻², ∫ m⁻¹]` of `m(√u)` over `[a, b]`.
fn panel_integrals(spec: &CrraSpec, a: f64, b: f64) -> Result<[f64; 2]> {
    let f = |u: f64| -> Result<[f64; 2]> {
        let m = m_crra(spec, u.max(0.0).sqrt())?;
        Ok([1.0 / (m * m), 1.0 / m])
    };
    Ok(integrate_adaptive_vec(f, &[a, b], quad_opts())?.value)
}

/// `M(v) = ∫_0^v m(√u)⁻² du`.
#[allow(non_snake_case)]
pub fn big_M(spec: &CrraSpec, v: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(GdaError::domain(format!("M needs a finite v >= 0, got {v}")));
    }
    if spec.beta == 0.0 {
        return Ok(spec.rho * spec.rho * v);
    }
    Ok(panel_integrals(spec, 0.0, v)?[0])
}

/// Cumulative `M` and `K(v) = ∫_0^v m(√u)⁻¹ du` on uniform knots, for
/// repeated inversion.
#[derive(Debug, Clone)]
pub struct MTable {
    spec: CrraSpec,
    knots: Vec<f64>,
    big_m: Vec<f64>,
    big_k: Vec<f64>,
}

impl MTable {
    /// Covers every target up to `lambda_total`: since `M(v) >= ρ²v`, the
    /// inverse lies below `lambda_total / ρ²`.
    pub fn new(spec: CrraSpec, lambda_total: f64) -> Result<Self> {
        if !(lambda_total >= 0.0) || !lambda_total.is_finite() {
            return Err(GdaError::domain(format!("bad target range {lambda_total}")));
        }
        let v_max = lambda_total / (spec.rho * spec.rho);
        let n = if v_max > 0.0 { M_PANELS } else { 1 };
        let knots: Vec<f64> = (0..=n).map(|k| v_max * k as f64 / n as f64).collect();
        let mut big_m = vec![0.0; n + 1];
        let mut big_k = vec![0.0; n + 1];
        for k in 0..n {
            let [pm, pk] = if knots[k + 1] > knots[k] {
                panel_integrals(&spec, knots[k], knots[k + 1])?
            } else {
                [0.0, 0.0]
            };
            big_m[k + 1] = big_m[k] + pm;
            big_k[k + 1] = big_k[k] + pk;
        }
        Ok(MTable { spec, knots, big_m, big_k })
    }

    pub fn m_total(&self) -> f64 {
        *self.big_m.last().unwrap()
    }

    /// `(v, K(v))` with `M(v) = target`.
    pub fn invert(&self, target: f64) -> Result<(f64, f64)> {
        if !(target >= 0.0) || target > self.m_total() * (1.0 + 1e-12) + 1e-300 {
            return Err(GdaError::UnboundedInverse {
                hi: *self.knots.last().unwrap(),
                value: self.m_total(),
                target,
            });
        }
        if target == 0.0 {
            return Ok((0.0, 0.0));
        }
        let k = self.big_m.partition_point(|&m| m <= target).clamp(1, self.knots.len() - 1) - 1;
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let rem = target - self.big_m[k];
        if rem <= 0.0 {
            return Ok((a, self.big_k[k]));
        }
        let f = |v: f64| -> Result<f64> {
            if v <= a {
                return Ok(-rem);
            }
            Ok(panel_integrals(&self.spec, a, v)?[0] - rem)
        };
        let f_hi = self.big_m[k + 1] - target;
        let v = if f_hi <= 0.0 {
            b
        } else {
            try_find_root(f, RootBracket::from_values(a, b, -rem, f_hi)?, ROOT_TOL * b.max(1e-300))?
        };
        let kv = if v > a { self.big_k[k] + panel_integrals(&self.spec, a, v)?[1] } else { self.big_k[k] };
        Ok((v, kv))
    }
}

fn strip_horizon(market: &MarketModel, grid: &[f64]) -> Result<Vec<f64>> {
    let t_end = market.horizon();
    let mut g: Vec<f64> = grid.to_vec();
    if g.last().is_some_and(|&t| (t - t_end).abs() <= 1e-12 * t_end.max(1.0)) {
        g.pop();
    }
    if g.is_empty() || g[0] != 0.0 {
        return Err(GdaError::param("time grid must start at 0 and contain a node before T"));
    }
    for w in g.windows(2) {
        if !(w[1] > w[0]) {
            return Err(GdaError::param("time grid must be strictly increasing"));
        }
    }
    if *g.last().unwrap() >= t_end {
        return Err(GdaError::param("time grid runs past the horizon"));
    }
    Ok(g)
}

/// The power-utility equilibrium on `grid` (which may or may not end at `T`).
/// Tails `v`, `y` are exact rather than trapezoid sums.
pub fn equilibrium_crra(spec: &CrraSpec, market: &MarketModel, grid: &[f64]) -> Result<StrategyPath> {
    let grid = strip_horizon(market, grid)?;
    let table = MTable::new(*spec, market.lambda_sq_tail(0.0))?;
    let n = grid.len();
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for &t in &grid {
        let (vi, yi) = table.invert(market.lambda_sq_tail(t))?;
        m.push(m_crra(spec, vi.sqrt())?);
        v.push(vi);
        y.push(yi);
    }
    let mut path = StrategyPath::from_multipliers(market, &grid, &m, 1.0 / spec.rho)?;
    path.v = v;
    path.y = y;
    let u = Utility::crra(spec.rho)?;
    path.residual = residuals_with(&GdaSurface::new(&u, spec.params()), market, &path)?;
    Ok(path)
}

/// Risk aversion as a function of calendar time.
#[derive(Clone)]
pub enum RhoSchedule {
    /// `ρ(t) = intercept + slope·t`.
    Affine { intercept: f64, slope: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RhoSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoSchedule::Affine { intercept, slope } => {
                write!(f, "Affine {{ intercept: {intercept}, slope: {slope} }}")
            }
            RhoSchedule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl RhoSchedule {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RhoSchedule::Affine { intercept, slope } => intercept + slope * t,
            RhoSchedule::Custom(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RhoSchedule::Affine { slope, .. } if *slope == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct HdraSpec {
    pub rho: RhoSchedule,
}

impl HdraSpec {
    /// `ρ(t) = 1 + αt`.
    pub fn affine(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(GdaError::param(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        Ok(HdraSpec { rho: RhoSchedule::Affine { intercept: 1.0, slope: alpha } })
    }

    /// Checks positivity and monotonicity on a fine grid of `[0, T]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        const N: usize = 1000;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=N {
            let t = horizon * k as f64 / N as f64;
            let r = self.rho.eval(t);
            if !(r > 0.0) || !r.is_finite() {
                return Err(GdaError::param(format!("rho({t}) = {r} is not positive")));
            }
            if r < prev {
                return Err(GdaError::param(format!("rho must be nondecreasing; it drops at t={t}")));
            }
            prev = r;
        }
        Ok(())
    }
}

/// Equilibrium when risk aversion changes with time. Each node uses the
/// power-utility multiplier with its own `ρ(t_i)`, and the resulting
/// integral equation is solved by the backward Picard scheme.
pub fn equilibrium_hdra(
    params: &GdaParams,
    hdra: &HdraSpec,
    market: &MarketModel,
    cfg: &SolverConfig,
) -> Result<StrategyPath> {
    cfg.validate()?;
    let horizon = market.horizon();
    hdra.validate(horizon)?;
    let rho0 = hdra.rho.eval(0.0);
    if hdra.rho.is_constant() {
        let spec = CrraSpec::new(rho0, params.beta, params.delta)?;
        return equilibrium_crra(&spec, market, &time_grid(market, cfg.grid_step)?);
    }
    let grid = time_grid(market, cfg.grid_step)?;
    let n = grid.len() - 1;
    let specs: Vec<CrraSpec> = grid
        .iter()
        .map(|&t| CrraSpec::new(hdra.rho.eval(t), params.beta, params.delta))
        .collect::<Result<_>>()?;
    let lam2 = interval_lambda_sq(market, &grid);
    let lam_sup = market.lambda_sup();
    let c0 = 1.0 / rho0;

    // Lipschitz constant of m(t, ·) at both ends of the ρ range.
    let mut l_hat: f64 = 0.0;
    for spec in [&specs[0], &specs[n]] {
        let x_max = c0 * lam_sup * horizon.sqrt();
        let k = 8;
        let mut prev = m_crra(spec, 0.0)?;
        for j in 1..=k {
            let (xa, xb) = (x_max * (j - 1) as f64 / k as f64, x_max * j as f64 / k as f64);
            let cur = m_crra(spec, xb)?;
            l_hat = l_hat.max((cur - prev).abs() / (xb - xa));
            prev = cur;
        }
    }
    let window = initial_window(l_hat, lam_sup, horizon, cfg);

    let mut hints: Vec<Option<f64>> = vec![None; grid.len()];
    let mut m_fn = |i: usize, x: f64, _y: f64| -> Result<f64> {
        let (m, z) = specs[i].m_hint(x, hints[i])?;
        hints[i] = Some(z);
        Ok(m)
    };
    let upper = |i: usize| if lam2[i] > 0.0 { c0 * lam_sup / lam2[i].sqrt() } else { 0.0 };
    let m_terminal = 1.0 / specs[n].rho;
    let out = picard_backward(&grid, &lam2, m_terminal, &mut m_fn, cfg, window, &upper)?;

    let mut path = StrategyPath::from_multipliers(market, &grid[..n], &out.m[..n], m_terminal)?;
    path.v.copy_from_slice(&out.v[..n]);
    path.y.copy_from_slice(&out.y[..n]);
    let mut diag = out.diagnostics;
    diag.lipschitz_estimate = l_hat;
    diag.exposure_bound = c0 * lam_sup;
    // m(t, ·) must stay in (0, 1/ρ(t)] for the scheme to be well posed.
    diag.exposure_bound_respected = (0..n).all(|i| {
        let m = out.m[i];
        m > 0.0 && m <= (1.0 / specs[i].rho) * (1.0 + 1e-12)
    });
    if !diag.exposure_bound_respected {
        log::warn!("horizon-dependent multiplier left (0, 1/rho(t)]; the bound is not guaranteed here");
    }
    // Node i is scored against the preference with ρ frozen at t_i.
    let mut residual = Vec::with_capacity(n);
    for (i, spec) in specs.iter().take(n).enumerate() {
        let u = Utility::crra(spec.rho)?;
        let s = GdaSurface::new(&u, spec.params());
        residual.push(node_residual(&s, market, &path, i)?);
    }
    path.residual = residual;
    path.diagnostics = Some(diag);
    Ok(path)
}
