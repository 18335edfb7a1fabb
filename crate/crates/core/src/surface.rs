//! The value surface `g(v, y)` of a `LogNormal(y - v/2, v)` outcome.
//!
//! `g` is carried through `H(x, y)` with `x = √v` and
//! `δ g(v, y) = exp(y - x²/2 + H(x, y))`. The partial derivatives of `H`, the
//! derivatives of `g`, and the risk tolerance multiplier `m = -g_y / (2 g_v)`
//! are all closed-form expressions in a few lognormal moments evaluated at
//! the solved `H`.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{GdaError, Result};
use crate::numerics::normal::{norm_cdf, norm_pdf};
use crate::numerics::roots::{bracket_increasing, find_root, try_find_root, RootBracket};
use crate::preference::kernel::{LogNormalKernel, ROOT_TOL};
use crate::preference::{GdaParams, Utility};

/// Below this `x`, derived quantities are interpolated in `x²` between the
/// boundary limit and their value at `SMALL_X` (when `δ ≠ 1`).
pub const SMALL_X: f64 = 1e-4;

/// Everything known about the surface at one `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub x: f64,
    pub y: f64,
    pub g: f64,
    pub h: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub g_v: f64,
    pub g_y: f64,
    pub m: f64,
}

/// Boundary constants at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    /// `H(0, y)` when `δ > 1`.
    pub c_of_y: Option<f64>,
    /// The `δ = 1` slope constant, when `β > 0`.
    pub c_star: Option<f64>,
}

/// `H` and its first partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HGradient {
    pub h: f64,
    /// From the quotient with `(ξ - x)` weights.
    pub h_x: f64,
    /// From the quotient with `U''` weights, when `U''` is available.
    pub h_x_alt: Option<f64>,
    /// `H_x / x`, well conditioned for small `x` when `U''` is available.
    pub h_x_over_x: f64,
    pub h_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPartials {
    pub g: f64,
    pub g_v: f64,
    pub g_y: f64,
}

/// Root of `c + β c N(c) + β N'(c) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CStar {
    pub value: f64,
    /// `β = 0`: the equation degenerates and the value is 0.
    pub degenerate: bool,
}

pub fn c_star(beta: f64) -> Result<CStar> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(GdaError::param(format!("beta must be finite and >= 0, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(CStar { value: 0.0, degenerate: true });
    }
    let f = |c: f64| c + beta * c * norm_cdf(c) + beta * norm_pdf(c);
    let br = match RootBracket::new(f, -0.4 * beta - 1e-3, 0.0) {
        Ok(br) => br,
        Err(_) => bracket_increasing(|c| Ok(f(c)), -0.4 * beta, 0.1)?,
    };
    Ok(CStar { value: find_root(f, br, 1e-17)?, degenerate: false })
}

#[derive(Debug, Clone, Copy)]
struct Cached {
    h: f64,
    m: Option<f64>,
}

/// Evaluator for a fixed utility and parameter pair, with an optional memo
/// of solved points keyed by `(x, y)` rounded to about 1e-13 relative.
pub struct GdaSurface<'a> {
    u: &'a Utility,
    params: GdaParams,
    memo: Option<Mutex<HashMap<(u64, u64), Cached>>>,
}

fn quantize(v: f64) -> u64 {
    // Round away the low 9 mantissa bits.
    (v.to_bits().wrapping_add(0x100)) & !0x1ff
}

impl<'a> GdaSurface<'a> {
    pub fn new(u: &'a Utility, params: GdaParams) -> Self {
        GdaSurface { u, params, memo: None }
    }

    pub fn with_memo(mut self) -> Self {
        self.memo = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn utility(&self) -> &Utility {
        self.u
    }

    pub fn params(&self) -> GdaParams {
        self.params
    }

    fn ld(&self) -> f64 {
        self.params.log_delta()
    }

    fn lookup(&self, x: f64, y: f64) -> Option<Cached> {
        let memo = self.memo.as_ref()?;
        memo.lock().ok()?.get(&(quantize(x), quantize(y))).copied()
    }

    fn store(&self, x: f64, y: f64, c: Cached) {
        if let Some(memo) = &self.memo {
            if let Ok(mut map) = memo.lock() {
                map.insert((quantize(x), quantize(y)), c);
            }
        }
    }

    fn kernel(&self, x: f64, y: f64) -> Result<LogNormalKernel<'a>> {
        LogNormalKernel::new(self.u, self.params.beta, self.ld(), x, y - 0.5 * x * x)
    }

    /// Solves `U(e^{y+z}/δ) = U(e^y) + β (U(e^y) - U(e^{y+z}))` for `δ > 1`.
    pub fn boundary_c(&self, y: f64) -> Result<f64> {
        let (b, ld, u) = (self.params.beta, self.ld(), self.u);
        if !(ld > 0.0) {
            return Err(GdaError::param("c(y) is defined for delta > 1 only"));
        }
        let uy = u.value_log(y);
        let f = |z: f64| u.value_log(y + z - ld) - (1.0 + b) * uy + b * u.value_log(y + z);
        let br = RootBracket::new(f, 0.0, ld)?;
        find_root(f, br, ROOT_TOL)
    }

    pub fn boundary(&self, y: f64) -> Result<BoundaryData> {
        let c_of_y = if self.params.delta > 1.0 { Some(self.boundary_c(y)?) } else { None };
        let cs = c_star(self.params.beta)?;
        Ok(BoundaryData { c_of_y, c_star: if cs.degenerate { None } else { Some(cs.value) } })
    }

    /// `H(0, y)`.
    pub fn boundary_h(&self, y: f64) -> Result<f64> {
        if self.params.delta > 1.0 {
            self.boundary_c(y)
        } else {
            Ok(self.ld())
        }
    }

    pub fn solve_h(&self, x: f64, y: f64) -> Result<f64> {
        self.solve_h_hint(x, y, None)
    }

    /// [`solve_h`](Self::solve_h) with a starting point for the bracket search.
    pub fn solve_h_hint(&self, x: f64, y: f64, hint: Option<f64>) -> Result<f64> {
        check_xy(x, y)?;
        if x == 0.0 {
            return self.boundary_h(y);
        }
        if let Some(c) = self.lookup(x, y) {
            return Ok(c.h);
        }
        let h = self.kernel(x, y)?.solve(hint)?;
        self.store(x, y, Cached { h, m: None });
        Ok(h)
    }

    /// `g(v, y)`.
    pub fn g(&self, v: f64, y: f64) -> Result<f64> {
        check_v(v)?;
        let h = self.solve_h(v.sqrt(), y)?;
        Ok((y - 0.5 * v + h - self.ld()).exp())
    }

    fn boundary_gradient(&self, y: f64) -> Result<HGradient> {
        let p = self.params;
        if p.delta == 1.0 {
            return Err(GdaError::BoundaryNotDifferentiable(
                "H is not differentiable at x = 0 when delta = 1".into(),
            ));
        }
        self.u.require_regularity(2)?;
        let u = self.u;
        if p.delta < 1.0 {
            return Ok(HGradient {
                h: self.ld(),
                h_x: 0.0,
                h_x_alt: Some(0.0),
                h_x_over_x: u.d2ww_log(y) / u.d1w_log(y) + 1.0,
                h_y: 0.0,
            });
        }
        let c = self.boundary_c(y)?;
        let den = u.d1w_log(c + y - self.ld()) + p.beta * u.d1w_log(c + y);
        Ok(HGradient {
            h: c,
            h_x: 0.0,
            h_x_alt: Some(0.0),
            h_x_over_x: u.d2ww_log(y) * (p.beta + 1.0) / den + 1.0,
            h_y: u.d1w_log(y) * (p.beta + 1.0) / den - 1.0,
        })
    }

    fn interior_gradient(&self, x: f64, h: f64, k: &LogNormalKernel) -> Result<HGradient> {
        let b = self.params.beta;
        let mo = k.moments(h)?;
        let d = k.denominator(h);
        if !(d > 0.0) || !d.is_finite() {
            return Err(GdaError::Evaluation { node: x, value: d });
        }
        let h_x = ((mo.uzxi + b * mo.uzxi_t) - x * (mo.uz + b * mo.uz_t)) / d + x;
        let h_y = (mo.uz + b * mo.uz_t) / d - 1.0;
        let (h_x_alt, h_x_over_x) = if self.u.regularity() >= 2 {
            let r = (mo.uzz + b * mo.uzz_t) / d - k.kink_term(h) / (x * d) + 1.0;
            (Some(x * r), r)
        } else {
            (None, h_x / x)
        };
        Ok(HGradient { h, h_x, h_x_alt, h_x_over_x, h_y })
    }

    /// Whether `x` sits in the interpolation layer next to the boundary.
    fn in_crossover(&self, x: f64, y: f64) -> Result<bool> {
        if x >= SMALL_X || self.params.delta == 1.0 || self.u.regularity() < 2 {
            return Ok(false);
        }
        let hc = self.solve_h(SMALL_X, y)?;
        Ok((hc / SMALL_X).abs() > 8.0)
    }

    /// `H` with both partials. At `x = 0` returns the continuous extensions
    /// (requires `δ ≠ 1`).
    pub fn grad_h(&self, x: f64, y: f64) -> Result<HGradient> {
        check_xy(x, y)?;
        if x == 0.0 {
            return self.boundary_gradient(y);
        }
        if self.in_crossover(x, y)? {
            let b = self.boundary_gradient(y)?;
            let kc = self.kernel(SMALL_X, y)?;
            let hc = self.solve_h(SMALL_X, y)?;
            let c = self.interior_gradient(SMALL_X, hc, &kc)?;
            let t = (x / SMALL_X).powi(2);
            let lerp = |a: f64, b: f64| a + t * (b - a);
            let h = self.solve_h(x, y)?;
            let r = lerp(b.h_x_over_x, c.h_x_over_x);
            return Ok(HGradient { h, h_x: x * r, h_x_alt: Some(x * r), h_x_over_x: r, h_y: lerp(b.h_y, c.h_y) });
        }
        let k = self.kernel(x, y)?;
        let h = match self.lookup(x, y) {
            Some(c) => c.h,
            None => {
                let h = k.solve(None)?;
                self.store(x, y, Cached { h, m: None });
                h
            }
        };
        self.interior_gradient(x, h, &k)
    }

    /// `(g, g_v, g_y)` at `(v, y)`.
    pub fn g_partials(&self, v: f64, y: f64) -> Result<GPartials> {
        check_v(v)?;
        let x = v.sqrt();
        let gr = self.grad_h(x, y)?;
        let g = (y - 0.5 * v + gr.h - self.ld()).exp();
        Ok(GPartials { g, g_v: (-0.5 + 0.5 * gr.h_x_over_x) * g, g_y: (1.0 + gr.h_y) * g })
    }

    /// Risk tolerance multiplier `m(x, y) = -g_y / (2 g_v)` at `v = x²`.
    pub fn m(&self, x: f64, y: f64) -> Result<f64> {
        self.m_hint(x, y, None).map(|r| r.0)
    }

    /// `(m, H)` at `(x, y)`, seeding the threshold search with `hint`.
    pub fn m_hint(&self, x: f64, y: f64, hint: Option<f64>) -> Result<(f64, f64)> {
        check_xy(x, y)?;
        self.u.require_regularity(2)?;
        let u = self.u;
        if x == 0.0 {
            if self.params.delta == 1.0 {
                return Err(GdaError::BoundaryNotDifferentiable(
                    "m blows up like 1/x at x = 0 when delta = 1".into(),
                ));
            }
            return Ok((-u.d1w_log(y) / u.d2ww_log(y), self.boundary_h(y)?));
        }
        if let Some(Cached { h, m: Some(m) }) = self.lookup(x, y) {
            return Ok((m, h));
        }
        if self.in_crossover(x, y)? {
            let m0 = -u.d1w_log(y) / u.d2ww_log(y);
            let (mc, _) = self.m_hint(SMALL_X, y, None)?;
            let h = self.solve_h(x, y)?;
            let t = (x / SMALL_X).powi(2);
            return Ok((m0 + t * (mc - m0), h));
        }
        let k = self.kernel(x, y)?;
        let h = match self.lookup(x, y) {
            Some(c) => c.h,
            None => k.solve(hint)?,
        };
        let b = self.params.beta;
        let mo = k.moments(h)?;
        let num = mo.uz + b * mo.uz_t;
        let den = -(mo.uzz + b * mo.uzz_t) + k.kink_term(h) / x;
        let m = num / den;
        if !(m > 0.0) || !m.is_finite() {
            return Err(GdaError::Evaluation { node: x, value: m });
        }
        self.store(x, y, Cached { h, m: Some(m) });
        Ok((m, h))
    }

    /// `m` from the partials of `H`: `x (1 + H_y) / (x - H_x)`.
    pub fn m_from_partials(&self, x: f64, y: f64) -> Result<f64> {
        let gr = self.grad_h(x, y)?;
        if x == 0.0 {
            return Ok((1.0 + gr.h_y) / (1.0 - gr.h_x_over_x));
        }
        Ok(x * (1.0 + gr.h_y) / (x - gr.h_x))
    }

    /// `-g_v / g_y`, equal to `1 / (2 m)`.
    pub fn mrs(&self, v: f64, y: f64) -> Result<f64> {
        check_v(v)?;
        Ok(0.5 / self.m(v.sqrt(), y)?)
    }

    pub fn point(&self, x: f64, y: f64) -> Result<SurfacePoint> {
        let gr = self.grad_h(x, y)?;
        let v = x * x;
        let g = (y - 0.5 * v + gr.h - self.ld()).exp();
        let g_v = (-0.5 + 0.5 * gr.h_x_over_x) * g;
        let g_y = (1.0 + gr.h_y) * g;
        Ok(SurfacePoint { x, y, g, h: gr.h, h_x: gr.h_x, h_y: gr.h_y, g_v, g_y, m: -g_y / (2.0 * g_v) })
    }

    /// Points `(v, y)` with `g(v, y) = level`, one per entry of `v_grid`.
    pub fn indifference_curve(&self, level: f64, v_grid: &[f64]) -> Result<Vec<CurvePoint>> {
        if !(level > 0.0) || !level.is_finite() {
            return Err(GdaError::param(format!("indifference level must be positive, got {level}")));
        }
        let target = level.ln();
        let mut out = Vec::with_capacity(v_grid.len());
        let mut guess = target;
        for &v in v_grid {
            check_v(v)?;
            let f = |y: f64| Ok(self.g(v, y)?.ln() - target);
            let br = bracket_increasing(f, guess, 0.05 + 0.5 * v)?;
            let y = if br.lo == br.hi { br.lo } else { try_find_root(f, br, 1e-13)? };
            let mrs = if v == 0.0 && self.params.delta == 1.0 { f64::INFINITY } else { self.mrs(v, y)? };
            out.push(CurvePoint { v, y, mrs });
            guess = y;
        }
        Ok(out)
    }
}

/// A point on an indifference curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub v: f64,
    pub y: f64,
    pub mrs: f64,
}

fn check_xy(x: f64, y: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(GdaError::domain(format!("surface evaluated at x={x}, y={y}")));
    }
    Ok(())
}

fn check_v(v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(GdaError::domain(format!("cumulative variance must be >= 0, got {v}")));
    }
    Ok(())
}

pub fn solve_h(u: &Utility, params: GdaParams, x: f64, y: f64) -> Result<f64> {
    GdaSurface::new(u, params).solve_h(x, y)
}

pub fn grad_h(u: &Utility, params: GdaParams, x: f64, y: f64) -> Result<HGradient> {
    GdaSurface::new(u, params).grad_h(x, y)
}

pub fn g_partials(u: &Utility, params: GdaParams, v: f64, y: f64) -> Result<GPartials> {
    GdaSurface::new(u, params).g_partials(v, y)
}

pub fn m_general(u: &Utility, params: GdaParams, x: f64, y: f64) -> Result<f64> {
    GdaSurface::new(u, params).m(x, y)
}

pub fn mrs(u: &Utility, params: GdaParams, v: f64, y: f64) -> Result<f64> {
    GdaSurface::new(u, params).mrs(v, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta: f64, delta: f64) -> GdaParams {
        GdaParams::new(beta, delta).unwrap()
    }

    #[test]
    fn c_star_reference_values() {
        // 40-digit references.
        let cases = [
            (0.01, -0.003_969_606_205_157_583),
            (0.5, -0.161_657_506_745_854_44),
            (1.0, -0.276_029_804_798_143_3),
            (5.0, -0.706_530_003_183_026_8),
        ];
        for (b, want) in cases {
            let c = c_star(b).unwrap().value;
            assert!((c - want).abs() < 1e-15, "beta={b}: {c}");
            let r = c + b * c * norm_cdf(c) + b * norm_pdf(c);
            assert!(r.abs() < 1e-12);
        }
        let z = c_star(0.0).unwrap();
        assert!(z.degenerate && z.value == 0.0);
        let tiny = c_star(1e-12).unwrap().value;
        assert!((tiny + 1e-12 * norm_pdf(0.0)).abs() < 1e-20);
    }

    #[test]
    fn boundary_c_for_log_utility() {
        // For log utility the boundary equation is linear: c = log δ / (1 + β).
        let u = Utility::log();
        let s = GdaSurface::new(&u, p(0.5, 1.2));
        let c = s.boundary_c(0.0).unwrap();
        assert!((c - 1.2f64.ln() / 1.5).abs() < 1e-15);
        assert!(c > 0.0 && c < 1.2f64.ln());
    }

    #[test]
    fn reference_threshold_and_m() {
        // 40-digit references at y = x²/2 (so the log-mean is zero).
        let u = Utility::log();
        let x = 0.3;
        let y = 0.5 * x * x;
        let s = GdaSurface::new(&u, p(0.5, 0.9));
        assert!((s.solve_h(x, y).unwrap() - -0.137_073_520_869_031_18).abs() < 1e-13);
        assert!((s.g(x * x, y).unwrap() - 0.968_784_578_310_994_9).abs() < 1e-13);
        assert!((s.m(x, y).unwrap() - 0.659_840_297_045_634_3).abs() < 1e-12);
        let s = GdaSurface::new(&u, p(0.5, 1.1));
        assert!((s.solve_h(x, y).unwrap() - 0.028_164_257_573_117_96).abs() < 1e-13);
        assert!((s.g(x * x, y).unwrap() - 0.935_058_745_522_594_1).abs() < 1e-13);
        assert!((s.m(x, y).unwrap() - 0.657_125_768_957_322_6).abs() < 1e-12);
        let u2 = Utility::crra(2.0).unwrap();
        let s = GdaSurface::new(&u2, p(0.5, 0.9));
        assert!((s.m(x, y).unwrap() - 0.394_817_891_144_436_07).abs() < 1e-12);
    }

    #[test]
    fn expected_utility_reduction() {
        let u = Utility::log();
        let s = GdaSurface::new(&u, p(0.0, 0.9));
        let gp = s.g_partials(0.09, 0.05).unwrap();
        let g = (0.05f64 - 0.045).exp();
        assert!((gp.g - g).abs() < 1e-14);
        assert!((gp.g_v + 0.5 * g).abs() < 1e-12);
        assert!((gp.g_y - g).abs() < 1e-12);
        assert!((s.mrs(0.3, 0.1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn boundary_values() {
        let u = Utility::crra(2.0).unwrap();
        let s = GdaSurface::new(&u, p(0.5, 0.9));
        assert_eq!(s.solve_h(0.0, 0.3).unwrap(), 0.9f64.ln());
        assert!((s.m(0.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let gp = s.g_partials(0.0, 0.0).unwrap();
        assert!((gp.g_y / gp.g_v + 1.0).abs() < 1e-14);
        let da = GdaSurface::new(&u, p(0.5, 1.0));
        assert!(matches!(da.g_partials(0.0, 0.0), Err(GdaError::BoundaryNotDifferentiable(_))));
        assert!(matches!(da.m(0.0, 0.0), Err(GdaError::BoundaryNotDifferentiable(_))));
    }

    #[test]
    fn crossover_is_continuous() {
        let u = Utility::log();
        for delta in [0.9, 1.2] {
            let s = GdaSurface::new(&u, p(0.5, delta));
            let below = s.m(SMALL_X * (1.0 - 1e-9), 0.1).unwrap();
            let at = s.m(SMALL_X, 0.1).unwrap();
            assert!((below - at).abs() < 1e-12);
            let g0 = s.grad_h(0.0, 0.1).unwrap();
            let g1 = s.grad_h(1e-6, 0.1).unwrap();
            assert!((g0.h_x_over_x - g1.h_x_over_x).abs() < 1e-9);
            assert!((g0.h_y - g1.h_y).abs() < 1e-9);
        }
    }

    #[test]
    fn memo_returns_same_values() {
        let u = Utility::crra(3.0).unwrap();
        let s = GdaSurface::new(&u, p(0.5, 1.3)).with_memo();
        let a = s.m_hint(0.2, 0.0, None).unwrap();
        let b = s.m_hint(0.2, 0.0, Some(0.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn indifference_curve_levels() {
        let u = Utility::log();
        let s = GdaSurface::new(&u, p(0.5, 0.9));
        let pts = s.indifference_curve(1.0, &[0.0, 0.1, 0.5]).unwrap();
        for c in &pts {
            assert!((s.g(c.v, c.y).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(pts[1].y > pts[0].y && pts[2].y > pts[1].y);
    }
}
