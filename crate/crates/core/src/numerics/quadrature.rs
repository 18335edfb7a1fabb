//! Expectations against the standard normal law.
//!
//! Full expectations of smooth integrands use Gauss–Hermite rules. Truncated
//! expectations `E[f(ξ) 1{lo < ξ < hi}]` have a kink at the cut and go through
//! adaptive Gauss–Kronrod with fixed interior breakpoints.

use std::sync::OnceLock;

use super::integrate::{integrate_adaptive_vec, QuadOptions};
use super::normal::norm_pdf;
use crate::error::{GdaError, Result};

/// Order of the rule returned by [`default_rule`].
pub const DEFAULT_ORDER: usize = 64;

const BREAKS: [f64; 7] = [-12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0];

/// Nodes and weights for `E[f(ξ)]`, `ξ ~ N(0, 1)`; the weights sum to one.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn expect_vec<const K: usize>(&self, mut f: impl FnMut(f64) -> [f64; K]) -> [f64; K] {
        let mut acc = [0.0; K];
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc
    }
}

/// Gauss–Hermite rule of the given order, rescaled to the standard normal.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > 400 {
        return Err(GdaError::param(format!("Gauss-Hermite order {order} out of range 1..=400")));
    }
    let n = order;
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(GdaError::no_convergence("Gauss-Hermite node refinement", 100));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let s2 = std::f64::consts::SQRT_2;
    let spi = std::f64::consts::PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * s2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / spi).collect();
    nodes.reverse();
    weights.reverse();
    Ok(QuadratureRule { nodes, weights, order })
}

/// Cached rule of order [`DEFAULT_ORDER`].
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(DEFAULT_ORDER).expect("default Gauss-Hermite rule"))
}

/// Tolerances used for truncated normal expectations.
pub fn truncated_options() -> QuadOptions {
    QuadOptions { abs_tol: 1e-300, rel_tol: 1e-14, max_segments: 4000 }
}

/// `E[f(ξ) 1{lo < ξ < hi}]` for a vector-valued `f`. Either limit may be
/// infinite. `f` is never called where the normal density underflows.
pub fn gaussian_expect_range_vec<const K: usize>(
    mut f: impl FnMut(f64) -> Result<[f64; K]>,
    lo: f64,
    hi: f64,
) -> Result<[f64; K]> {
    if lo.is_nan() || hi.is_nan() {
        return Err(GdaError::domain("NaN integration limit"));
    }
    if lo >= hi {
        return Ok([0.0; K]);
    }
    let mut pts = Vec::with_capacity(BREAKS.len() + 2);
    pts.push(lo);
    pts.extend(BREAKS.iter().copied().filter(|&b| b > lo && b < hi));
    pts.push(hi);
    let weighted = |xi: f64| -> Result<[f64; K]> {
        let phi = norm_pdf(xi);
        if phi == 0.0 {
            return Ok([0.0; K]);
        }
        let mut v = f(xi)?;
        for c in v.iter_mut() {
            *c *= phi;
        }
        Ok(v)
    };
    Ok(integrate_adaptive_vec(weighted, &pts, truncated_options())?.value)
}

/// Scalar form of [`gaussian_expect_range_vec`].
pub fn gaussian_expect_range(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    gaussian_expect_range_vec(|x| Ok([f(x)]), lo, hi).map(|v| v[0])
}

/// `E[f(e^{xξ + y - x²/2}) 1{ξ < a}]`, or the full expectation when
/// `restrict_below` is `None`. Non-finite values of `f` are reported with
/// the abscissa at which they occurred.
pub fn lognormal_expect(
    f: impl Fn(f64) -> f64,
    x: f64,
    y: f64,
    restrict_below: Option<f64>,
) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(GdaError::domain(format!("lognormal_expect needs x >= 0 and finite y, got ({x}, {y})")));
    }
    let m = y - 0.5 * x * x;
    if x == 0.0 {
        let inside = restrict_below.is_none_or(|a| 0.0 < a);
        if !inside {
            return Ok(0.0);
        }
        let v = f(m.exp());
        return if v.is_finite() { Ok(v) } else { Err(GdaError::Evaluation { node: 0.0, value: v }) };
    }
    let eval = |xi: f64| -> Result<f64> {
        let v = f((x * xi + m).exp());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GdaError::Evaluation { node: xi, value: v })
        }
    };
    match restrict_below {
        None => {
            let r = default_rule();
            let mut acc = 0.0;
            for (&xi, &w) in r.nodes.iter().zip(&r.weights) {
                acc += w * eval(xi)?;
            }
            Ok(acc)
        }
        Some(a) => gaussian_expect_range_vec(|xi| Ok([eval(xi)?]), f64::NEG_INFINITY, a).map(|v| v[0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal::norm_cdf;

    #[test]
    fn moments_of_standard_normal() {
        let r = default_rule();
        let w: f64 = r.weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-14);
        assert!(r.expect(|x| x).abs() < 1e-14);
        assert!((r.expect(|x| x * x) - 1.0).abs() < 1e-13);
        assert!((r.expect(|x| x.powi(4)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let r = gauss_hermite(9).unwrap();
        for w in r.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(r.nodes[4].abs() < 1e-15);
        assert!((r.nodes[0] + r.nodes[8]).abs() < 1e-14);
    }

    #[test]
    fn lognormal_moment() {
        // E[e^{tξ}] = e^{t²/2}
        let r = default_rule();
        for &t in &[0.3, 1.0, 2.5] {
            let v = r.expect(|x| (t * x).exp());
            assert!((v / (0.5 * t * t).exp() - 1.0).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn truncated_mass_and_mean() {
        for &a in &[-40.0, -8.0, -1.3, 0.0, 0.7, 5.0, 40.0] {
            let mass = gaussian_expect_range(|_| 1.0, f64::NEG_INFINITY, a).unwrap();
            assert!((mass - norm_cdf(a)).abs() < 1e-15 + 1e-13 * norm_cdf(a), "a={a}");
            // E[ξ 1{ξ<a}] = -φ(a)
            let mean = gaussian_expect_range(|x| x, f64::NEG_INFINITY, a).unwrap();
            assert!((mean + norm_pdf(a)).abs() < 1e-15, "a={a}");
        }
    }

    #[test]
    fn truncated_exponential() {
        // E[e^{tξ} 1{ξ<a}] = e^{t²/2} N(a - t)
        let (t, a) = (0.8, 0.25);
        let v = gaussian_expect_range(|x| (t * x).exp(), f64::NEG_INFINITY, a).unwrap();
        let exact = (0.5 * t * t).exp() * norm_cdf(a - t);
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn lognormal_moments() {
        for &k in &[0i32, 1, 2, 3] {
            for &x in &[0.1, 0.5, 1.0] {
                for &y in &[-1.0, 0.0, 1.0] {
                    let v = lognormal_expect(|w| w.powi(k), x, y, None).unwrap();
                    let kf = k as f64;
                    let exact = (kf * (y - 0.5 * x * x) + 0.5 * kf * kf * x * x).exp();
                    assert!((v / exact - 1.0).abs() < 1e-12, "k={k} x={x} y={y}");
                }
            }
        }
        let v = lognormal_expect(|w| w.ln(), 0.5, 0.2, None).unwrap();
        assert!((v - 0.075).abs() < 1e-14);
        assert!((lognormal_expect(|w| w, 0.3, 0.1, None).unwrap() - 0.1f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn lognormal_degenerate_and_errors() {
        assert_eq!(lognormal_expect(|w| w, 0.0, 0.0, Some(-1.0)).unwrap(), 0.0);
        assert_eq!(lognormal_expect(|w| w, 0.0, 0.0, Some(1.0)).unwrap(), 1.0);
        let e = lognormal_expect(|w| if w > 2.0 { f64::NAN } else { w }, 0.5, 0.0, None).unwrap_err();
        assert!(matches!(e, GdaError::Evaluation { .. }));
    }

    #[test]
    fn empty_range_is_zero() {
        assert_eq!(gaussian_expect_range(|_| 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(gaussian_expect_range(|_| 1.0, 2.0, 1.0).unwrap(), 0.0);
    }
}
