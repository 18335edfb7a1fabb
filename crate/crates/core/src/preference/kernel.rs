//! The threshold equation for log-normal outcomes.
//!
//! With `Z = exp(x ξ + m)`, `ξ ~ N(0, 1)`, the disappointment threshold
//! `δη = exp(m + z)` is the root of the increasing function
//!
//! ```text
//! F(z) = U(e^{m+z}/δ) - E U(Z) + β [U(e^{m+z}) N(z/x) - E U(Z) 1{ξ < z/x}]
//! ```
//!
//! Everything the surface needs (its partial derivatives and the
//! marginal rate of substitution) comes from the same handful of full and
//! truncated moments, evaluated at the root.

use crate::error::{GdaError, Result};
use crate::numerics::normal::{norm_cdf, norm_pdf};
use crate::numerics::quadrature::{default_rule, gaussian_expect_range, gaussian_expect_range_vec};
use crate::numerics::roots::{bracket_increasing, try_find_root};
use crate::preference::utility::Utility;

pub(crate) const ROOT_TOL: f64 = 1e-15;

pub(crate) struct LogNormalKernel<'a> {
    pub u: &'a Utility,
    pub beta: f64,
    pub log_delta: f64,
    pub x: f64,
    pub mean: f64,
    eu: f64,
}

/// Full moments and their truncations to `{ξ < H/x}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments {
    /// E[U'(Z)Z], and the same on {ξ < a}.
    pub uz: f64,
    pub uz_t: f64,
    /// E[U'(Z)Z ξ], and truncated.
    pub uzxi: f64,
    pub uzxi_t: f64,
    /// E[U''(Z)Z²], and truncated. NaN without a second derivative.
    pub uzz: f64,
    pub uzz_t: f64,
}

impl<'a> LogNormalKernel<'a> {
    pub fn new(u: &'a Utility, beta: f64, log_delta: f64, x: f64, mean: f64) -> Result<Self> {
        if !(x > 0.0) || !x.is_finite() || !mean.is_finite() {
            return Err(GdaError::domain(format!("log-normal kernel needs x > 0, got x={x}, mean={mean}")));
        }
        let eu = default_rule().expect(|xi| u.value_log(x * xi + mean));
        if !eu.is_finite() {
            return Err(GdaError::Evaluation { node: x, value: eu });
        }
        Ok(LogNormalKernel { u, beta, log_delta, x, mean, eu })
    }

    pub fn expected_utility(&self) -> f64 {
        self.eu
    }

    fn truncated_utility(&self, lo: f64, hi: f64) -> Result<f64> {
        let (u, x, m) = (self.u, self.x, self.mean);
        gaussian_expect_range(|xi| u.value_log(x * xi + m), lo, hi)
    }

    /// Root of the threshold equation. `hint` seeds the bracket.
    pub fn solve(&self, hint: Option<f64>) -> Result<f64> {
        let (u, beta, x, m) = (self.u, self.beta, self.x, self.mean);
        let guess = hint.unwrap_or_else(|| self.default_guess());
        if !guess.is_finite() {
            return Err(GdaError::domain("non-finite starting point for threshold search"));
        }
        let a_ref = guess / x;
        let t_ref = if beta > 0.0 { self.truncated_utility(f64::NEG_INFINITY, a_ref)? } else { 0.0 };

        let mut f = |z: f64| -> Result<f64> {
            let base = u.value_log(m + z - self.log_delta) - self.eu;
            if beta == 0.0 {
                return Ok(base);
            }
            let a = z / x;
            let t = if a >= a_ref {
                t_ref + self.truncated_utility(a_ref, a)?
            } else {
                t_ref - self.truncated_utility(a, a_ref)?
            };
            Ok(base + beta * (u.value_log(m + z) * norm_cdf(a) - t))
        };

        let step = if hint.is_some() { 1e-4 * (1.0 + x) } else { 0.05 + 0.5 * x };
        let br = bracket_increasing(&mut f, guess, step)?;
        if br.lo == br.hi {
            return Ok(br.lo);
        }
        try_find_root(f, br, ROOT_TOL)
    }

    fn default_guess(&self) -> f64 {
        let rra = self.u.relative_risk_aversion(self.mean.exp());
        let shift = if self.log_delta > 0.0 { self.log_delta / (1.0 + self.beta) } else { self.log_delta };
        let g = shift - 0.5 * (rra - 1.0) * self.x * self.x;
        if g.is_finite() { g } else { shift }
    }

    /// Moments at the solved threshold `h`.
    pub fn moments(&self, h: f64) -> Result<Moments> {
        let (u, x, m) = (self.u, self.x, self.mean);
        let a = h / x;
        let second = u.regularity() >= 2;
        let full = default_rule().expect_vec(|xi| {
            let s = x * xi + m;
            let d1 = u.d1w_log(s);
            let d2 = if second { u.d2ww_log(s) } else { 0.0 };
            [d1, d1 * xi, d2]
        });
        let trunc = gaussian_expect_range_vec(
            |xi| {
                let s = x * xi + m;
                let d1 = u.d1w_log(s);
                let d2 = if second { u.d2ww_log(s) } else { 0.0 };
                Ok([d1, d1 * xi, d2])
            },
            f64::NEG_INFINITY,
            a,
        )?;
        let nan_if = |v: f64| if second { v } else { f64::NAN };
        Ok(Moments {
            uz: full[0],
            uz_t: trunc[0],
            uzxi: full[1],
            uzxi_t: trunc[1],
            uzz: nan_if(full[2]),
            uzz_t: nan_if(trunc[2]),
        })
    }

    /// `D = U'(e^{m+h}/δ) e^{m+h}/δ + β U'(e^{m+h}) e^{m+h} N(h/x)`.
    pub fn denominator(&self, h: f64) -> f64 {
        let s = self.mean + h;
        self.u.d1w_log(s - self.log_delta) + self.beta * self.u.d1w_log(s) * norm_cdf(h / self.x)
    }

    /// `β U'(e^{m+h}) e^{m+h} N'(h/x)`.
    pub fn kink_term(&self, h: f64) -> f64 {
        self.beta * self.u.d1w_log(self.mean + h) * norm_pdf(h / self.x)
    }
}
