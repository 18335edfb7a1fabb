//! Utility functions on the positive half-line.

use std::fmt;
use std::sync::Arc;

use crate::error::{GdaError, Result};
use crate::numerics::roots::{bracket_increasing, try_find_root};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied utility. Derivatives beyond the first are optional; the
/// operations that need them check [`Utility::regularity`].
#[derive(Clone)]
pub struct CustomUtility {
    pub value: ScalarFn,
    pub d1: ScalarFn,
    pub d2: Option<ScalarFn>,
    pub d3: Option<ScalarFn>,
    pub inverse: Option<ScalarFn>,
}

impl CustomUtility {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomUtility { value: Arc::new(value), d1: Arc::new(d1), d2: None, d3: None, inverse: None }
    }

    pub fn with_d2(mut self, d2: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn with_d3(mut self, d3: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.d3 = Some(Arc::new(d3));
        self
    }

    pub fn with_inverse(mut self, inv: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inverse = Some(Arc::new(inv));
        self
    }
}

#[derive(Clone)]
pub enum UtilityKind {
    /// `w^(1-ρ)/(1-ρ)`, or `ln w` when `ρ = 1`.
    Crra { rho: f64 },
    Custom(CustomUtility),
}

/// Strictly increasing, strictly concave utility.
#[derive(Clone)]
pub struct Utility {
    kind: UtilityKind,
    description: String,
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Utility").field("description", &self.description).finish()
    }
}

fn is_log(rho: f64) -> bool {
    rho == 1.0
}

impl Utility {
    pub fn crra(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(GdaError::param(format!("CRRA coefficient must be positive, got {rho}")));
        }
        Ok(Utility { kind: UtilityKind::Crra { rho }, description: format!("crra(rho={rho})") })
    }

    pub fn log() -> Self {
        Utility { kind: UtilityKind::Crra { rho: 1.0 }, description: "log".into() }
    }

    /// Wraps a custom utility after spot checks of monotonicity and
    /// concavity on a logarithmic grid.
    pub fn custom(c: CustomUtility, description: impl Into<String>) -> Result<Self> {
        for i in -20..=20 {
            let w = (i as f64 * 0.5).exp();
            let d1 = (c.d1)(w);
            if !(d1 > 0.0) || !d1.is_finite() {
                return Err(GdaError::param(format!("U'({w}) = {d1} is not positive")));
            }
            if let Some(d2) = &c.d2 {
                let v = d2(w);
                if !(v < 0.0) || !v.is_finite() {
                    return Err(GdaError::param(format!("U''({w}) = {v} is not negative")));
                }
            }
            if !(c.value)(w).is_finite() {
                return Err(GdaError::param(format!("U({w}) is not finite")));
            }
        }
        Ok(Utility { kind: UtilityKind::Custom(c), description: description.into() })
    }

    /// `U = U_a + weight * U_b` with CRRA components `ρ_a`, `ρ_b`. Its relative
    /// risk aversion moves between the two coefficients, so it is not
    /// homogeneous unless they coincide.
    pub fn crra_mixture(rho_a: f64, rho_b: f64, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(GdaError::param(format!("mixture weight must be nonnegative, got {weight}")));
        }
        let a = Utility::crra(rho_a)?;
        let b = Utility::crra(rho_b)?;
        let (a1, b1, a2, b2, a3, b3) =
            (a.clone(), b.clone(), a.clone(), b.clone(), a.clone(), b.clone());
        let (a4, b4) = (a, b);
        let c = CustomUtility::new(
            move |w| a1.value(w) + weight * b1.value(w),
            move |w| a2.d1(w) + weight * b2.d1(w),
        )
        .with_d2(move |w| a3.d2(w) + weight * b3.d2(w))
        .with_d3(move |w| a4.d3(w) + weight * b4.d3(w));
        Utility::custom(c, format!("crra_mixture(rho_a={rho_a}, rho_b={rho_b}, weight={weight})"))
    }

    pub fn kind(&self) -> &UtilityKind {
        &self.kind
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// The CRRA coefficient, if this is a CRRA utility.
    pub fn crra_rho(&self) -> Option<f64> {
        match self.kind {
            UtilityKind::Crra { rho } => Some(rho),
            UtilityKind::Custom(_) => None,
        }
    }

    /// Number of derivatives available in closed form.
    pub fn regularity(&self) -> u8 {
        match &self.kind {
            UtilityKind::Crra { .. } => 3,
            UtilityKind::Custom(c) => match (&c.d2, &c.d3) {
                (Some(_), Some(_)) => 3,
                (Some(_), None) => 2,
                _ => 1,
            },
        }
    }

    pub fn require_regularity(&self, order: u8) -> Result<()> {
        if self.regularity() < order {
            return Err(GdaError::param(format!(
                "{} supplies {} derivative(s), {order} required",
                self.description,
                self.regularity()
            )));
        }
        Ok(())
    }

    pub fn value(&self, w: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } if is_log(*rho) => w.ln(),
            UtilityKind::Crra { rho } => w.powf(1.0 - rho) / (1.0 - rho),
            UtilityKind::Custom(c) => (c.value)(w),
        }
    }

    pub fn d1(&self, w: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } if is_log(*rho) => 1.0 / w,
            UtilityKind::Crra { rho } => w.powf(-rho),
            UtilityKind::Custom(c) => (c.d1)(w),
        }
    }

    /// `U''`, or NaN when not supplied.
    pub fn d2(&self, w: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } => -rho * w.powf(-rho - 1.0),
            UtilityKind::Custom(c) => c.d2.as_ref().map_or(f64::NAN, |f| f(w)),
        }
    }

    /// `U'''`, or NaN when not supplied.
    pub fn d3(&self, w: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } => rho * (rho + 1.0) * w.powf(-rho - 2.0),
            UtilityKind::Custom(c) => c.d3.as_ref().map_or(f64::NAN, |f| f(w)),
        }
    }

    /// `U(e^s)`, without forming `e^s` where avoidable.
    #[inline]
    pub fn value_log(&self, s: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } if is_log(*rho) => s,
            UtilityKind::Crra { rho } => ((1.0 - rho) * s).exp() / (1.0 - rho),
            UtilityKind::Custom(c) => (c.value)(s.exp()),
        }
    }

    /// `U'(e^s) e^s`.
    #[inline]
    pub fn d1w_log(&self, s: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } if is_log(*rho) => 1.0,
            UtilityKind::Crra { rho } => ((1.0 - rho) * s).exp(),
            UtilityKind::Custom(c) => {
                let w = s.exp();
                (c.d1)(w) * w
            }
        }
    }

    /// `U''(e^s) e^{2s}`.
    #[inline]
    pub fn d2ww_log(&self, s: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } => -rho * ((1.0 - rho) * s).exp(),
            UtilityKind::Custom(c) => {
                let w = s.exp();
                c.d2.as_ref().map_or(f64::NAN, |f| f(w) * w * w)
            }
        }
    }

    /// `-w U''(w) / U'(w)`.
    pub fn relative_risk_aversion(&self, w: f64) -> f64 {
        match &self.kind {
            UtilityKind::Crra { rho } => *rho,
            UtilityKind::Custom(_) => -w * self.d2(w) / self.d1(w),
        }
    }

    /// `U⁻¹(u)`. Closed form for CRRA, otherwise a bracketed search in `ln w`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(GdaError::domain(format!("utility inverse at {u}")));
        }
        match &self.kind {
            UtilityKind::Crra { rho } if is_log(*rho) => Ok(u.exp()),
            UtilityKind::Crra { rho } => {
                let base = (1.0 - rho) * u;
                if !(base > 0.0) {
                    return Err(GdaError::domain(format!(
                        "utility level {u} is outside the range of crra(rho={rho})"
                    )));
                }
                Ok(base.powf(1.0 / (1.0 - rho)))
            }
            UtilityKind::Custom(c) => {
                if let Some(inv) = &c.inverse {
                    return Ok(inv(u));
                }
                let f = |s: f64| Ok(self.value_log(s) - u);
                let br = bracket_increasing(f, 0.0, 0.5)?;
                Ok(try_find_root(f, br, 1e-15)?.exp())
            }
        }
    }

    /// A constant `C₀` with `-U'(w) / (w U''(w)) <= C₀`, taken as the maximum
    /// over a logarithmic grid on `[e^-12, e^12]`.
    pub fn tolerance_bound(&self) -> Result<f64> {
        self.require_regularity(2)?;
        let mut c0: f64 = 0.0;
        for i in -120..=120 {
            let s = i as f64 * 0.1;
            let r = -self.d1w_log(s) / self.d2ww_log(s);
            if !(r > 0.0) || !r.is_finite() {
                return Err(GdaError::param(format!(
                    "risk tolerance at w = {} is {r}; need a positive bounded value",
                    s.exp()
                )));
            }
            c0 = c0.max(r);
        }
        Ok(c0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crra_closed_forms() {
        let u = Utility::crra(2.0).unwrap();
        assert!((u.value(2.0) + 0.5).abs() < 1e-15);
        assert!((u.d1(2.0) - 0.25).abs() < 1e-15);
        assert!((u.d2(2.0) + 0.25).abs() < 1e-15);
        assert!((u.d3(2.0) - 6.0 / 16.0).abs() < 1e-15);
        assert!((u.inverse(-0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(u.inverse(0.5).is_err());
    }

    #[test]
    fn log_space_helpers_match() {
        for u in [Utility::log(), Utility::crra(3.0).unwrap(), Utility::crra_mixture(1.0, 2.0, 1.0).unwrap()] {
            for &s in &[-1.3, 0.0, 0.4, 2.0] {
                let w = f64::exp(s);
                assert!((u.value_log(s) - u.value(w)).abs() < 1e-13);
                assert!((u.d1w_log(s) - u.d1(w) * w).abs() < 1e-13);
                assert!((u.d2ww_log(s) - u.d2(w) * w * w).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mixture_risk_aversion_between_components() {
        let u = Utility::crra_mixture(1.0, 2.0, 1.0).unwrap();
        for &w in &[0.1, 1.0, 10.0] {
            let r = u.relative_risk_aversion(w);
            assert!(r > 1.0 && r < 2.0);
        }
        let x = u.inverse(u.value(1.7)).unwrap();
        assert!((x - 1.7).abs() < 1e-13);
    }

    #[test]
    fn custom_checks_monotonicity() {
        let bad = CustomUtility::new(|w| -w, |_| -1.0);
        assert!(Utility::custom(bad, "decreasing").is_err());
        let no_d2 = CustomUtility::new(|w: f64| w.ln(), |w| 1.0 / w);
        let u = Utility::custom(no_d2, "log without d2").unwrap();
        assert_eq!(u.regularity(), 1);
        assert!(u.require_regularity(2).is_err());
        assert!(u.tolerance_bound().is_err());
    }

    #[test]
    fn tolerance_bound_of_crra() {
        let c0 = Utility::crra(2.0).unwrap().tolerance_bound().unwrap();
        assert!((c0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rho() {
        assert!(Utility::crra(0.0).is_err());
        assert!(Utility::crra(f64::NAN).is_err());
    }
}
