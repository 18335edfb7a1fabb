//! Bracketing root finders.

use crate::error::{GdaError, Result};

const MAX_ITER: usize = 200;
const MAX_EXPAND: usize = 80;

/// An interval `[lo, hi]` on which the function changes sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl RootBracket {
    /// Evaluates `f` at both ends and checks for a sign change.
    pub fn new(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> Result<Self> {
        Self::try_new(|x| Ok(f(x)), lo, hi)
    }

    pub fn try_new(
        mut f: impl FnMut(f64) -> Result<f64>,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(GdaError::domain(format!("bad bracket [{lo}, {hi}]")));
        }
        let f_lo = checked(lo, f(lo)?)?;
        let f_hi = checked(hi, f(hi)?)?;
        Self::from_values(lo, hi, f_lo, f_hi)
    }

    /// Builds a bracket from values already computed.
    pub fn from_values(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        if opposite(f_lo, f_hi) == Some(false) {
            return Err(GdaError::Bracket { lo, hi, f_lo, f_hi });
        }
        Ok(RootBracket { lo, hi, f_lo, f_hi })
    }
}

/// `Some(true)` for strictly opposite signs, `None` if either is zero. Sign
/// tests avoid the underflow of `a * b` for tiny values.
fn opposite(a: f64, b: f64) -> Option<bool> {
    if a == 0.0 || b == 0.0 {
        None
    } else {
        Some((a < 0.0) != (b < 0.0))
    }
}

fn checked(x: f64, fx: f64) -> Result<f64> {
    if fx.is_finite() {
        Ok(fx)
    } else {
        Err(GdaError::Evaluation { node: x, value: fx })
    }
}

/// Brent's method on a valid bracket. `tol` is an absolute tolerance on the
/// abscissa; a relative floor of a few ulps is always added.
pub fn find_root(mut f: impl FnMut(f64) -> f64, bracket: RootBracket, tol: f64) -> Result<f64> {
    try_find_root(|x| Ok(f(x)), bracket, tol)
}

/// [`find_root`] for fallible functions.
pub fn try_find_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    bracket: RootBracket,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(GdaError::param(format!("root tolerance must be positive, got {tol}")));
    }
    let rtol = 4.0 * f64::EPSILON;
    let (mut xpre, mut xcur) = (bracket.lo, bracket.hi);
    let (mut fpre, mut fcur) = (bracket.f_lo, bracket.f_hi);
    if fpre == 0.0 {
        return Ok(xpre);
    }
    if fcur == 0.0 {
        return Ok(xcur);
    }
    let (mut xblk, mut fblk) = (0.0, 0.0);
    let (mut spre, mut scur) = (0.0f64, 0.0f64);

    for _ in 0..MAX_ITER {
        if opposite(fpre, fcur) == Some(true) {
            xblk = xpre;
            fblk = fpre;
            spre = xcur - xpre;
            scur = spre;
        }
        if fblk.abs() < fcur.abs() {
            xpre = xcur;
            xcur = xblk;
            xblk = xpre;
            fpre = fcur;
            fcur = fblk;
            fblk = fpre;
        }
        let delta = 0.5 * (tol + rtol * xcur.abs());
        let sbis = 0.5 * (xblk - xcur);
        if fcur == 0.0 || sbis.abs() < delta {
            return Ok(xcur);
        }
        if spre.abs() > delta && fcur.abs() < fpre.abs() {
            let stry = if xpre == xblk {
                -fcur * (xcur - xpre) / (fcur - fpre)
            } else {
                let dpre = (fpre - fcur) / (xpre - xcur);
                let dblk = (fblk - fcur) / (xblk - xcur);
                -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            };
            if 2.0 * stry.abs() < spre.abs().min(3.0 * sbis.abs() - delta) {
                spre = scur;
                scur = stry;
            } else {
                spre = sbis;
                scur = sbis;
            }
        } else {
            spre = sbis;
            scur = sbis;
        }
        xpre = xcur;
        fpre = fcur;
        if scur.abs() > delta {
            xcur += scur;
        } else {
            xcur += if sbis > 0.0 { delta } else { -delta };
        }
        fcur = checked(xcur, f(xcur)?)?;
    }
    Err(GdaError::no_convergence("Brent root search", MAX_ITER))
}

/// Finds a sign change of a nondecreasing function by stepping away from
/// `guess` with geometrically growing steps.
pub fn bracket_increasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    guess: f64,
    step: f64,
) -> Result<RootBracket> {
    let mut step = step.abs().max(1e-12);
    let f0 = checked(guess, f(guess)?)?;
    if f0 == 0.0 {
        return Ok(RootBracket { lo: guess, hi: guess, f_lo: 0.0, f_hi: 0.0 });
    }
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let (mut a, mut fa) = (guess, f0);
    for _ in 0..MAX_EXPAND {
        let b = a + dir * step;
        let fb = checked(b, f(b)?)?;
        if opposite(fa, fb) != Some(false) {
            return Ok(if dir > 0.0 {
                RootBracket { lo: a, hi: b, f_lo: fa, f_hi: fb }
            } else {
                RootBracket { lo: b, hi: a, f_lo: fb, f_hi: fa }
            });
        }
        a = b;
        fa = fb;
        step *= 2.0;
    }
    Err(GdaError::Bracket { lo: guess, hi: a, f_lo: f0, f_hi: fa })
}

/// Solves `F(x) = target` for a nondecreasing `F` on `[lo, ∞)`, with
/// `F(lo) <= target`. The upper end grows geometrically from `hi_hint`.
pub fn invert_monotone(
    mut big_f: impl FnMut(f64) -> Result<f64>,
    target: f64,
    lo: f64,
    hi_hint: f64,
    tol: f64,
) -> Result<f64> {
    let f_lo = checked(lo, big_f(lo)?)? - target;
    if f_lo > 0.0 {
        return Err(GdaError::domain(format!(
            "target {target} lies below F({lo}) = {}",
            f_lo + target
        )));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let mut width = (hi_hint - lo).max(1e-12);
    let mut a = lo;
    let mut fa = f_lo;
    let mut last = f_lo;
    for _ in 0..MAX_EXPAND {
        let b = lo + width;
        let fb = checked(b, big_f(b)?)? - target;
        if fb >= 0.0 {
            let br = RootBracket { lo: a, hi: b, f_lo: fa, f_hi: fb };
            return try_find_root(|x| Ok(big_f(x)? - target), br, tol);
        }
        a = b;
        fa = fb;
        last = fb;
        width *= 2.0;
        if !b.is_finite() {
            break;
        }
    }
    Err(GdaError::UnboundedInverse { hi: lo + width, value: last + target, target })
}
