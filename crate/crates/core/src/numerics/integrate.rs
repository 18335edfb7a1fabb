//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.
//!
//! Integrands may be vector valued; all components share one subdivision and
//! the error estimate is the largest component error. Infinite endpoints are
//! mapped onto `(0, 1]` with `x = b - (1 - s) / s`.

use crate::error::{GdaError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    /// Relative to the integral of the absolute integrand, so cancellation
    /// does not demand accuracy below roundoff.
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-300, rel_tol: 1e-14, max_segments: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const K: usize> {
    pub value: [f64; K],
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    abs: f64,
    error: f64,
}

#[derive(Clone, Copy)]
enum Map {
    Identity,
    /// `x = b - (1 - s) / s` for `(-∞, b]`.
    Lower(f64),
    /// `x = a + (1 - s) / s` for `[a, ∞)`.
    Upper(f64),
}

impl Map {
    #[inline]
    fn apply(self, s: f64) -> (f64, f64) {
        match self {
            Map::Identity => (s, 1.0),
            Map::Lower(b) => (b - (1.0 - s) / s, 1.0 / (s * s)),
            Map::Upper(a) => (a + (1.0 - s) / s, 1.0 / (s * s)),
        }
    }
}

fn kronrod<const K: usize, F>(f: &mut F, map: Map, a: f64, b: f64) -> Result<Segment<K>>
where
    F: FnMut(f64) -> Result<[f64; K]>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |s: f64| -> Result<[f64; K]> {
        let (x, jac) = map.apply(s);
        let mut v = f(x)?;
        for c in v.iter_mut() {
            *c *= jac;
            if !c.is_finite() {
                return Err(GdaError::Evaluation { node: x, value: *c });
            }
        }
        Ok(v)
    };

    let fc = eval(center)?;
    let mut res_k = [0.0; K];
    let mut res_g = [0.0; K];
    let mut res_abs = [0.0; K];
    let mut fv1 = [[0.0; K]; 7];
    let mut fv2 = [[0.0; K]; 7];
    for k in 0..K {
        res_k[k] = fc[k] * WGK[7];
        res_g[k] = fc[k] * WG[3];
        res_abs[k] = res_k[k].abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        for k in 0..K {
            res_k[k] += WGK[j] * (f1[k] + f2[k]);
            res_abs[k] += WGK[j] * (f1[k].abs() + f2[k].abs());
            if j % 2 == 1 {
                res_g[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
        fv1[j] = f1;
        fv2[j] = f2;
    }

    let mut value = [0.0; K];
    let mut err_max: f64 = 0.0;
    let mut abs_max: f64 = 0.0;
    for k in 0..K {
        let mean = 0.5 * res_k[k];
        let mut asc = WGK[7] * (fc[k] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((fv1[j][k] - mean).abs() + (fv2[j][k] - mean).abs());
        }
        let asc = asc * half.abs();
        let rabs = res_abs[k] * half.abs();
        let mut err = ((res_k[k] - res_g[k]) * half).abs();
        if asc != 0.0 && err != 0.0 {
            err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
        }
        if rabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * rabs);
        }
        value[k] = res_k[k] * half;
        err_max = err_max.max(err);
        abs_max = abs_max.max(rabs);
    }
    Ok(Segment { a, b, value, abs: abs_max, error: err_max })
}

/// Integrates a vector-valued `f` over consecutive intervals delimited by
/// `points` (sorted; the first and last entries may be infinite).
pub fn integrate_adaptive_vec<const K: usize, F>(
    mut f: F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult<K>>
where
    F: FnMut(f64) -> Result<[f64; K]>,
{
    if points.len() < 2 {
        return Err(GdaError::domain("integration needs at least two points"));
    }
    let mut segs: Vec<(Map, Segment<K>)> = Vec::with_capacity(64);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.is_nan() || b.is_nan() || a > b {
            return Err(GdaError::domain(format!("bad integration interval [{a}, {b}]")));
        }
        if a == b {
            continue;
        }
        match (a.is_finite(), b.is_finite()) {
            (true, true) => segs.push((Map::Identity, kronrod(&mut f, Map::Identity, a, b)?)),
            (false, true) => {
                let m = Map::Lower(b);
                segs.push((m, kronrod(&mut f, m, 0.0, 1.0)?));
            }
            (true, false) => {
                let m = Map::Upper(a);
                segs.push((m, kronrod(&mut f, m, 0.0, 1.0)?));
            }
            (false, false) => {
                let lo = Map::Lower(0.0);
                let hi = Map::Upper(0.0);
                segs.push((lo, kronrod(&mut f, lo, 0.0, 1.0)?));
                segs.push((hi, kronrod(&mut f, hi, 0.0, 1.0)?));
            }
        }
    }
    let mut evaluations = 15 * segs.len();

    loop {
        let mut total = [0.0; K];
        let mut err = 0.0;
        let mut abs = 0.0;
        let mut worst = 0;
        for (i, (_, s)) in segs.iter().enumerate() {
            for (t, v) in total.iter_mut().zip(&s.value) {
                *t += v;
            }
            err += s.error;
            abs += s.abs;
            if s.error > segs[worst].1.error {
                worst = i;
            }
        }
        // Each segment's estimate is floored at 50 ulps of its absolute
        // integral, so never ask for better than twice that floor.
        let tol = opts.abs_tol.max(opts.rel_tol * abs).max(100.0 * f64::EPSILON * abs);
        if err <= tol || segs.is_empty() {
            return Ok(QuadResult { value: total, error: err, evaluations });
        }
        if segs.len() >= opts.max_segments {
            return Err(GdaError::no_convergence(
                format!("adaptive quadrature (error {err:.3e} > {tol:.3e})"),
                segs.len(),
            ));
        }
        let (map, s) = segs[worst];
        // Below about a thousand ulps the Kronrod abscissas can no longer be
        // placed accurately and the error estimate is pure roundoff.
        let mid = 0.5 * (s.a + s.b);
        if s.b - s.a <= 1e3 * f64::EPSILON * s.a.abs().max(s.b.abs()) || !(mid > s.a && mid < s.b) {
            log::debug!("adaptive quadrature stopped at resolution limit, error {err:.3e} (target {tol:.3e})");
            return Ok(QuadResult { value: total, error: err, evaluations });
        }
        let left = kronrod(&mut f, map, s.a, mid)?;
        let right = kronrod(&mut f, map, mid, s.b)?;
        evaluations += 30;

        segs[worst] = (map, left);
        segs.push((map, right));
    }
}

/// Scalar convenience wrapper around [`integrate_adaptive_vec`].
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> Result<f64>,
    points: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    integrate_adaptive_vec(|x| Ok([f(x)?]), points, opts).map(|r| r.value[0])
}

/// Integral of a smooth scalar function over `[a, b]`.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(GdaError::param(format!("tolerance must be positive, got {tol}")));
    }
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let opts = QuadOptions { abs_tol: tol, rel_tol: f64::EPSILON, ..Default::default() };
    Ok(sign * integrate_adaptive(|x| Ok(f(x)), &[lo, hi], opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate_1d(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-14).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate_1d(|x| x.sin(), 0.0, 1.0, 1e-14).unwrap();
        let b = integrate_1d(|x| x.sin(), 1.0, 0.0, 1e-14).unwrap();
        assert!((a + b).abs() < 1e-15);
        assert!((a - (1.0 - 1f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        let v = integrate_1d(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_over_real_line() {
        let f = |x: f64| Ok((-0.5 * x * x).exp());
        let opts = QuadOptions { rel_tol: 1e-14, ..Default::default() };
        let v = integrate_adaptive(f, &[f64::NEG_INFINITY, f64::INFINITY], opts).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn half_line() {
        let opts = QuadOptions::default();
        let v = integrate_adaptive(|x| Ok((-x).exp()), &[1.0, f64::INFINITY], opts).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-14);
        let v = integrate_adaptive(|x| Ok(x.exp()), &[f64::NEG_INFINITY, 0.0], opts).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn vector_components_share_subdivision() {
        let r = integrate_adaptive_vec(|x| Ok([x, x * x, x.cos()]), &[0.0, 1.0], QuadOptions::default())
            .unwrap();
        assert!((r.value[0] - 0.5).abs() < 1e-15);
        assert!((r.value[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.value[2] - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn nan_integrand_is_an_error() {
        let e = integrate_1d(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(e, GdaError::Evaluation { .. }));
    }

    #[test]
    fn roundoff_noise_on_a_narrow_interval_is_accepted() {
        // Noise in the last bits keeps the error estimate from ever falling.
        let f = |x: f64| Ok(if x.to_bits() & 1 == 1 { 1.0 + 1e-13 } else { 1.0 });
        let (a, b) = (5.0, 5.0 + 5e-10);
        let r = integrate_adaptive(f, &[a, b], QuadOptions::default()).unwrap();
        assert!((r / (b - a) - 1.0).abs() < 1e-12);
    }
}
