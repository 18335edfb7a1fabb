use gda_core::crra::{equilibrium_crra, equilibrium_hdra, ln_m_crra_gap, CrraSpec, HdraSpec, RhoSchedule};
use gda_core::equilibrium::{equilibrium_residual, solve, InitialGuess, SolverConfig};
use gda_core::io::{read_strategy_csv, write_strategy_csv};
use gda_core::market::{time_grid, MarketModel, StrategyPath};
use gda_core::preference::{GdaParams, Utility};
use gda_core::surface::GdaSurface;
use proptest::prelude::*;

fn market() -> MarketModel {
    MarketModel::constant(vec![0.06], vec![vec![0.3]], 3.0).unwrap()
}

fn cfg(step: f64) -> SolverConfig {
    SolverConfig { grid_step: step, ..Default::default() }
}

fn p(beta: f64, delta: f64) -> GdaParams {
    GdaParams::new(beta, delta).unwrap()
}

/// `max_i |a_i - m(√v_i, y_i) λ_i|` with `v`, `y` integrated exactly for
/// the piecewise-linear exposure, i.e. the defect of the path in the
/// continuous-time equation.
fn continuous_defect(s: &GdaSurface, market: &MarketModel, path: &StrategyPath) -> f64 {
    let n = path.len();
    let (mut v, mut y) = (0.0, 0.0);
    let mut worst = 0.0f64;
    for i in (0..n).rev() {
        let lam = market.lambda_at(path.grid[i])[0];
        let a0 = path.a[i][0];
        let a1 = path.right_end(market, i)[0];
        let h = path.interval_end(i) - path.grid[i];
        let mid = 0.5 * (a0 + a1);
        v += h / 6.0 * (a0 * a0 + 4.0 * mid * mid + a1 * a1);
        y += 0.5 * h * (a0 + a1) * lam;
        let m = s.m(v.sqrt(), y).unwrap();
        worst = worst.max((a0 - m * lam).abs());
    }
    worst
}

#[test]
fn halving_the_step_moves_nodes_within_ten_defects() {
    // The amplification from defect to error is about 8 for δ = 0.7 and does
    // not shrink with the step.
    let u = Utility::log();
    let mk = market();
    for (beta, delta, h) in [(0.5, 0.7, 0.004), (0.5, 0.9, 0.004), (0.5, 1.1, 0.004), (0.5, 1.3, 0.004)] {
        let par = p(beta, delta);
        let coarse = solve(&u, &par, &mk, &cfg(h)).unwrap();
        let fine = solve(&u, &par, &mk, &cfg(h / 2.0)).unwrap();
        let defect = continuous_defect(&GdaSurface::new(&u, par), &mk, &coarse);
        let mut change = 0.0f64;
        for (i, t) in coarse.grid.iter().enumerate() {
            let j = fine.grid.iter().position(|s| (s - t).abs() < 1e-12).unwrap();
            change = change.max((coarse.a[i][0] - fine.a[j][0]).abs());
        }
        assert!(change <= 10.0 * defect, "delta={delta}: change {change:e}, defect {defect:e}");
    }
}

#[test]
fn picard_limit_does_not_depend_on_the_start() {
    let u = Utility::crra_mixture(1.0, 3.0, 0.5).unwrap();
    let mk = market();
    let par = p(0.5, 0.9);
    let zero = solve(&u, &par, &mk, &SolverConfig { initial_guess: InitialGuess::Zero, ..cfg(0.01) }).unwrap();
    let upper = solve(&u, &par, &mk, &SolverConfig { initial_guess: InitialGuess::UpperBound, ..cfg(0.01) }).unwrap();
    for (a, b) in zero.a.iter().zip(&upper.a) {
        assert!((a[0] - b[0]).abs() <= 1e-8);
    }
}

#[test]
fn exposures_respect_the_a_priori_bound() {
    let u = Utility::crra_mixture(1.0, 3.0, 0.5).unwrap();
    let mk = market();
    let path = solve(&u, &p(0.5, 1.2), &mk, &cfg(0.01)).unwrap();
    let bound = u.tolerance_bound().unwrap() * mk.lambda_sup();
    assert!(path.a.iter().all(|a| a[0].abs() <= bound));
    assert!(path.diagnostics.as_ref().unwrap().exposure_bound_respected);
}

#[test]
fn two_asset_market_with_a_breakpoint() {
    let mk = MarketModel::piecewise(
        2.0,
        vec![
            (0.0, vec![0.05, 0.03], vec![vec![0.2, 0.0], vec![0.05, 0.25]]),
            (1.0, vec![0.02, 0.04], vec![vec![0.3, 0.0], vec![0.0, 0.2]]),
        ],
    )
    .unwrap();
    let rho = 2.0;
    let u = Utility::crra(rho).unwrap();
    let par = p(0.5, 0.8);
    let path = solve(&u, &par, &mk, &cfg(0.01)).unwrap();
    let spec = CrraSpec::new(rho, 0.5, 0.8).unwrap();
    for i in 0..path.len() {
        let t = path.grid[i];
        let lam = mk.lambda_at(t);
        // a = m λ with 0 < m < 1/ρ, and π = (σᵀ)⁻¹ a.
        let m = path.m[i];
        assert!(m > 0.0 && ln_m_crra_gap(&spec, path.v[i].sqrt()).unwrap().is_finite());
        for k in 0..2 {
            assert!((path.a[i][k] - m * lam[k]).abs() <= 1e-9);
        }
        let seg = mk.segment_at(t);
        let back = seg.sigma.transpose() * nalgebra::DVector::from_column_slice(&path.pi[i]);
        for k in 0..2 {
            assert!((back[k] - path.a[i][k]).abs() <= 1e-12);
        }
        if i + 1 < path.len() {
            assert!(path.v[i] >= path.v[i + 1]);
        }
    }
    // The semi-analytic solver agrees on the same market.
    let grid = time_grid(&mk, 0.01).unwrap();
    let semi = equilibrium_crra(&spec, &mk, &grid).unwrap();
    for (a, b) in path.pi.iter().flatten().zip(semi.pi.iter().flatten()) {
        assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
    }
}

#[test]
fn residual_column_is_small_for_solutions() {
    let u = Utility::log();
    let mk = market();
    let par = p(0.5, 0.9);
    let path = solve(&u, &par, &mk, &cfg(0.01)).unwrap();
    let r = equilibrium_residual(&u, &par, &mk, &path).unwrap();
    assert!(r.iter().all(|x| x.unwrap() <= 1e-9));
    let bad = path.scaled(&mk, 1.1).unwrap();
    let r = equilibrium_residual(&u, &par, &mk, &bad).unwrap();
    assert!(r.iter().all(|x| x.unwrap() > 1e-3));
}

#[test]
fn hdra_with_constant_rho_is_the_power_case() {
    let mk = market();
    let par = p(0.5, 1.1);
    let h = HdraSpec { rho: RhoSchedule::Affine { intercept: 2.0, slope: 0.0 } };
    let a = equilibrium_hdra(&par, &h, &mk, &cfg(0.01)).unwrap();
    let b = equilibrium_crra(&CrraSpec::new(2.0, 0.5, 1.1).unwrap(), &mk, &time_grid(&mk, 0.01).unwrap()).unwrap();
    assert_eq!(a.pi, b.pi);
}

#[test]
fn seeded_runs_are_deterministic() {
    let u = Utility::log();
    let mk = market();
    let par = p(0.5, 1.3);
    let a = solve(&u, &par, &mk, &cfg(0.01)).unwrap();
    let b = solve(&u, &par, &mk, &cfg(0.01)).unwrap();
    assert_eq!(a.a, b.a);
    assert_eq!(a.v, b.v);
}

fn path_strategy() -> impl Strategy<Value = StrategyPath> {
    (1usize..4, 1usize..20).prop_flat_map(|(d, n)| {
        let vec_d = move || prop::collection::vec(-1e3f64..1e3, d);
        (
            prop::collection::vec(1e-3f64..1.0, n),
            prop::collection::vec(vec_d(), n),
            prop::collection::vec(vec_d(), n),
            prop::collection::vec(prop::num::f64::NORMAL, n),
            prop::collection::vec(prop::num::f64::NORMAL, n),
            prop::collection::vec(0.0f64..10.0, n),
            prop::collection::vec(prop::option::of(0.0f64..1.0), n),
        )
            .prop_map(|(steps, a, pi, v, y, m, r)| {
                let mut t = 0.0;
                let grid: Vec<f64> = steps
                    .iter()
                    .map(|s| {
                        let now = t;
                        t += s;
                        now
                    })
                    .collect();
                StrategyPath {
                    horizon: t,
                    grid,
                    a,
                    pi,
                    v,
                    y,
                    m,
                    residual: r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect(),
                    terminal_a: None,
                    diagnostics: None,
                }
            })
    })
}

fn same_to_12_digits(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 5e-12 * a.abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strategy_csv_round_trip(path in path_strategy()) {
        let mut buf = Vec::new();
        write_strategy_csv(&mut buf, &path).unwrap();
        let back = read_strategy_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.len(), path.len());
        prop_assert_eq!(back.dim(), path.dim());
        let cols = |q: &StrategyPath| -> Vec<f64> {
            let mut out = q.grid.clone();
            out.extend(q.a.iter().flatten());
            out.extend(q.pi.iter().flatten());
            out.extend(&q.v);
            out.extend(&q.y);
            out.extend(&q.m);
            out.extend(&q.residual);
            out
        };
        for (x, y) in cols(&path).into_iter().zip(cols(&back)) {
            prop_assert!(same_to_12_digits(x, y), "{} vs {}", x, y);
        }
    }

    #[test]
    fn multiplier_path_stays_in_the_power_band(rho in 0.5f64..4.0, beta in 0.05f64..2.0, delta in prop_oneof![0.6f64..0.95, 1.05f64..1.5]) {
        let mk = market();
        let spec = CrraSpec::new(rho, beta, delta).unwrap();
        let path = equilibrium_crra(&spec, &mk, &time_grid(&mk, 0.05).unwrap()).unwrap();
        for i in 0..path.len() {
            prop_assert!(path.m[i] > 0.0 && path.m[i] <= (1.0 / rho) * (1.0 + 1e-15));
            prop_assert!(ln_m_crra_gap(&spec, path.v[i].sqrt()).unwrap().is_finite());
        }
    }
}
