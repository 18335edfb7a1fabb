use gda_core::crra::{equilibrium_crra, CrraSpec};
use gda_core::equilibrium::{solve, SolverConfig};
use gda_core::market::{time_grid, MarketModel};
use gda_core::preference::{gda_value, GdaParams, OutcomeDistribution, Utility};
use gda_core::surface::GdaSurface;
use gda_core::verify::{
    certify, mc_gda_value, perturbation_test, simulate_wealth, CertifyOptions, McConfig, PerturbationScale,
    PerturbationSpec,
};
use proptest::prelude::*;

fn market() -> MarketModel {
    MarketModel::constant(vec![0.06], vec![vec![0.3]], 3.0).unwrap()
}

fn cfg(step: f64) -> SolverConfig {
    SolverConfig { grid_step: step, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn same_seed_same_estimate(seed in any::<u64>()) {
        let u = Utility::log();
        let p = GdaParams::new(0.5, 0.9).unwrap();
        let d = OutcomeDistribution::lognormal(0.0, 0.1).unwrap();
        let mc = McConfig { n_paths: 4096, n_steps: 1, seed };
        let a = mc_gda_value(&u, &p, &d, &mc).unwrap();
        let b = mc_gda_value(&u, &p, &d, &mc).unwrap();
        prop_assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        prop_assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
        let other = mc_gda_value(&u, &p, &d, &McConfig { seed: seed.wrapping_add(1), ..mc }).unwrap();
        prop_assert_ne!(a.estimate, other.estimate);
    }
}

#[test]
fn simulated_wealth_has_the_path_law() {
    let mk = market();
    let u = Utility::log();
    let p = GdaParams::new(0.5, 1.2).unwrap();
    let path = solve(&u, &p, &mk, &cfg(0.01)).unwrap();
    for n_steps in [1, 16] {
        let mc = McConfig { n_paths: 200_000, n_steps, seed: 11 };
        let w = simulate_wealth(&mk, &path, 0.0, &mc).unwrap();
        let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - (path.y[0] - 0.5 * path.v[0])).abs() <= 4.0 * se);
        // Sample variance of a Gaussian has relative s.e. sqrt(2/n).
        assert!((var / path.v[0] - 1.0).abs() <= 4.0 * (2.0 / n).sqrt());
        // Valuing the simulated terminal wealth reproduces g(v, y).
        let g = GdaSurface::new(&u, p).g(path.v[0], path.y[0]).unwrap();
        let sim = gda_value(&u, &p, &OutcomeDistribution::sample(w).unwrap()).unwrap();
        assert!((sim - g).abs() <= 2e-3, "{sim} vs {g}");
    }
}

#[test]
fn general_solver_output_is_certified() {
    let mk = market();
    let u = Utility::crra_mixture(1.0, 3.0, 0.5).unwrap();
    let p = GdaParams::new(0.5, 1.3).unwrap();
    let path = solve(&u, &p, &mk, &cfg(0.01)).unwrap();
    let rows = certify(&u, &p, &mk, &path, &CertifyOptions::default()).unwrap();
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r.report.pass), "{:?}", rows.iter().map(|r| r.report.first_order_coeff).collect::<Vec<_>>());
    let shrunk = path.scaled(&mk, 0.9).unwrap();
    let rows = certify(&u, &p, &mk, &shrunk, &CertifyOptions::default()).unwrap();
    assert!(rows.iter().any(|r| !r.report.pass));
}

#[test]
fn investing_is_rejected_under_disappointment_aversion() {
    let mk = market();
    let u = Utility::log();
    let p = GdaParams::new(0.5, 1.0).unwrap();
    let zero = solve(&u, &p, &mk, &cfg(0.01)).unwrap();
    let rows = certify(&u, &p, &mk, &zero, &CertifyOptions::default()).unwrap();
    assert!(rows.iter().all(|r| r.report.pass));
    assert!(rows.iter().any(|r| r.report.scale == PerturbationScale::SquareRoot));
    // The Merton path is no equilibrium once disappointment enters.
    let merton = equilibrium_crra(&CrraSpec::new(1.0, 0.0, 0.9).unwrap(), &mk, &time_grid(&mk, 0.01).unwrap()).unwrap();
    let rows = certify(&u, &p, &mk, &merton, &CertifyOptions::default()).unwrap();
    assert!(rows.iter().any(|r| !r.report.pass));
}

#[test]
fn spike_against_the_merton_path_only_adds_risk() {
    let mk = market();
    let u = Utility::log();
    let p = GdaParams::new(0.0, 1.0).unwrap();
    let path = equilibrium_crra(&CrraSpec::new(1.0, 0.0, 0.9).unwrap(), &mk, &time_grid(&mk, 0.01).unwrap()).unwrap();
    let r = perturbation_test(&u, &p, &mk, &path, &PerturbationSpec::new(1.0, vec![0.1], 3.0), 1e-6).unwrap();
    // At an equilibrium the linear terms cancel and Δ/ε → g_v |σᵀk|² < 0.
    assert!(r.pass && r.second_order < 0.0);
    assert!((r.first_order_coeff - r.second_order).abs() <= 1e-10);
    assert!((r.first_order_coeff - r.analytic_coeff).abs() <= 1e-10);
}
