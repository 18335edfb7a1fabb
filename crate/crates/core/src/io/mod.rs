//! Configuration, CSV artifacts, presets and the experiment runner.

pub mod config;
pub mod csv_io;
pub mod presets;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::crra::{equilibrium_crra, equilibrium_hdra, CrraSpec, HdraSpec, RhoSchedule};
use crate::equilibrium::solve;
use crate::error::{GdaError, Result};
use crate::market::{time_grid, MarketModel, StrategyPath};
use crate::numerics::quadrature::DEFAULT_ORDER;
use crate::preference::{GdaParams, Utility};
use crate::surface::{GdaSurface, SurfacePoint, SMALL_X};
use crate::verify::{certify, simulate_wealth, CertifyOptions, McConfig, MC_BATCHES};

pub use config::{parse_config, ExperimentConfig, Mode};
pub use csv_io::{
    format_number, read_strategy_csv, write_curve_csv, write_report_csv, write_series_csv,
    write_strategy_csv, write_surface_csv,
};
pub use presets::{Preset, PresetKind, SeriesSpec};

/// Files written by [`run`] and the verdict of a verification run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// `Some(all passed)` in verify mode.
    pub passed: Option<bool>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    files: Vec<PathBuf>,
    extra: serde_json::Map<String, serde_json::Value>,
}

impl Ctx<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.out.join(name);
        let w = create(&p)?;
        self.files.push(p);
        Ok(w)
    }

    fn write_path(&mut self, name: &str, path: &StrategyPath) -> Result<()> {
        let w = self.file(name)?;
        write_strategy_csv(w, path)?;
        if let Some(d) = &path.diagnostics {
            self.extra.insert("diagnostics".into(), serde_json::to_value(d).unwrap_or_default());
        }
        Ok(())
    }
}

fn params(cfg: &ExperimentConfig) -> Result<GdaParams> {
    GdaParams::new(cfg.gda.beta, cfg.gda.delta)
}

fn power_spec(u: &Utility, p: &GdaParams) -> Result<CrraSpec> {
    let rho = u.crra_rho().ok_or_else(|| GdaError::Config("a power utility is required".into()))?;
    CrraSpec::new(rho, p.beta, p.delta)
}

/// Surface point, with `NA` derivatives where the surface has none.
fn surface_point(s: &GdaSurface, x: f64, y: f64) -> Result<SurfacePoint> {
    match s.point(x, y) {
        Err(GdaError::BoundaryNotDifferentiable(_)) => {
            let g = s.g(x * x, y)?;
            let nan = f64::NAN;
            Ok(SurfacePoint { x, y, g, h: s.solve_h(x, y)?, h_x: nan, h_y: nan, g_v: nan, g_y: nan, m: nan })
        }
        other => other,
    }
}

fn run_surface(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let u = cfg.utility.build()?;
    let p = params(cfg)?;
    let s = GdaSurface::new(&u, p);
    let sc = &cfg.surface;
    let v_grid = linspace(0.0, sc.v_max, sc.n_v);
    let mut pts = Vec::with_capacity(sc.n_v * sc.n_y);
    for &y in &linspace(sc.y_min, sc.y_max, sc.n_y) {
        for &v in &v_grid {
            pts.push(surface_point(&s, v.sqrt(), y)?);
        }
    }
    write_surface_csv(ctx.file("surface.csv")?, &pts)?;
    let level = match sc.level {
        Some(l) => l,
        None => s.g(0.0, 0.0)?,
    };
    let curve = s.indifference_curve(level, &v_grid)?;
    write_curve_csv(ctx.file("curve.csv")?, &curve)?;
    ctx.extra.insert("curve_level".into(), json!(level));
    Ok(())
}

fn hdra_spec(u: &Utility, alpha: f64) -> Result<HdraSpec> {
    let rho = u.crra_rho().ok_or_else(|| GdaError::Config("a power utility is required".into()))?;
    HdraSpec::affine(alpha)?;
    Ok(HdraSpec { rho: RhoSchedule::Affine { intercept: rho, slope: alpha } })
}

fn solve_mode(cfg: &ExperimentConfig, mode: Mode, market: &MarketModel) -> Result<StrategyPath> {
    let u = cfg.utility.build()?;
    let p = params(cfg)?;
    match mode {
        Mode::Crra => equilibrium_crra(&power_spec(&u, &p)?, market, &time_grid(market, cfg.solver.grid_step)?),
        Mode::Hdra => equilibrium_hdra(&p, &hdra_spec(&u, cfg.hdra.alpha)?, market, &cfg.solver),
        _ => solve(&u, &p, market, &cfg.solver),
    }
}

fn run_verify(ctx: &mut Ctx) -> Result<bool> {
    let cfg = ctx.cfg;
    let market = cfg.market.build()?;
    let u = cfg.utility.build()?;
    let p = params(cfg)?;
    let path = match &cfg.verify.input {
        Some(input) => {
            let mut path = read_strategy_csv(File::open(input)?)?;
            if path.dim() != market.dim() {
                return Err(GdaError::Config("strategy file dimension differs from the market".into()));
            }
            if *path.grid.last().unwrap() >= market.horizon() {
                return Err(GdaError::Config("strategy file runs past the market horizon".into()));
            }
            path.horizon = market.horizon();
            path
        }
        None => solve(&u, &p, &market, &cfg.solver)?,
    };
    let opts = CertifyOptions { k_scale: cfg.verify.k_scale, tol: cfg.verify.tol, seed: cfg.seed };
    let rows = certify(&u, &p, &market, &path, &opts)?;
    write_report_csv(ctx.file("report.csv")?, &rows)?;
    let mut passed = rows.iter().all(|r| r.report.pass);
    ctx.extra.insert("perturbation_rows".into(), json!(rows.len()));
    ctx.extra.insert("perturbation_failures".into(), json!(rows.iter().filter(|r| !r.report.pass).count()));
    if cfg.verify.monte_carlo {
        // The simulated log-return must match the path's own (v, y) at t = 0.
        let mc = McConfig { n_paths: cfg.verify.n_paths, n_steps: 16, seed: cfg.seed };
        let w = simulate_wealth(&market, &path, 0.0, &mc)?;
        let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = path.y[0] - 0.5 * path.v[0];
        let se = (var / n).sqrt();
        let ok = (mean - expected).abs() <= 4.0 * se + 1e-12;
        passed &= ok;
        ctx.extra.insert(
            "wealth_check".into(),
            json!({ "mean_log_return": mean, "expected": expected, "std_err": se, "variance": var, "v0": path.v[0], "pass": ok }),
        );
    }
    Ok(passed)
}

fn run_figures(ctx: &mut Ctx, preset: Preset) -> Result<()> {
    let cfg = ctx.cfg;
    let market = Preset::market();
    let u = Utility::crra(presets::PRESET_RHO)?;
    for spec in preset.series() {
        let p = GdaParams::new(spec.beta, spec.delta)?;
        let name = format!("{}_{}.csv", preset.name(), spec.label());
        match preset.kind() {
            PresetKind::Curves => {
                let s = GdaSurface::new(&u, p);
                let v_grid = linspace(0.0, presets::CURVE_V_MAX, presets::CURVE_POINTS);
                let curve = s.indifference_curve(s.g(0.0, 0.0)?, &v_grid)?;
                write_curve_csv(ctx.file(&name)?, &curve)?;
            }
            PresetKind::Strategies => {
                let path = match spec.alpha {
                    Some(alpha) => equilibrium_hdra(&p, &hdra_spec(&u, alpha)?, &market, &cfg.solver)?,
                    None => equilibrium_crra(
                        &CrraSpec::new(presets::PRESET_RHO, spec.beta, spec.delta)?,
                        &market,
                        &time_grid(&market, cfg.solver.grid_step)?,
                    )?,
                };
                write_series_csv(ctx.file(&name)?, &spec.label(), &path)?;
            }
        }
    }
    Ok(())
}

/// Runs one experiment, writing CSV files and `manifest.json` into `out`.
pub fn run(cfg: &ExperimentConfig, mode: Mode, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    cfg.validate(mode)?;
    fs::create_dir_all(out)?;
    let mut ctx = Ctx { cfg, out, files: Vec::new(), extra: serde_json::Map::new() };
    let mut passed = None;
    match mode {
        Mode::Surface => run_surface(&mut ctx)?,
        Mode::Equilibrium | Mode::Crra | Mode::Hdra => {
            let market = cfg.market.build()?;
            let path = solve_mode(cfg, mode, &market)?;
            ctx.write_path("strategy.csv", &path)?;
        }
        Mode::Verify => passed = Some(run_verify(&mut ctx)?),
        Mode::Figures => {
            let preset: Preset = cfg.preset.as_deref().unwrap_or_default().parse()?;
            run_figures(&mut ctx, preset)?;
        }
    }
    let manifest = out.join("manifest.json");
    let doc = json!({
        "tool": "gda",
        "version": env!("CARGO_PKG_VERSION"),
        "mode": mode.as_str(),
        "seed": cfg.seed,
        "config": cfg,
        "tolerances": {
            "picard_tol": cfg.solver.picard_tol,
            "grid_step": cfg.solver.grid_step,
            "root_tol": 1e-15,
            "quadrature_rel_tol": 1e-14,
            "gauss_hermite_order": DEFAULT_ORDER,
            "small_x_crossover": SMALL_X,
            "verify_tol": cfg.verify.tol,
            "mc_batches": MC_BATCHES,
        },
        "outputs": ctx.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "passed": passed,
        "details": ctx.extra,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| GdaError::Parse(e.to_string()))?;
    fs::write(&manifest, text + "\n")?;
    Ok(RunOutcome { files: ctx.files, manifest, passed })
}
