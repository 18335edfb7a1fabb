use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gda_core::io::{parse_config, run, ExperimentConfig, Mode};
use gda_core::{ErrorCategory, GdaError};

/// Certainty equivalents and equilibrium portfolios under generalized
/// disappointment aversion.
#[derive(Parser, Debug)]
#[command(name = "gda", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the value surface and an indifference curve.
    Surface(Common),
    /// Solve for the equilibrium strategy with the general solver.
    Equilibrium(Common),
    /// Solve a power-utility model with the semi-analytic solver.
    Crra(Common),
    /// Solve with risk aversion rising linearly in time.
    Hdra {
        #[command(flatten)]
        common: Common,
        /// Slope of rho(t) = rho + alpha t.
        #[arg(long, env = "GDA_ALPHA")]
        alpha: Option<f64>,
    },
    /// Certify a strategy with the spike-perturbation test.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Strategy CSV to check; solved afresh when omitted.
        #[arg(long, env = "GDA_INPUT")]
        input: Option<PathBuf>,
    },
    /// Write the CSV series behind one of the standard figures.
    Figures {
        #[command(flatten)]
        common: Common,
        /// fig1, fig2, fig3a, fig3b, fig4a, fig4b, fig5a or fig5b.
        #[arg(long, env = "GDA_PRESET")]
        preset: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long, env = "GDA_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "GDA_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, env = "GDA_SEED")]
    seed: Option<u64>,
    /// Picard tolerance; in verify mode, the certification tolerance.
    #[arg(long, env = "GDA_TOL")]
    tol: Option<f64>,
    #[arg(long, env = "GDA_GRID_STEP")]
    grid_step: Option<f64>,
}

fn load(common: &Common) -> Result<ExperimentConfig, GdaError> {
    let mut cfg = match &common.config {
        Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(h) = common.grid_step {
        cfg.solver.grid_step = h;
    }
    Ok(cfg)
}

fn exit_code(e: &GdaError) -> u8 {
    match e.category() {
        ErrorCategory::Validation => 2,
        ErrorCategory::Solver => 3,
        ErrorCategory::Io => 4,
    }
}

fn execute(cli: Cli) -> Result<Option<bool>, GdaError> {
    let (mode, common) = match &cli.command {
        Command::Surface(c) => (Mode::Surface, c),
        Command::Equilibrium(c) => (Mode::Equilibrium, c),
        Command::Crra(c) => (Mode::Crra, c),
        Command::Hdra { common, .. } => (Mode::Hdra, common),
        Command::Verify { common, .. } => (Mode::Verify, common),
        Command::Figures { common, .. } => (Mode::Figures, common),
    };
    let mut cfg = load(common)?;
    if let Some(t) = common.tol {
        if mode == Mode::Verify {
            cfg.verify.tol = t;
        } else {
            cfg.solver.picard_tol = t;
        }
    }
    match &cli.command {
        Command::Hdra { alpha: Some(a), .. } => cfg.hdra.alpha = *a,
        Command::Verify { input: Some(p), .. } => cfg.verify.input = Some(p.clone()),
        Command::Figures { preset: Some(p), .. } => cfg.preset = Some(p.clone()),
        _ => {}
    }
    if let Some(m) = cfg.mode {
        if m != mode {
            log::warn!("config file says mode '{}', running '{}'", m.as_str(), mode.as_str());
        }
    }
    let outcome = run(&cfg, mode, &common.out)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    println!("{}", outcome.manifest.display());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Some(false)) => {
            eprintln!("verification failed; see report.csv");
            ExitCode::from(1)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
