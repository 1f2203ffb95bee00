use std::fs::{self, File};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use shadow_core::experiments::{self, Problem, SweepConfig};
use shadow_core::hum::{HumConfig, LinearSystem};
use shadow_core::io::{write_binary, write_csv, write_plot_data};
use shadow_core::mesh::{inner_product, mean_value, Grid1D, TimeGrid};
use shadow_core::nonlinear::{check_hypotheses, sigmoid_family, HypothesisError, NonlinearityPair, Reaction};
use shadow_core::pde::{
    semigroup_checks, solve_shadow, CoefficientField, ControlField, InnerSolver, SpaceTime, Trajectory,
};
use shadow_core::semilinear::{fixed_point_control, linearized_coefficients, FixedPointConfig};
use shadow_core::theory::{
    default_lambda, eta0_1d, observability_constant, weight_inequality_checks, CarlemanWeights,
};
use thiserror::Error;

use crate::config::{Mode, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Hum,
    Semilinear,
    Shadow,
    Sweep,
    Weights,
    CheckHypotheses,
    Selftest,
}

impl Command {
    fn stem(self) -> &'static str {
        match self {
            Command::Hum => "hum",
            Command::Semilinear => "semilinear",
            Command::Shadow => "shadow",
            Command::Sweep => "sweep",
            Command::Weights => "weights",
            Command::CheckHypotheses => "check_hypotheses",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("solver failure: {0}")]
    Solver(#[from] shadow_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub struct Context {
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

/// JSON document for stdout plus whether every check in it passed.
pub struct Outcome {
    pub json: Value,
    pub passed: bool,
}

impl Outcome {
    fn ok(json: Value) -> Self {
        Self { json, passed: true }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, ctx: &Context) -> Result<Outcome, RunError> {
    fs::create_dir_all(&ctx.out)?;
    let env = Setup::new(cfg)?;
    let outcome = match cmd {
        Command::Hum => hum(cfg, &env, ctx)?,
        Command::Semilinear => semilinear(cfg, &env, ctx)?,
        Command::Shadow => shadow(cfg, &env, ctx)?,
        Command::Sweep => sweep(cfg, &env, ctx)?,
        Command::Weights => weights(cfg, &env)?,
        Command::CheckHypotheses => hypotheses(cfg, ctx)?,
        Command::Selftest => selftest(ctx)?,
    };
    let path = ctx.out.join(format!("{}.json", cmd.stem()));
    fs::write(path, serde_json::to_string_pretty(&outcome.json).expect("serializable") + "\n")?;
    Ok(outcome)
}

struct Setup {
    grid: Grid1D<f64>,
    tgrid: TimeGrid<f64>,
    y0: Vec<f64>,
    z0: Vec<f64>,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let grid = Grid1D::new(cfg.n_cells, cfg.omega).map_err(|e| RunError::Config(e.to_string()))?;
        let tgrid = TimeGrid::new(cfg.horizon, cfg.n_steps).map_err(|e| RunError::Config(e.to_string()))?;
        let (y0, z0) = cfg.initial_data(grid.centers());
        Ok(Self { grid, tgrid, y0, z0 })
    }
}

fn hum_config(cfg: &RunConfig) -> HumConfig<f64> {
    HumConfig {
        epsilon: cfg.epsilon,
        cg_tol: cfg.cg_tol,
        cg_max_iters: cfg.cg_max_iters,
        record_duality: true,
        jacobi: cfg.jacobi,
        method: cfg.method,
    }
}

fn fixed_point_config(cfg: &RunConfig) -> FixedPointConfig<f64> {
    FixedPointConfig {
        outer_tol: cfg.outer_tol,
        max_outer: cfg.max_outer,
        damping: cfg.damping,
        quadrature_nodes: cfg.quadrature_nodes,
        hum: hum_config(cfg),
        inner: InnerSolver::default(),
    }
}

fn dump(traj: &Trajectory<f64>, cfg: &RunConfig, dir: &Path, stem: &str) -> Result<(), RunError> {
    if cfg.formats.csv {
        write_csv(traj, File::create(dir.join(format!("{stem}.csv")))?)?;
    }
    if cfg.formats.binary {
        write_binary(traj, File::create(dir.join(format!("{stem}.shct")))?)?;
    }
    Ok(())
}

fn hum(cfg: &RunConfig, env: &Setup, ctx: &Context) -> Result<Outcome, RunError> {
    let coeffs = CoefficientField::constant(&env.tgrid, cfg.n_cells, cfg.coeffs);
    let system = LinearSystem::new(&env.grid, &env.tgrid, cfg.sigma, &coeffs);
    let hcfg = hum_config(cfg);
    let r = system.hum_solve(&env.y0, &env.z0, &hcfg)?;
    dump(&r.trajectory, cfg, &ctx.out, "trajectory")?;
    let mut out = json!({
        "sigma": cfg.sigma,
        "epsilon": cfg.epsilon,
        "cost": r.control_cost,
        "terminal_y": r.terminal_y_norm,
        "terminal_z": r.terminal_z_norm,
        "cg_iters": r.cg_iterations,
        "converged": r.converged,
        "duality_residual": r.duality_residual,
        "residual_history": r.residual_history,
    });
    if !cfg.epsilons.is_empty() {
        let sweep = system.epsilon_sweep(&env.y0, &env.z0, &cfg.epsilons, &hcfg)?;
        out["epsilon_sweep"] = serde_json::to_value(sweep).expect("serializable");
    }
    Ok(Outcome::ok(out))
}

fn semilinear(cfg: &RunConfig, env: &Setup, ctx: &Context) -> Result<Outcome, RunError> {
    let r = fixed_point_control(
        &env.grid,
        &env.tgrid,
        cfg.sigma,
        &cfg.pair(),
        &env.y0,
        &env.z0,
        &fixed_point_config(cfg),
    )?;
    dump(&r.trajectory, cfg, &ctx.out, "trajectory")?;
    Ok(Outcome::ok(json!({
        "sigma": cfg.sigma,
        "converged": r.converged,
        "outer_iterations": r.outer_iterations,
        "update_history": r.update_history,
        "terminal_y": r.terminal_y_norm,
        "terminal_z": r.terminal_z_norm,
        "cost": r.control_cost,
        "warnings": r.warnings,
    })))
}

fn problem(cfg: &RunConfig, env: &Setup) -> Problem {
    let mode = match cfg.mode {
        Mode::Linear => experiments::Mode::Linear { coeffs: cfg.coeffs },
        Mode::Semilinear => experiments::Mode::Semilinear { pair: cfg.pair() },
    };
    Problem {
        grid: env.grid.clone(),
        tgrid: env.tgrid.clone(),
        mode,
        y0: env.y0.clone(),
        z0: env.z0.clone(),
    }
}

fn sweep_config(cfg: &RunConfig, ctx: &Context) -> SweepConfig {
    SweepConfig {
        t0: cfg.t0_fraction * cfg.horizon,
        fixed_point: fixed_point_config(cfg),
        jobs: ctx.jobs,
    }
}

fn shadow(cfg: &RunConfig, env: &Setup, ctx: &Context) -> Result<Outcome, RunError> {
    let (control, traj): (ControlField<f64>, Trajectory<f64>) = match cfg.mode {
        Mode::Linear => {
            let coeffs = CoefficientField::constant(&env.tgrid, cfg.n_cells, cfg.coeffs);
            let r = LinearSystem::new(&env.grid, &env.tgrid, cfg.sigma, &coeffs).hum_solve(
                &env.y0,
                &env.z0,
                &hum_config(cfg),
            )?;
            (r.control, r.trajectory)
        }
        Mode::Semilinear => {
            let r = fixed_point_control(
                &env.grid,
                &env.tgrid,
                cfg.sigma,
                &cfg.pair(),
                &env.y0,
                &env.z0,
                &fixed_point_config(cfg),
            )?;
            (r.control, r.trajectory)
        }
    };
    let xi0 = mean_value(&env.z0, &env.grid)?;
    let sh = solve_shadow(&env.grid, &env.tgrid, &cfg.pair(), &control, &env.y0, xi0, InnerSolver::default())?;
    let t0 = cfg.t0_fraction * cfg.horizon;
    let gap = experiments::shadow_gap(&traj, &sh, t0)?;
    dump(&traj, cfg, &ctx.out, "trajectory")?;
    write_plot_data(
        ("t", "xi"),
        env.tgrid.nodes().into_iter().zip(sh.xi.iter().copied()),
        File::create(ctx.out.join("xi_vs_t.dat"))?,
    )?;
    Ok(Outcome::ok(json!({
        "sigma": cfg.sigma,
        "t0": t0,
        "shadow_gap": gap,
        "xi_initial": xi0,
        "xi_terminal": sh.xi.last(),
        "control_cost": control.l2_norm(&env.grid, &env.tgrid),
    })))
}

fn sweep(cfg: &RunConfig, env: &Setup, ctx: &Context) -> Result<Outcome, RunError> {
    let report = experiments::sigma_sweep(&problem(cfg, env), &cfg.sigma_list, &sweep_config(cfg, ctx))?;
    let mut w = csv::Writer::from_path(ctx.out.join("sweep.csv"))?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let ok = || report.rows.iter().filter(|r| r.is_ok());
    write_plot_data(
        ("sigma", "control_cost"),
        ok().map(|r| (r.sigma, r.control_cost)),
        File::create(ctx.out.join("cost_vs_sigma.dat"))?,
    )?;
    write_plot_data(
        ("sigma", "shadow_gap"),
        ok().map(|r| (r.sigma, r.shadow_gap)),
        File::create(ctx.out.join("gap_vs_sigma.dat"))?,
    )?;
    let passed = report.rows.iter().all(|r| r.is_ok());
    Ok(Outcome {
        json: serde_json::to_value(&report).expect("serializable"),
        passed,
    })
}

fn sup_norm_bounds(cfg: &RunConfig) -> [f64; 4] {
    match cfg.mode {
        Mode::Linear => cfg.coeffs.map(f64::abs),
        Mode::Semilinear => {
            let p = cfg.pair();
            let (lf, lg) = (p.lipschitz_f(), p.lipschitz_g());
            [lf, lf, lg, lg]
        }
    }
}

fn weights(cfg: &RunConfig, env: &Setup) -> Result<Outcome, RunError> {
    let (a, b) = cfg.omega;
    let quarter = 0.25 * (b - a);
    let interior = ((a + quarter).max(1e-3), (b - quarter).min(1.0 - 1e-3));
    let eta0 = eta0_1d(&env.grid, interior)?;
    let norms = sup_norm_bounds(cfg);
    let constants = observability_constant(cfg.horizon, norms)?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => default_lambda(eta0, cfg.horizon, norms, cfg.weight_samples)?,
    };
    let w = CarlemanWeights::new(eta0, lambda, cfg.horizon, norms)?;
    let report = weight_inequality_checks(&w, cfg.weight_samples)?;
    Ok(Outcome {
        passed: report.passed(),
        json: json!({
            "K": constants.k,
            "K_tilde": constants.k_tilde,
            "lambda": lambda,
            "s": w.s,
            "eta0": eta0,
            "report": report,
        }),
    })
}

fn hypotheses(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, RunError> {
    match check_hypotheses(&cfg.pair(), cfg.box_halfwidth, cfg.hypothesis_samples, cfg.deriv_tol, ctx.seed) {
        Ok(report) => Ok(Outcome {
            passed: report.passed(),
            json: serde_json::to_value(report).expect("serializable"),
        }),
        Err(HypothesisError::Violated { report, .. }) => Ok(Outcome {
            passed: false,
            json: serde_json::to_value(*report).expect("serializable"),
        }),
        Err(e @ HypothesisError::InvalidArgument(_)) => Err(RunError::Config(e.to_string())),
    }
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Duality, Gramian symmetry, Taylor identity and semigroup checks on small
/// random problems.
fn selftest(ctx: &Context) -> Result<Outcome, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let grid = Grid1D::new(40, (0.3, 0.7))?;
    let tgrid = TimeGrid::new(1.0, 80)?;
    let n = grid.n_cells();
    let mut checks = Vec::new();

    let coeffs = CoefficientField::constant(&tgrid, n, [0.5, 1.0, -1.0, 0.3]);
    let system = LinearSystem::new(&grid, &tgrid, 10.0, &coeffs);
    let (y0, z0) = (random_field(&mut rng, n), random_field(&mut rng, n));
    let r = system.hum_solve(&y0, &z0, &HumConfig::default())?;
    checks.push(Check::at_most("duality identity", r.duality_residual, 1e-10));

    let (a, b) = (random_field(&mut rng, 2 * n), random_field(&mut rng, 2 * n));
    let la = system.gramian_apply(&a[..n], &a[n..])?;
    let lb = system.gramian_apply(&b[..n], &b[n..])?;
    let pair_ip = |u: &[f64], v: (&[f64], &[f64])| -> shadow_core::Result<f64> {
        Ok(inner_product(&u[..n], v.0, &grid)? + inner_product(&u[n..], v.1, &grid)?)
    };
    let ab = pair_ip(&a, (&lb.0, &lb.1))?;
    let ba = pair_ip(&b, (&la.0, &la.1))?;
    let aa = pair_ip(&a, (&la.0, &la.1))?;
    let bb = pair_ip(&b, (&lb.0, &lb.1))?;
    let scale = (aa * bb).sqrt().max(f64::MIN_POSITIVE);
    checks.push(Check::at_most("gramian symmetry", (ab - ba).abs() / scale, 1e-10));
    checks.push(Check::at_most("gramian positivity", (-aa.min(bb)).max(0.0) / scale, 1e-10));

    let f = sigmoid_family(2.0)?;
    let pair = NonlinearityPair::new(f, Reaction::Zero);
    let ybar = SpaceTime::from_fn(3, n, |_, _| rng.gen_range(-2.0f64..2.0));
    let zbar = SpaceTime::from_fn(3, n, |_, _| rng.gen_range(-2.0f64..2.0));
    let lin = linearized_coefficients(&pair, &ybar, &zbar, 32)?;
    let mut taylor: f64 = 0.0;
    for m in 0..3 {
        let [a11, a12, _, _] = lin.at(m);
        for i in 0..n {
            let (y, z) = (ybar.slice(m)[i], zbar.slice(m)[i]);
            taylor = taylor.max((a11[i] * y + a12[i] * z - pair.f(y, z)).abs());
        }
    }
    checks.push(Check::at_most("taylor identity", taylor, 1e-8));

    let sg = semigroup_checks(&grid, &tgrid, 1.0)?;
    checks.push(Check::at_most("constant preservation", sg.constant_max_deviation, 1e-12));
    checks.push(Check::at_most("cosine decay exponent", sg.relative_error, 0.02));

    for c in &checks {
        println!("{:<24} {:>12.3e} <= {:<9.1e} {}", c.name, c.value, c.threshold, if c.passed { "PASS" } else { "FAIL" });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(Outcome {
        json: json!({ "seed": ctx.seed, "checks": checks, "passed": passed }),
        passed,
    })
}
