//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line each and exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadow_core::experiments::{
    measure_m1, measure_m2_scaling, sigma_sweep, Mode, Problem, SweepConfig,
};
use shadow_core::hum::{duality_residual, HumConfig, LinearSystem};
use shadow_core::mesh::{inner_product, Grid1D, TimeGrid};
use shadow_core::nonlinear::{arctan_family, sigmoid_family, NonlinearityPair, Reaction};
use shadow_core::pde::{
    pair_norm, semigroup_checks, solve_adjoint, solve_adjoint_mismatched, solve_forward_linear,
    CoefficientField, ControlField, InnerSolver, SpaceTime,
};
use shadow_core::semilinear::{fixed_point_control, linearized_coefficients, FixedPointConfig};
use shadow_core::theory::{
    default_lambda, eta0_1d, observability_constant, weight_inequality_checks, CarlemanWeights,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_field(rng: &mut ChaCha8Rng, nt: usize, n: usize, scale: f64) -> SpaceTime<f64> {
    SpaceTime::from_fn(nt, n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

fn pair_ip(grid: &Grid1D<f64>, a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> f64 {
    inner_product(a.0, b.0, grid).unwrap() + inner_product(a.1, b.1, grid).unwrap()
}

fn scaled(v: Vec<f64>, s: f64) -> Vec<f64> {
    v.into_iter().map(|x| x * s).collect()
}

/// Initial data normalized to `‖(y⁰, z⁰)‖ = norm`.
fn data(grid: &Grid1D<f64>, y: impl Fn(f64) -> f64, z: impl Fn(f64) -> f64, norm: f64) -> (Vec<f64>, Vec<f64>) {
    let (y0, z0) = (grid.sample(y), grid.sample(z));
    let s = norm / pair_norm(&y0, &z0, grid);
    (scaled(y0, s), scaled(z0, s))
}

fn duality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = Grid1D::<f64>::new(50, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 100).unwrap();
    let (n, nt) = (50, 101);
    let (mut worst, mut weakest_fault) = (0.0f64, f64::INFINITY);
    for k in 0..20 {
        let sigma = if k % 2 == 0 { 1.0 } else { 100.0 };
        let coeffs = CoefficientField::from_fields(
            random_field(&mut rng, nt, n, 2.0),
            random_field(&mut rng, nt, n, 2.0),
            random_field(&mut rng, nt, n, 2.0),
            random_field(&mut rng, nt, n, 2.0),
        )
        .unwrap();
        let control = ControlField::masked(random_field(&mut rng, 100, n, 1.0), &grid).unwrap();
        let (y0, z0) = (random(&mut rng, n), random(&mut rng, n));
        let (pt, qt) = (random(&mut rng, n), random(&mut rng, n));
        let traj = solve_forward_linear(&grid, &tgrid, sigma, &coeffs, &control, &y0, &z0).unwrap();
        let adj = solve_adjoint(&grid, &tgrid, sigma, &coeffs, &pt, &qt, None).unwrap();
        worst = worst.max(duality_residual(&traj, &adj, &control).unwrap());
        let bad = solve_adjoint_mismatched(&grid, &tgrid, sigma, &coeffs, &pt, &qt).unwrap();
        weakest_fault = weakest_fault.min(duality_residual(&traj, &bad, &control).unwrap());
    }
    check(
        worst <= 1e-10 && weakest_fault > 1e-6,
        format!("max residual {worst:.2e} (<= 1e-10), min fault-injected residual {weakest_fault:.2e} (> 1e-6)"),
    )
}

fn gramian() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 50;
    let grid = Grid1D::<f64>::new(n, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 100).unwrap();
    let coeffs = CoefficientField::constant(&tgrid, n, [0.5, -1.0, 1.0, 0.3]);
    let sys = LinearSystem::new(&grid, &tgrid, 10.0, &coeffs);
    let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..10).map(|_| (random(&mut rng, n), random(&mut rng, n))).collect();
    let images: Vec<(Vec<f64>, Vec<f64>)> = probes.iter().map(|(a, b)| sys.gramian_apply(a, b).unwrap()).collect();
    let chi = grid.indicator();
    let (hx, dt) = (grid.spacing(), tgrid.dt());

    let mut sym: f64 = 0.0;
    let mut obs: f64 = 0.0;
    let mut gram = DMatrix::zeros(10, 10);
    let mut ritz_matrix = DMatrix::zeros(10, 10);
    for (i, (pi, li)) in probes.iter().zip(&images).enumerate() {
        for (j, (pj, lj)) in probes.iter().zip(&images).enumerate() {
            let ij = pair_ip(&grid, (&li.0, &li.1), (&pj.0, &pj.1));
            let ji = pair_ip(&grid, (&pi.0, &pi.1), (&lj.0, &lj.1));
            sym = sym.max((ij - ji).abs() / ij.abs().max(ji.abs()).max(f64::MIN_POSITIVE));
            ritz_matrix[(i, j)] = 0.5 * (ij + ji);
            gram[(i, j)] = pair_ip(&grid, (&pi.0, &pi.1), (&pj.0, &pj.1));
        }
        // observation norm from the adjoint field, summed over the steps
        let adj = sys.adjoint(&pi.0, &pi.1).unwrap();
        let observed: f64 = (0..tgrid.n_steps())
            .map(|m| adj.y.slice(m).iter().zip(chi).map(|(&p, &w)| w * p * p).sum::<f64>())
            .sum::<f64>()
            * hx
            * dt;
        let aa = ritz_matrix[(i, i)];
        obs = obs.max((aa - observed).abs() / aa);
    }
    // Rayleigh–Ritz on span(probes): eigenvalues of G^{-1/2} A G^{-1/2}
    let g_eig = gram.clone().symmetric_eigen();
    let inv_sqrt = &g_eig.eigenvectors
        * DMatrix::from_diagonal(&g_eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * g_eig.eigenvectors.transpose();
    let ritz = (&inv_sqrt * &ritz_matrix * &inv_sqrt).symmetric_eigen().eigenvalues;
    let largest = ritz.iter().copied().fold(0.0f64, f64::max);
    let most_negative = ritz.iter().copied().fold(0.0f64, f64::min);
    let neg = -most_negative / largest;
    check(
        sym <= 1e-10 && neg <= 1e-10 && obs <= 1e-10,
        format!("symmetry {sym:.2e}, negative Ritz {neg:.2e}, observation identity {obs:.2e} (all <= 1e-10)"),
    )
}

fn optimality() -> Verdict {
    let n = 50;
    let grid = Grid1D::<f64>::new(n, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 100).unwrap();
    let coeffs = CoefficientField::constant(&tgrid, n, [1.0; 4]);
    let sys = LinearSystem::new(&grid, &tgrid, 1.0, &coeffs);
    let (y0, z0) = data(&grid, |x| (PI * x).cos(), |x| 1.0 + x, 0.1);
    let dnorm = pair_norm(&y0, &z0, &grid);
    let mut details = Vec::new();
    let mut ok = true;
    for eps in [1e-4, 1e-6] {
        let cfg = HumConfig::default().with_epsilon(eps);
        let r = sys.hum_solve(&y0, &z0, &cfg).unwrap();
        let (yt, zt) = r.trajectory.terminal();
        let (pt, qt) = &r.adjoint_terminal;
        let dy: Vec<f64> = yt.iter().zip(pt).map(|(a, b)| a - eps * b).collect();
        let dz: Vec<f64> = zt.iter().zip(qt).map(|(a, b)| a - eps * b).collect();
        let defect = pair_norm(&dy, &dz, &grid);
        let bound = 10.0 * cfg.cg_tol * dnorm;
        ok &= defect <= bound;
        details.push(format!("eps {eps:.0e}: {defect:.2e} <= {bound:.2e}"));
    }
    check(ok, details.join(", "))
}

fn epsilon_scaling() -> Verdict {
    let n = 100;
    let grid = Grid1D::<f64>::new(n, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 200).unwrap();
    let coeffs = CoefficientField::constant(&tgrid, n, [1.0; 4]);
    let sys = LinearSystem::new(&grid, &tgrid, 1.0, &coeffs);
    let y0 = grid.sample(|x| 0.1 * (PI * x).cos());
    let z0 = grid.sample(|x| 0.1 * (1.0 + x));
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let sweep = sys.epsilon_sweep(&y0, &z0, &eps, &HumConfig::default()).unwrap();
    let tail_ratio = sweep.rows[3..].iter().map(|r| r.ratio).fold(0.0, f64::max);
    check(
        sweep.cost_spread_last3 < 0.10 && tail_ratio <= 0.5 && !sweep.ratio_growing_last3,
        format!(
            "cost spread {:.2}% (< 10%), max terminal/sqrt(eps) over last three {tail_ratio:.3} (<= 0.5), growing {}",
            100.0 * sweep.cost_spread_last3,
            sweep.ratio_growing_last3
        ),
    )
}

fn uniform_cost() -> Verdict {
    let grid = Grid1D::<f64>::new(100, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 400).unwrap();
    let problem = Problem {
        y0: grid.sample(|x| 0.1 * (PI * x).cos()),
        z0: grid.sample(|x| 0.1 * (1.0 + (PI * x).cos())),
        grid,
        tgrid,
        mode: Mode::Linear { coeffs: [1.0; 4] },
    };
    let r = sigma_sweep(&problem, &[1.0, 10.0, 100.0, 1000.0], &SweepConfig::new(1.0)).unwrap();
    let all_ok = r.rows.iter().all(|row| row.is_ok());
    check(
        all_ok && r.cost_ratio <= 1.5 && r.sigma_grad_z_ratio <= 2.0,
        format!(
            "cost max/min {:.4} (<= 1.5), sigma*|grad z|^2 max/first {:.3} (<= 2)",
            r.cost_ratio, r.sigma_grad_z_ratio
        ),
    )
}

fn semilinear_pair() -> NonlinearityPair<f64> {
    NonlinearityPair::new(sigmoid_family(2.0).unwrap(), arctan_family(1.0).unwrap())
}

fn semilinear_data(grid: &Grid1D<f64>) -> (Vec<f64>, Vec<f64>) {
    data(grid, |x| (PI * x).cos(), |x| 1.0 + 0.5 * (2.0 * PI * x).cos(), 0.1)
}

fn semilinear_control() -> Verdict {
    let grid = Grid1D::<f64>::new(100, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 200).unwrap();
    let (y0, z0) = semilinear_data(&grid);
    let cfg = FixedPointConfig {
        hum: HumConfig::default().with_epsilon(1e-8),
        ..FixedPointConfig::default()
    };
    let r = fixed_point_control(&grid, &tgrid, 1.0, &semilinear_pair(), &y0, &z0, &cfg).unwrap();
    let (ty, tz) = r.trajectory.terminal_norms();
    let terminal = ty.hypot(tz);
    let bound = 1e-3 * pair_norm(&y0, &z0, &grid);
    check(
        r.converged && r.outer_iterations <= 30 && terminal <= bound,
        format!(
            "converged {} in {} outer iterations, terminal {terminal:.2e} (<= {bound:.2e})",
            r.converged, r.outer_iterations
        ),
    )
}

fn shadow_gap_decay() -> Verdict {
    let grid = Grid1D::<f64>::new(100, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 200).unwrap();
    let (y0, z0) = semilinear_data(&grid);
    let problem = Problem {
        grid,
        tgrid,
        mode: Mode::Semilinear { pair: semilinear_pair() },
        y0,
        z0,
    };
    let r = sigma_sweep(&problem, &[1.0, 10.0, 100.0, 1000.0], &SweepConfig::new(1.0)).unwrap();
    let slope = r.gap_slope.unwrap_or(f64::NAN);
    let gaps: Vec<String> = r.rows.iter().map(|row| format!("{:.2e}", row.shadow_gap)).collect();
    check(
        r.gap_strictly_decreasing && (-1.3..=-0.4).contains(&slope) && r.xi_terminal_bound_holds,
        format!(
            "gaps [{}] decreasing {}, slope {slope:.3} (in [-1.3, -0.4]), xi(T) bound {}",
            gaps.join(", "),
            r.gap_strictly_decreasing,
            r.xi_terminal_bound_holds
        ),
    )
}

fn semigroup_laws() -> Verdict {
    let grid = Grid1D::<f64>::new(100, (0.3, 0.7)).unwrap();
    let tgrid = TimeGrid::new(1.0, 400).unwrap();
    let mut constant: f64 = 0.0;
    let mut decay: f64 = 0.0;
    for sigma in [1.0, 100.0] {
        let s = semigroup_checks(&grid, &tgrid, sigma).unwrap();
        constant = constant.max(s.constant_max_deviation);
        decay = decay.max(s.relative_error);
    }
    let bump = grid.sample(|x| (-(x - 0.3) * (x - 0.3) / 0.01).exp());
    let m1 = measure_m1(&grid, 1.0, &[1.0, 4.0, 16.0, 64.0, 256.0], &bump).unwrap();
    let m1_slope = m1.slope.unwrap_or(f64::NAN);
    let m1_ok = (m1_slope + 0.5).abs() <= 0.075
        && m1.sup_sqrt_t_m1.windows(2).all(|w| (w[1] / w[0] - 0.5).abs() <= 0.075);

    let short = TimeGrid::new(0.1, 200).unwrap();
    let (y0, z0) = semilinear_data(&grid);
    let m2 = measure_m2_scaling(
        &grid,
        &short,
        &[10.0, 100.0, 1000.0],
        &semilinear_pair(),
        &y0,
        &z0,
        InnerSolver::default(),
    )
    .unwrap();
    let m2_slope = m2.slope.unwrap_or(f64::NAN);
    check(
        constant <= 1e-12 && decay <= 0.02 && m1_ok && (-1.3..=-0.7).contains(&m2_slope),
        format!(
            "constant {constant:.1e} (<= 1e-12), decay error {:.2}% (<= 2%), M1 slope {m1_slope:.4} (-0.5 +- 15%), M2 slope {m2_slope:.3} (in [-1.3, -0.7])",
            100.0 * decay
        ),
    )
}

fn theory_formulas() -> Verdict {
    let zero = [0.0; 4];
    let c = observability_constant(1.0, zero).unwrap();
    let exact = c.k == 2.0 && c.k_tilde == 2.0;

    let base = observability_constant(1.0, [0.5; 4]).unwrap().k;
    let mut monotone = true;
    for i in 0..4 {
        let mut bigger = [0.5; 4];
        bigger[i] = 1.0;
        monotone &= observability_constant(1.0, bigger).unwrap().k > base;
    }
    // dK/dT = -1/T² + Σ‖a_ij‖: decreasing for short horizons, increasing for long ones
    let k = |t: f64| observability_constant(t, [0.5; 4]).unwrap().k;
    monotone &= k(0.2) < k(0.1) && k(2.0) > k(1.0);

    let grid = Grid1D::<f64>::new(100, (0.3, 0.7)).unwrap();
    let eta0 = eta0_1d(&grid, (0.4, 0.6)).unwrap();
    let norms = [1.0; 4];
    let lambda = default_lambda(eta0, 1.0, norms, 64).unwrap();
    let w = CarlemanWeights::new(eta0, lambda, 1.0, norms).unwrap();
    let good = weight_inequality_checks(&w, 64).unwrap();
    let w_bad = CarlemanWeights::new(eta0, 0.01, 1.0, norms).unwrap();
    let bad = weight_inequality_checks(&w_bad, 64).unwrap();
    check(
        exact && monotone && good.passed() && !bad.passed(),
        format!(
            "K = {}, K~ = {}, monotonicity {monotone}, violations at lambda {lambda}: {}, lambda 0.01 flagged {}",
            c.k,
            c.k_tilde,
            !good.passed(),
            !bad.passed()
        ),
    )
}

fn taylor_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pair = NonlinearityPair::new(sigmoid_family(2.0).unwrap(), Reaction::Zero);
    let ybar = random_field(&mut rng, 5, 60, 3.0);
    let zbar = random_field(&mut rng, 5, 60, 3.0);
    let mut errs = Vec::new();
    for n_quad in [8, 16, 32] {
        let c = linearized_coefficients(&pair, &ybar, &zbar, n_quad).unwrap();
        let (a11, a12) = (c.a11().as_slice(), c.a12().as_slice());
        let err = ybar
            .as_slice()
            .iter()
            .zip(zbar.as_slice())
            .enumerate()
            .map(|(k, (&y, &z))| (a11[k] * y + a12[k] * z - pair.f(y, z)).abs())
            .fold(0.0f64, f64::max);
        errs.push(err);
    }
    check(
        errs[2] <= 1e-8 && errs[1] <= errs[0] && errs[2] <= errs[1],
        format!("errors at 8/16/32 nodes {:.2e} / {:.2e} / {:.2e}", errs[0], errs[1], errs[2]),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("duality identity", duality),
        ("gramian structure", gramian),
        ("penalized optimality", optimality),
        ("epsilon scaling", epsilon_scaling),
        ("uniform-in-sigma cost", uniform_cost),
        ("semilinear null control", semilinear_control),
        ("shadow-gap decay", shadow_gap_decay),
        ("semigroup laws", semigroup_laws),
        ("theory formulas", theory_formulas),
        ("taylor identity", taylor_identity),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {:>2} {name:<24} PASS  {d}  [{secs:.1}s]", k + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {:>2} {name:<24} FAIL  {d}  [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
