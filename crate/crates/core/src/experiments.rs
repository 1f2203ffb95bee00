//! Desk-scale studies of the σ → ∞ behaviour: control cost and energy
//! across a σ-sweep, the gap between `z^σ` and the shadow variable `ξ`, and
//! the semigroup decay quantities `M₁` and `M₂`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hum::{HumConfig, LinearSystem};
use crate::mesh::{l2_norm, mean_value, Grid1D, NeumannSpectrum, TimeGrid};
use crate::nonlinear::{NonlinearityPair, Reaction};
use crate::pde::{
    energy_functional, pair_norm, solve_forward_semilinear, solve_shadow, CoefficientField,
    ControlField, InnerSolver, ShadowTrajectory, Trajectory,
};
use crate::semilinear::{fixed_point_control, FixedPointConfig};

/// Upper bound on `σπ²dt` in the semigroup-sensitive measurements.
pub const SEMIGROUP_RESOLUTION: f64 = 0.25;
/// Sampling of `√t M₁(t)` in units of `1/(σπ²)`.
const M1_SAMPLING: f64 = 0.025;

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Constant coefficients `[a, b, c, d]`, controlled by penalized HUM.
    Linear { coeffs: [f64; 4] },
    /// Reactions `(f, g)`, controlled by the fixed-point loop.
    Semilinear { pair: NonlinearityPair<f64> },
}

impl Mode {
    /// Reactions seen by the shadow system.
    pub fn pair(&self) -> NonlinearityPair<f64> {
        match self {
            Mode::Linear { coeffs: [a, b, c, d] } => NonlinearityPair::new(
                Reaction::Linear { dy: *a, dz: *b },
                Reaction::Linear { dy: *c, dz: *d },
            ),
            Mode::Semilinear { pair } => *pair,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub grid: Grid1D<f64>,
    pub tgrid: TimeGrid<f64>,
    pub mode: Mode,
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
}

impl Problem {
    pub fn data_norm(&self) -> f64 {
        pair_norm(&self.y0, &self.z0, &self.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Start of the gap window `[t0, T]`.
    pub t0: f64,
    pub fixed_point: FixedPointConfig<f64>,
    /// Worker threads for the per-σ runs; 0 lets rayon decide.
    pub jobs: usize,
}

impl SweepConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            t0: 0.1 * horizon,
            fixed_point: FixedPointConfig::default(),
            jobs: 0,
        }
    }

    pub fn hum(&self) -> &HumConfig<f64> {
        &self.fixed_point.hum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub control_cost: f64,
    pub terminal_y: f64,
    pub terminal_z: f64,
    pub sigma_grad_z: f64,
    pub shadow_gap: f64,
    /// `ξ(T)` of the shadow system under the same control.
    pub xi_terminal: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Set when the run for this σ failed; numeric fields are then NaN.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(sigma: f64, err: Error) -> Self {
        Self {
            sigma,
            control_cost: f64::NAN,
            terminal_y: f64::NAN,
            terminal_z: f64::NAN,
            sigma_grad_z: f64::NAN,
            shadow_gap: f64::NAN,
            xi_terminal: f64::NAN,
            outer_iterations: 0,
            converged: false,
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub t0: f64,
    pub data_norm: f64,
    /// Log-log slope of the shadow gap against σ.
    pub gap_slope: Option<f64>,
    pub gap_strictly_decreasing: bool,
    /// `max / min` of the control cost over successful rows.
    pub cost_ratio: f64,
    /// `max σ∬|∇z|²` over the value at the smallest σ.
    pub sigma_grad_z_ratio: f64,
    /// Relative `L²` distance between controls of consecutive σ.
    pub control_increments: Vec<f64>,
    /// `|ξ(T)| ≤ max(1e-3 ‖(y⁰, z⁰)‖, 2 gap)` at the largest σ.
    pub xi_terminal_bound_holds: bool,
}

struct SigmaRun {
    row: SweepRow,
    control: ControlField<f64>,
}

fn run_sigma(problem: &Problem, sigma: f64, cfg: &SweepConfig) -> Result<SigmaRun> {
    let Problem {
        grid, tgrid, y0, z0, ..
    } = problem;
    let inner = cfg.fixed_point.inner;
    let (control, traj, outer, converged) = match &problem.mode {
        Mode::Linear { coeffs } => {
            let c = CoefficientField::constant(tgrid, grid.n_cells(), *coeffs);
            let r = LinearSystem::new(grid, tgrid, sigma, &c).hum_solve(y0, z0, cfg.hum())?;
            (r.control, r.trajectory, 1, r.converged)
        }
        Mode::Semilinear { pair } => {
            let r = fixed_point_control(grid, tgrid, sigma, pair, y0, z0, &cfg.fixed_point)?;
            (r.control, r.trajectory, r.outer_iterations, r.converged)
        }
    };
    let energy = energy_functional(&traj);
    let xi0 = mean_value(z0, grid)?;
    let shadow = solve_shadow(grid, tgrid, &problem.mode.pair(), &control, y0, xi0, inner)?;
    let gap = shadow_gap(&traj, &shadow, cfg.t0)?;
    Ok(SigmaRun {
        row: SweepRow {
            sigma,
            control_cost: control.l2_norm(grid, tgrid),
            terminal_y: energy.terminal_y,
            terminal_z: energy.terminal_z,
            sigma_grad_z: energy.sigma_grad_z,
            shadow_gap: gap,
            xi_terminal: *shadow.xi.last().expect("non-empty shadow path"),
            outer_iterations: outer,
            converged,
            error: None,
        },
        control,
    })
}

/// Controls the problem at every σ, then runs the shadow system under the
/// same control and records the gap. Per-σ failures are kept in the rows.
pub fn sigma_sweep(problem: &Problem, sigmas: &[f64], cfg: &SweepConfig) -> Result<SweepReport> {
    if sigmas.is_empty() || sigmas.iter().any(|&s| !(s >= 1.0)) {
        return Err(Error::InvalidArgument("sigmas must be non-empty and >= 1".into()));
    }
    if sigmas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("sigmas must be strictly increasing".into()));
    }
    let horizon = problem.tgrid.horizon();
    if !(cfg.t0 > 0.0 && cfg.t0 < horizon) {
        return Err(Error::InvalidArgument(format!(
            "t0 must lie in (0, {horizon}), got {}",
            cfg.t0
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut runs: Vec<(f64, Result<SigmaRun>)> = pool.install(|| {
        sigmas
            .par_iter()
            .map(|&s| (s, run_sigma(problem, s, cfg)))
            .collect()
    });
    runs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rows = Vec::with_capacity(runs.len());
    let mut controls = Vec::new();
    for (sigma, run) in runs {
        match run {
            Ok(r) => {
                rows.push(r.row);
                controls.push(Some(r.control));
            }
            Err(e) => {
                rows.push(SweepRow::failed(sigma, e));
                controls.push(None);
            }
        }
    }
    Ok(summarize(problem, cfg.t0, rows, &controls))
}

fn summarize(
    problem: &Problem,
    t0: f64,
    rows: Vec<SweepRow>,
    controls: &[Option<ControlField<f64>>],
) -> SweepReport {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let gaps: Vec<(f64, f64)> = ok
        .iter()
        .filter(|r| r.shadow_gap > 0.0)
        .map(|r| (r.sigma, r.shadow_gap))
        .collect();
    let gap_slope = if gaps.len() >= 3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = gaps.into_iter().unzip();
        fit_decay_rate(&xs, &ys).ok()
    } else {
        None
    };
    let all_ok = ok.len() == rows.len();
    let gap_strictly_decreasing = all_ok && rows.windows(2).all(|w| w[1].shadow_gap < w[0].shadow_gap);
    let (lo, hi) = ok.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r.control_cost), hi.max(r.control_cost))
    });
    let cost_ratio = if lo > 0.0 { hi / lo } else { f64::NAN };
    let sigma_grad_z_ratio = match ok.first() {
        Some(first) if first.sigma_grad_z > 0.0 => {
            ok.iter().map(|r| r.sigma_grad_z).fold(0.0, f64::max) / first.sigma_grad_z
        }
        _ => f64::NAN,
    };
    let (grid, tgrid) = (&problem.grid, &problem.tgrid);
    let control_increments = controls
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => {
                let scale = a.l2_norm(grid, tgrid).max(b.l2_norm(grid, tgrid));
                if scale > 0.0 {
                    a.distance(b, grid, tgrid) / scale
                } else {
                    0.0
                }
            }
            _ => f64::NAN,
        })
        .collect();
    let data_norm = problem.data_norm();
    let xi_terminal_bound_holds = rows.last().is_some_and(|r| {
        r.is_ok() && r.xi_terminal.abs() <= (1e-3 * data_norm).max(2.0 * r.shadow_gap)
    });
    SweepReport {
        rows,
        t0,
        data_norm,
        gap_slope,
        gap_strictly_decreasing,
        cost_ratio,
        sigma_grad_z_ratio,
        control_increments,
        xi_terminal_bound_holds,
    }
}

/// `max_{t_m ≥ t0} ‖z^σ(t_m) - ξ(t_m)‖_{L²(Ω)}`.
pub fn shadow_gap(traj: &Trajectory<f64>, shadow: &ShadowTrajectory<f64>, t0: f64) -> Result<f64> {
    if traj.tgrid != shadow.tgrid || traj.grid.n_cells() != shadow.grid.n_cells() {
        return Err(Error::InvalidArgument(
            "trajectory and shadow trajectory live on different grids".into(),
        ));
    }
    let horizon = traj.tgrid.horizon();
    if !(t0 > 0.0 && t0 < horizon) {
        return Err(Error::InvalidArgument(format!("t0 must lie in (0, {horizon})")));
    }
    let mut gap: f64 = 0.0;
    for m in 0..traj.n_times() {
        if traj.tgrid.node(m) < t0 * (1.0 - 1e-12) {
            continue;
        }
        let xi = shadow.xi[m];
        let d: Vec<f64> = traj.z.slice(m).iter().map(|&z| z - xi).collect();
        gap = gap.max(l2_norm(&d, &traj.grid));
    }
    Ok(gap)
}

/// Least-squares slope of `ln ys` against `ln xs`.
pub fn fit_decay_rate(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidArgument(
            "need at least 3 paired samples".into(),
        ));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("samples must be positive and finite".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    Ok(crate::pde::linear_slope(&lx, &ly))
}

/// `M₁(t) = ‖e^{tσΔ}(z⁰ - mean z⁰)‖`, applied exactly in the Neumann eigenbasis.
#[derive(Debug, Clone)]
pub struct M1Probe {
    spectrum: NeumannSpectrum<f64>,
    coeffs: Vec<f64>,
}

impl M1Probe {
    pub fn new(grid: &Grid1D<f64>, z0: &[f64]) -> Result<Self> {
        grid.check_len(z0)?;
        let spectrum = NeumannSpectrum::new(grid);
        let mut coeffs = spectrum.project(z0);
        coeffs[0] = 0.0;
        Ok(Self { spectrum, coeffs })
    }

    pub fn value(&self, sigma: f64, t: f64) -> f64 {
        let c: Vec<f64> = self
            .coeffs
            .iter()
            .zip(self.spectrum.eigenvalues())
            .map(|(&c, &lam)| c * (-lam * sigma * t).exp())
            .collect();
        self.spectrum.norm_of(&c)
    }

    pub fn lambda1(&self) -> f64 {
        self.spectrum.lambda1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct M1Record {
    pub sigmas: Vec<f64>,
    /// `sup_{0<t≤T} √t M₁(t)` per σ.
    pub sup_sqrt_t_m1: Vec<f64>,
    /// Log-log slope against σ, expected near `-1/2`; `None` below 3 σ values.
    pub slope: Option<f64>,
}

/// Samples `√t M₁(t)` on `(0, T]` with spacing at most `0.025/(σπ²)`.
pub fn measure_m1(grid: &Grid1D<f64>, horizon: f64, sigmas: &[f64], z0: &[f64]) -> Result<M1Record> {
    if sigmas.iter().any(|&s| !(s >= 1.0)) {
        return Err(Error::InvalidArgument("sigmas must be >= 1".into()));
    }
    let probe = M1Probe::new(grid, z0)?;
    let pi2 = std::f64::consts::PI.powi(2);
    let sups: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            let samples = ((horizon * sigma * pi2) / M1_SAMPLING).ceil().max(1.0) as usize;
            (1..=samples)
                .map(|j| {
                    let t = horizon * j as f64 / samples as f64;
                    t.sqrt() * probe.value(sigma, t)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let slope = if sigmas.len() >= 3 && sups.iter().all(|&v| v > 0.0) {
        Some(fit_decay_rate(sigmas, &sups)?)
    } else {
        None
    };
    Ok(M1Record {
        sigmas: sigmas.to_vec(),
        sup_sqrt_t_m1: sups,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct M2Record {
    pub sigmas: Vec<f64>,
    /// `sup_t ‖∫₀ᵗ e^{(t-s)σΔ} R(s) ds‖`.
    pub sup_m2: Vec<f64>,
    /// `sup_t ‖R(t)‖`.
    pub sup_r: Vec<f64>,
    /// Smallest nonzero eigenvalue of the discrete Neumann Laplacian.
    pub lambda1: f64,
    pub slope: Option<f64>,
    pub steps: Vec<usize>,
}

/// Duhamel term driven by `R = g(y^σ, z^σ) - mean g(y^σ, z^σ)` of the
/// uncontrolled semilinear flow. The flow runs with `σπ²dt ≤ 0.25`; the
/// Duhamel integral uses the exponential integrator in the eigenbasis with
/// `R` frozen at the right end of each step.
pub fn measure_m2_scaling(
    grid: &Grid1D<f64>,
    tgrid: &TimeGrid<f64>,
    sigmas: &[f64],
    pair: &NonlinearityPair<f64>,
    y0: &[f64],
    z0: &[f64],
    inner: InnerSolver<f64>,
) -> Result<M2Record> {
    let spectrum = NeumannSpectrum::new(grid);
    let pi2 = std::f64::consts::PI.powi(2);
    let mut sup_m2 = Vec::with_capacity(sigmas.len());
    let mut sup_r = Vec::with_capacity(sigmas.len());
    let mut steps = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let fine = tgrid.refined(SEMIGROUP_RESOLUTION / (sigma * pi2));
        let zero = ControlField::zeros(&fine, grid);
        let traj = solve_forward_semilinear(grid, &fine, sigma, pair, &zero, y0, z0, inner)?;
        let dt = fine.dt();
        let decay: Vec<f64> = spectrum
            .eigenvalues()
            .iter()
            .map(|&lam| (-sigma * lam * dt).exp())
            .collect();
        let gain: Vec<f64> = spectrum
            .eigenvalues()
            .iter()
            .zip(&decay)
            .map(|(&lam, &e)| if lam > 0.0 { -(e - 1.0) / (sigma * lam) } else { 0.0 })
            .collect();
        let mut c = vec![0.0; grid.n_cells()];
        let (mut m2, mut rmax) = (0.0f64, 0.0f64);
        for m in 1..traj.n_times() {
            let r: Vec<f64> = traj
                .y
                .slice(m)
                .iter()
                .zip(traj.z.slice(m))
                .map(|(&y, &z)| pair.g(y, z))
                .collect();
            let mean = mean_value(&r, grid)?;
            let r: Vec<f64> = r.into_iter().map(|v| v - mean).collect();
            rmax = rmax.max(l2_norm(&r, grid));
            let rk = spectrum.project(&r);
            for k in 1..c.len() {
                c[k] = decay[k] * c[k] + gain[k] * rk[k];
            }
            m2 = m2.max(spectrum.norm_of(&c));
        }
        sup_m2.push(m2);
        sup_r.push(rmax);
        steps.push(fine.n_steps());
    }
    let slope = if sigmas.len() >= 3 && sup_m2.iter().all(|&v| v > 0.0) {
        Some(fit_decay_rate(sigmas, &sup_m2)?)
    } else {
        None
    };
    Ok(M2Record {
        sigmas: sigmas.to_vec(),
        sup_m2,
        sup_r,
        lambda1: spectrum.lambda1(),
        slope,
        steps,
    })
}
