use serde::Serialize;

use super::{solve_forward_linear, CoefficientField, ControlField, Trajectory};
use crate::error::Result;
use crate::mesh::{l2_norm, Grid1D, TimeGrid};
use crate::scalar::Scalar;

/// Discrete energy norms of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub norm_y_l2h1: f64,
    pub norm_z_l2h1: f64,
    /// `σ ∬ |∇z|²`.
    pub sigma_grad_z: f64,
    pub terminal_y: f64,
    pub terminal_z: f64,
}

/// `∫ |∇u|²` with face-centered differences; boundary faces carry zero flux.
pub(crate) fn grad_sq<S: Scalar>(u: &[S], grid: &Grid1D<S>) -> S {
    let h = grid.spacing();
    u.windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / h;
            d * d
        })
        .sum::<S>()
        * h
}

/// `L²(0,T; H¹)` norms and `σ∬|∇z|²`.
///
/// Time integrals use the right-endpoint rule over `t_1, …, t_M`, the
/// quadrature under which backward Euler satisfies its discrete energy
/// identity; this keeps `σ∬|∇z|²` bounded by `½‖z⁰‖²` for the pure heat flow
/// at every `σ·dt`.
pub fn energy_functional<S: Scalar>(traj: &Trajectory<S>) -> EnergyReport {
    let g = &traj.grid;
    let dt = traj.tgrid.dt();
    let mut yy = S::zero();
    let mut zz = S::zero();
    let mut gz = S::zero();
    for m in 1..traj.n_times() {
        let y = traj.y.slice(m);
        let z = traj.z.slice(m);
        let ny = l2_norm(y, g);
        let nz = l2_norm(z, g);
        let gy2 = grad_sq(y, g);
        let gz2 = grad_sq(z, g);
        yy = yy + dt * (ny * ny + gy2);
        zz = zz + dt * (nz * nz + gz2);
        gz = gz + dt * gz2;
    }
    let (ty, tz) = traj.terminal_norms();
    EnergyReport {
        norm_y_l2h1: yy.sqrt().to_f64_lossy(),
        norm_z_l2h1: zz.sqrt().to_f64_lossy(),
        sigma_grad_z: (traj.sigma * gz).to_f64_lossy(),
        terminal_y: ty.to_f64_lossy(),
        terminal_z: tz.to_f64_lossy(),
    }
}

/// Numerical check of the Neumann heat semigroup `exp(tσΔ)` as realized by
/// the implicit time stepper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupReport {
    pub sigma: f64,
    pub constant_value: f64,
    /// `max |u(T) - C|` for constant data `C`.
    pub constant_max_deviation: f64,
    /// Least-squares slope of `ln ‖u(t)‖` for `u⁰ = cos(πx)`.
    pub fitted_exponent: f64,
    /// `-π² σ`.
    pub expected_exponent: f64,
    pub relative_error: f64,
    pub fit_horizon: f64,
    pub fit_steps: usize,
}

/// Upper bound on `σ λ₁ dt` for the decay fit; implicit Euler underestimates
/// the rate by roughly half this fraction.
const DECAY_RESOLUTION: f64 = 0.01;
/// Number of e-folds covered by the decay fit.
const FIT_EFOLDS: f64 = 20.0;

pub fn semigroup_checks<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
) -> Result<SemigroupReport> {
    super::check_sigma(sigma)?;
    let n = grid.n_cells();
    let c_value = S::lit(3.7);
    let zero_c = CoefficientField::zeros(tgrid, n);
    let constant = grid.constant(c_value);
    let tr = solve_forward_linear(
        grid,
        tgrid,
        sigma,
        &zero_c,
        &ControlField::zeros(tgrid, grid),
        &constant,
        &constant,
    )?;
    let (_, zt) = tr.terminal();
    let constant_dev = zt
        .iter()
        .fold(S::zero(), |m, &v| m.max((v - c_value).abs()));

    let pi2 = S::PI() * S::PI();
    let rate = pi2 * sigma;
    let horizon = tgrid.horizon().min(S::lit(FIT_EFOLDS) / rate);
    let steps = (horizon * rate / S::lit(DECAY_RESOLUTION))
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(tgrid.n_steps().min(4000))
        .max(10);
    let fit_grid = TimeGrid::new(horizon, steps)?;
    let z0 = grid.sample(|x| (S::PI() * x).cos());
    let tr = solve_forward_linear(
        grid,
        &fit_grid,
        sigma,
        &CoefficientField::zeros(&fit_grid, n),
        &ControlField::zeros(&fit_grid, grid),
        &z0,
        &z0,
    )?;
    let ts: Vec<f64> = fit_grid.nodes().iter().map(|t| t.to_f64_lossy()).collect();
    let logs: Vec<f64> = (0..=steps)
        .map(|m| l2_norm(tr.z.slice(m), grid).to_f64_lossy().ln())
        .collect();
    let fitted = linear_slope(&ts, &logs);
    let expected = -rate.to_f64_lossy();
    Ok(SemigroupReport {
        sigma: sigma.to_f64_lossy(),
        constant_value: c_value.to_f64_lossy(),
        constant_max_deviation: constant_dev.to_f64_lossy(),
        fitted_exponent: fitted,
        expected_exponent: expected,
        relative_error: ((fitted - expected) / expected).abs(),
        fit_horizon: horizon.to_f64_lossy(),
        fit_steps: steps,
    })
}

pub(crate) fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
