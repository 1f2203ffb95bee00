use super::{check_sigma, ControlField, ShadowTrajectory, SpaceTime, Trajectory, Tridiagonal};
use crate::error::{Error, Result};
use crate::mesh::{Grid1D, TimeGrid};
use crate::nonlinear::NonlinearityPair;
use crate::scalar::{max_abs, Scalar};

/// Per-step fixed-point resolution of the reaction terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolver<S> {
    pub tol: S,
    pub max_iters: usize,
    /// Relaxation weight in `(0, 1]`.
    pub damping: S,
}

impl<S: Scalar> Default for InnerSolver<S> {
    fn default() -> Self {
        Self {
            tol: S::lit(1e-10),
            max_iters: 50,
            damping: S::one(),
        }
    }
}

fn check_contraction<S: Scalar>(pair: &NonlinearityPair<S>, dt: S) -> Result<()> {
    let product = dt * pair.max_lipschitz();
    if !(product < S::one()) {
        return Err(Error::NoContraction {
            product: product.to_f64_lossy(),
        });
    }
    Ok(())
}

fn relax<S: Scalar>(current: &mut [S], proposed: &[S], damping: S) -> S {
    let mut change = S::zero();
    for (c, &p) in current.iter_mut().zip(proposed) {
        let next = *c + damping * (p - *c);
        change = change.max((next - *c).abs());
        *c = next;
    }
    change
}

/// Implicit Euler in diffusion with `f(y,z)` and `g(y,z)` evaluated at the new
/// time level, resolved by damped fixed-point iteration.
#[allow(clippy::too_many_arguments)]
pub fn solve_forward_semilinear<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
    pair: &NonlinearityPair<S>,
    control: &ControlField<S>,
    y0: &[S],
    z0: &[S],
    inner: InnerSolver<S>,
) -> Result<Trajectory<S>> {
    check_sigma(sigma)?;
    grid.check_len(y0)?;
    grid.check_len(z0)?;
    control.check_shape(tgrid, grid)?;
    let dt = tgrid.dt();
    check_contraction(pair, dt)?;
    let heat_y = Tridiagonal::heat_step(grid, dt, S::one());
    let heat_z = Tridiagonal::heat_step(grid, dt, sigma);
    let chi = grid.indicator();
    let n = grid.n_cells();

    let mut traj = Trajectory::new(grid, tgrid, sigma);
    traj.y.slice_mut(0).copy_from_slice(y0);
    traj.z.slice_mut(0).copy_from_slice(z0);
    let mut y = y0.to_vec();
    let mut z = z0.to_vec();
    let mut base_y = vec![S::zero(); n];
    let mut ty = vec![S::zero(); n];
    let mut tz = vec![S::zero(); n];

    for m in 0..tgrid.n_steps() {
        let h = control.field().slice(m);
        for i in 0..n {
            base_y[i] = traj.y.slice(m)[i] + dt * chi[i] * h[i];
        }
        let prev_z = traj.z.slice(m);
        let mut converged = false;
        let mut residual = S::zero();
        for _ in 0..inner.max_iters {
            for i in 0..n {
                ty[i] = base_y[i] + dt * pair.f(y[i], z[i]);
                tz[i] = prev_z[i] + dt * pair.g(y[i], z[i]);
            }
            heat_y.solve(&mut ty);
            heat_z.solve(&mut tz);
            let scale = S::one().max(max_abs(&y)).max(max_abs(&z));
            residual = relax(&mut y, &ty, inner.damping).max(relax(&mut z, &tz, inner.damping));
            if residual <= inner.tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InnerNonConvergence {
                step: m,
                residual: residual.to_f64_lossy(),
                iterations: inner.max_iters,
            });
        }
        if !(y.iter().chain(&z).all(|v| v.is_finite())) {
            return Err(Error::NonFinite { step: m + 1 });
        }
        traj.y.slice_mut(m + 1).copy_from_slice(&y);
        traj.z.slice_mut(m + 1).copy_from_slice(&z);
    }
    Ok(traj)
}

/// Shadow system: `y_t - Δy = f(y, ξ) + h 1_ω`, `ξ' = mean g(y, ξ)`.
pub fn solve_shadow<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    pair: &NonlinearityPair<S>,
    control: &ControlField<S>,
    y0: &[S],
    xi0: S,
    inner: InnerSolver<S>,
) -> Result<ShadowTrajectory<S>> {
    grid.check_len(y0)?;
    control.check_shape(tgrid, grid)?;
    let dt = tgrid.dt();
    check_contraction(pair, dt)?;
    let heat_y = Tridiagonal::heat_step(grid, dt, S::one());
    let chi = grid.indicator();
    let n = grid.n_cells();
    let hx = grid.spacing();

    let mut ys = SpaceTime::zeros(tgrid.n_steps() + 1, n);
    ys.slice_mut(0).copy_from_slice(y0);
    let mut xis = Vec::with_capacity(tgrid.n_steps() + 1);
    xis.push(xi0);
    let mut y = y0.to_vec();
    let mut xi = xi0;
    let mut base_y = vec![S::zero(); n];
    let mut ty = vec![S::zero(); n];

    for m in 0..tgrid.n_steps() {
        let h = control.field().slice(m);
        for i in 0..n {
            base_y[i] = ys.slice(m)[i] + dt * chi[i] * h[i];
        }
        let prev_xi = xis[m];
        let mut converged = false;
        let mut residual = S::zero();
        for _ in 0..inner.max_iters {
            let mut mean_g = S::zero();
            for i in 0..n {
                ty[i] = base_y[i] + dt * pair.f(y[i], xi);
                mean_g = mean_g + pair.g(y[i], xi);
            }
            mean_g = mean_g * hx;
            heat_y.solve(&mut ty);
            let txi = prev_xi + dt * mean_g;
            let scale = S::one().max(max_abs(&y)).max(xi.abs());
            let dxi = inner.damping * (txi - xi);
            xi = xi + dxi;
            residual = relax(&mut y, &ty, inner.damping).max(dxi.abs());
            if residual <= inner.tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InnerNonConvergence {
                step: m,
                residual: residual.to_f64_lossy(),
                iterations: inner.max_iters,
            });
        }
        if !(y.iter().all(|v| v.is_finite()) && xi.is_finite()) {
            return Err(Error::NonFinite { step: m + 1 });
        }
        ys.slice_mut(m + 1).copy_from_slice(&y);
        xis.push(xi);
    }
    Ok(ShadowTrajectory {
        y: ys,
        xi: xis,
        grid: grid.clone(),
        tgrid: tgrid.clone(),
    })
}
