//! Null control of the semilinear system by Picard iteration on linearized
//! problems.
//!
//! Around a reference `(ȳ, z̄)` the reactions are written exactly as
//! `f(ȳ, z̄) = a11 ȳ + a12 z̄` with `a11 = ∫₀¹ ∂_y f(δȳ, δz̄) dδ` and so on;
//! each outer step solves penalized HUM for the linear system with these
//! coefficients and moves the reference to the controlled state.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hum::{HumConfig, HumResult, LinearSystem};
use crate::mesh::{Grid1D, TimeGrid};
use crate::nonlinear::NonlinearityPair;
use crate::pde::{
    solve_forward_semilinear, CoefficientField, ControlField, InnerSolver, SpaceTime, Trajectory,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig<S> {
    /// Relative update of the reference below which the loop stops.
    pub outer_tol: S,
    pub max_outer: usize,
    /// Relaxation in `(0, 1]`; halved to 0.5 once the update grows twice in a row.
    pub damping: S,
    /// Gauss–Legendre nodes for the `δ`-integrals, at least 4.
    pub quadrature_nodes: usize,
    pub hum: HumConfig<S>,
    pub inner: InnerSolver<S>,
}

impl<S: Scalar> Default for FixedPointConfig<S> {
    fn default() -> Self {
        Self {
            outer_tol: S::lit(1e-6),
            max_outer: 30,
            damping: S::one(),
            quadrature_nodes: 16,
            hum: HumConfig::default(),
            inner: InnerSolver::default(),
        }
    }
}

impl<S: Scalar> FixedPointConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > S::zero()) {
            return Err(Error::InvalidArgument("outer_tol must be positive".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be positive".into()));
        }
        if !(self.damping > S::zero() && self.damping <= S::one()) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.quadrature_nodes < 4 {
            return Err(Error::InvalidArgument(format!(
                "quadrature_nodes must be at least 4, got {}",
                self.quadrature_nodes
            )));
        }
        self.hum.validate()
    }
}

/// Non-fatal diagnostics collected during the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// `a21_sign · a21` is not bounded away from zero on `ω`.
    CouplingFloor { iteration: usize, floor: f64 },
    DampingReduced { iteration: usize, damping: f64 },
    HumNotConverged { iteration: usize, cg_iterations: usize },
    OuterNotConverged { iterations: usize, best_update: f64 },
}

#[derive(Debug, Clone)]
pub struct FixedPointResult<S> {
    pub control: ControlField<S>,
    /// Semilinear solution under `control`, recomputed after the loop.
    pub trajectory: Trajectory<S>,
    /// Linearized solution from the last accepted outer step.
    pub linearized: Trajectory<S>,
    pub outer_iterations: usize,
    pub update_history: Vec<S>,
    pub converged: bool,
    pub terminal_y_norm: S,
    pub terminal_z_norm: S,
    pub control_cost: S,
    pub warnings: Vec<Warning>,
}

/// Nodes and weights of the Gauss–Legendre rule on `[0, 1]`.
fn unit_rule<S: Scalar>(n_quad: usize) -> Result<Vec<(S, S)>> {
    let degree = NonZeroUsize::new(n_quad)
        .ok_or_else(|| Error::InvalidArgument("n_quad must be positive".into()))?;
    Ok(GaussLegendre::new(degree)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (S::lit(0.5 * (x + 1.0)), S::lit(0.5 * w)))
        .collect())
}

/// Averaged Jacobian of `(f, g)` along the segment from the origin to
/// `(ȳ, z̄)`, evaluated pointwise with an `n_quad`-node Gauss–Legendre rule.
pub fn linearized_coefficients<S: Scalar>(
    pair: &NonlinearityPair<S>,
    ybar: &SpaceTime<S>,
    zbar: &SpaceTime<S>,
    n_quad: usize,
) -> Result<CoefficientField<S>> {
    if !ybar.same_shape(zbar) {
        return Err(Error::InvalidArgument("reference fields differ in shape".into()));
    }
    if !(ybar.is_finite() && zbar.is_finite()) {
        return Err(Error::InvalidArgument("reference fields must be finite".into()));
    }
    let (nt, n) = (ybar.n_times(), ybar.n_cells());
    let rule = unit_rule::<S>(n_quad)?;
    let len = nt * n;
    let mut a = [vec![S::zero(); len], vec![S::zero(); len], vec![S::zero(); len], vec![S::zero(); len]];
    for (k, (&y, &z)) in ybar.as_slice().iter().zip(zbar.as_slice()).enumerate() {
        let mut acc = [S::zero(); 4];
        for &(d, w) in &rule {
            let (fy, fz) = pair.df(d * y, d * z);
            let (gy, gz) = pair.dg(d * y, d * z);
            acc[0] = acc[0] + w * fy;
            acc[1] = acc[1] + w * fz;
            acc[2] = acc[2] + w * gy;
            acc[3] = acc[3] + w * gz;
        }
        for (field, v) in a.iter_mut().zip(acc) {
            field[k] = v;
        }
    }
    let [a11, a12, a21, a22] = a.map(|v| SpaceTime::from_vec(nt, n, v));
    CoefficientField::from_fields(a11?, a12?, a21?, a22?)
}

/// `min a21_sign · a21(t, x)` over all time nodes and cells meeting `ω`.
/// A non-positive value means the coupling hypothesis fails numerically.
pub fn coupling_floor_check<S: Scalar>(coeffs: &CoefficientField<S>, grid: &Grid1D<S>, sign: S) -> S {
    let chi = grid.indicator();
    let a21 = coeffs.a21();
    let mut floor = S::infinity();
    for m in 0..a21.n_times() {
        for (&v, &w) in a21.slice(m).iter().zip(chi) {
            if w > S::zero() {
                floor = floor.min(sign * v);
            }
        }
    }
    floor
}

fn space_time_norm<S: Scalar>(y: &SpaceTime<S>, z: &SpaceTime<S>) -> S {
    y.as_slice()
        .iter()
        .chain(z.as_slice())
        .map(|&v| v * v)
        .sum::<S>()
        .sqrt()
}

fn relative_update<S: Scalar>(new: &Trajectory<S>, y: &SpaceTime<S>, z: &SpaceTime<S>) -> S {
    let diff = |a: &SpaceTime<S>, b: &SpaceTime<S>| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum::<S>()
    };
    let d = (diff(&new.y, y) + diff(&new.z, z)).sqrt();
    let scale = space_time_norm(&new.y, &new.z).max(space_time_norm(y, z));
    if scale == S::zero() {
        S::zero()
    } else {
        d / scale
    }
}

fn blend<S: Scalar>(target: &mut SpaceTime<S>, new: &SpaceTime<S>, damping: S) {
    for (t, &v) in target.as_mut_slice().iter_mut().zip(new.as_slice()) {
        *t = *t + damping * (v - *t);
    }
}

/// Picard iteration: linearize around the reference, solve penalized HUM,
/// relax the reference toward the controlled linear state. The returned
/// terminal norms come from the semilinear solve under the final control.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_control<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
    pair: &NonlinearityPair<S>,
    y0: &[S],
    z0: &[S],
    cfg: &FixedPointConfig<S>,
) -> Result<FixedPointResult<S>> {
    cfg.validate()?;
    let zero = ControlField::zeros(tgrid, grid);
    let free = solve_forward_semilinear(grid, tgrid, sigma, pair, &zero, y0, z0, cfg.inner)?;
    let (mut ybar, mut zbar) = (free.y, free.z);
    let reference_free = pair.constant_jacobian().is_some();

    let mut damping = cfg.damping;
    let mut history: Vec<S> = Vec::new();
    let mut warnings = Vec::new();
    let mut best: Option<(S, HumResult<S>)> = None;
    let mut converged = false;
    let mut increases = 0;
    let mut iterations = 0;

    for it in 1..=cfg.max_outer {
        iterations = it;
        let coeffs = linearized_coefficients(pair, &ybar, &zbar, cfg.quadrature_nodes)?;
        let floor = coupling_floor_check(&coeffs, grid, pair.a21_sign);
        if !(floor > S::zero()) {
            warnings.push(Warning::CouplingFloor {
                iteration: it,
                floor: floor.to_f64_lossy(),
            });
        }
        let hum = LinearSystem::new(grid, tgrid, sigma, &coeffs).hum_solve(y0, z0, &cfg.hum)?;
        if !hum.converged {
            warnings.push(Warning::HumNotConverged {
                iteration: it,
                cg_iterations: hum.cg_iterations,
            });
        }
        let update = relative_update(&hum.trajectory, &ybar, &zbar);
        if let Some(&last) = history.last() {
            increases = if update > last { increases + 1 } else { 0 };
            if increases >= 2 && damping > S::lit(0.5) {
                damping = S::lit(0.5);
                increases = 0;
                warnings.push(Warning::DampingReduced {
                    iteration: it,
                    damping: 0.5,
                });
            }
        }
        history.push(update);
        blend(&mut ybar, &hum.trajectory.y, damping);
        blend(&mut zbar, &hum.trajectory.z, damping);
        if best.as_ref().is_none_or(|(u, _)| update <= *u) {
            best = Some((update, hum));
        }
        // a reference-independent linearization is its own fixed point
        if update < cfg.outer_tol || reference_free {
            converged = true;
            break;
        }
    }

    let (best_update, hum) = best.expect("at least one outer iteration");
    if !converged {
        warnings.push(Warning::OuterNotConverged {
            iterations,
            best_update: best_update.to_f64_lossy(),
        });
    }
    let trajectory =
        solve_forward_semilinear(grid, tgrid, sigma, pair, &hum.control, y0, z0, cfg.inner)?;
    let (ty, tz) = trajectory.terminal_norms();
    Ok(FixedPointResult {
        control_cost: hum.control_cost,
        control: hum.control,
        trajectory,
        linearized: hum.trajectory,
        outer_iterations: iterations,
        update_history: history,
        converged,
        terminal_y_norm: ty,
        terminal_z_norm: tz,
        warnings,
    })
}
