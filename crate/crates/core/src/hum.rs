//! Penalized Hilbert Uniqueness Method for the linear coupled system.
//!
//! Adjoint terminal data `p_T = (φ_T, ψ_T)` are found from the normal
//! equations `(Λ + ε I) p_T = free(T)`, where `free` is the uncontrolled
//! solution and `Λ` the Gramian. The control is `h = -φ` on `ω`, and the
//! controlled state satisfies `(y(T), z(T)) = ε p_T`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{dot, Grid1D, TimeGrid};
use crate::pde::{
    pair_norm, solve_adjoint, solve_forward_linear, CoefficientField, ControlField, SpaceTime,
    Trajectory,
};
use crate::scalar::Scalar;

/// The linear control system `(grid, time grid, σ, a_ij)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearSystem<'a, S> {
    pub grid: &'a Grid1D<S>,
    pub tgrid: &'a TimeGrid<S>,
    pub sigma: S,
    pub coeffs: &'a CoefficientField<S>,
}

/// Krylov method for the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Krylov {
    /// Conjugate gradients.
    Cg,
    /// Conjugate residuals: same Krylov space, residual norm non-increasing.
    Cr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumConfig<S> {
    pub epsilon: S,
    /// Relative residual tolerance of the Krylov solve.
    pub cg_tol: S,
    pub cg_max_iters: usize,
    pub record_duality: bool,
    /// Symmetric Jacobi scaling with the exact Gramian diagonal. Costs
    /// `2·n_cells` Gramian applications up front; meant for `ε ≤ 1e-8`.
    pub jacobi: bool,
    pub method: Krylov,
}

impl<S: Scalar> Default for HumConfig<S> {
    fn default() -> Self {
        Self {
            epsilon: S::lit(1e-6),
            cg_tol: S::lit(1e-9),
            cg_max_iters: 500,
            record_duality: true,
            jacobi: false,
            method: Krylov::Cr,
        }
    }
}

impl<S: Scalar> HumConfig<S> {
    pub fn with_epsilon(mut self, epsilon: S) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > S::zero()) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.cg_tol > S::zero() && self.cg_tol <= S::lit(1e-2)) {
            return Err(Error::InvalidArgument(format!(
                "cg_tol must lie in (0, 1e-2], got {}",
                self.cg_tol
            )));
        }
        if self.cg_max_iters == 0 {
            return Err(Error::InvalidArgument("cg_max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HumResult<S> {
    pub control: ControlField<S>,
    pub terminal_y_norm: S,
    pub terminal_z_norm: S,
    /// `‖h‖` in `L²(0,T; L²(ω))`.
    pub control_cost: S,
    pub cg_iterations: usize,
    /// False when the Krylov solve hit `cg_max_iters`; the best iterate is kept.
    pub converged: bool,
    /// Relative residual norms, one per iteration plus the initial one.
    pub residual_history: Vec<S>,
    /// `NaN` unless `record_duality` is set.
    pub duality_residual: S,
    pub adjoint_terminal: (Vec<S>, Vec<S>),
    /// Controlled forward solution.
    pub trajectory: Trajectory<S>,
}

impl<S: Scalar> HumResult<S> {
    /// First index at which the residual history increased by more than
    /// `rel_tol` relative to its predecessor.
    pub fn residual_increase(&self, rel_tol: S) -> Option<usize> {
        self.residual_history
            .windows(2)
            .position(|w| w[1] > w[0] * (S::one() + rel_tol))
            .map(|i| i + 1)
    }
}

/// Observation of the adjoint on `ω` as a control, row `m` from adjoint slice `m`.
fn observe<S: Scalar>(adj: &Trajectory<S>, grid: &Grid1D<S>, sign: S) -> Result<ControlField<S>> {
    let steps = adj.n_times() - 1;
    let n = grid.n_cells();
    let h = SpaceTime::from_fn(steps, n, |m, i| sign * adj.y.slice(m)[i]);
    ControlField::masked(h, grid)
}

fn split<S: Scalar>(v: &[S]) -> (&[S], &[S]) {
    v.split_at(v.len() / 2)
}

fn join<S: Scalar>(y: &[S], z: &[S]) -> Vec<S> {
    y.iter().chain(z).copied().collect()
}

impl<'a, S: Scalar> LinearSystem<'a, S> {
    pub fn new(
        grid: &'a Grid1D<S>,
        tgrid: &'a TimeGrid<S>,
        sigma: S,
        coeffs: &'a CoefficientField<S>,
    ) -> Self {
        Self {
            grid,
            tgrid,
            sigma,
            coeffs,
        }
    }

    pub fn adjoint(&self, phi_t: &[S], psi_t: &[S]) -> Result<Trajectory<S>> {
        solve_adjoint(
            self.grid,
            self.tgrid,
            self.sigma,
            self.coeffs,
            phi_t,
            psi_t,
            None,
        )
    }

    pub fn forward(&self, control: &ControlField<S>, y0: &[S], z0: &[S]) -> Result<Trajectory<S>> {
        solve_forward_linear(
            self.grid,
            self.tgrid,
            self.sigma,
            self.coeffs,
            control,
            y0,
            z0,
        )
    }

    /// HUM Gramian: adjoint from `p_T`, observed on `ω` and fed back as a
    /// control into the forward problem from zero data. Symmetric and
    /// positive semidefinite, with `⟨Λa, a⟩ = ‖φ_a‖²` over `ω × (0,T)`.
    pub fn gramian_apply(&self, phi_t: &[S], psi_t: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let adj = self.adjoint(phi_t, psi_t)?;
        let h = observe(&adj, self.grid, S::one())?;
        let zero = self.grid.constant(S::zero());
        let fwd = self.forward(&h, &zero, &zero)?;
        let (y, z) = fwd.terminal();
        Ok((y.to_vec(), z.to_vec()))
    }

    /// Exact diagonal of `Λ` from `2n` unit-vector applications.
    pub fn gramian_diagonal(&self) -> Result<Vec<S>> {
        let n = self.grid.n_cells();
        let mut diag = Vec::with_capacity(2 * n);
        for j in 0..2 * n {
            let mut e = vec![S::zero(); 2 * n];
            e[j] = S::one();
            let (a, b) = split(&e);
            let (ly, lz) = self.gramian_apply(a, b)?;
            diag.push(if j < n { ly[j] } else { lz[j - n] });
        }
        Ok(diag)
    }

    /// Penalized HUM control for initial data `(y0, z0)`.
    pub fn hum_solve(&self, y0: &[S], z0: &[S], cfg: &HumConfig<S>) -> Result<HumResult<S>> {
        cfg.validate()?;
        self.grid.check_len(y0)?;
        self.grid.check_len(z0)?;
        let n = self.grid.n_cells();
        let free = self.forward(&ControlField::zeros(self.tgrid, self.grid), y0, z0)?;
        let (fy, fz) = free.terminal();
        let rhs = join(fy, fz);

        let scale: Vec<S> = if cfg.jacobi {
            self.gramian_diagonal()?
                .into_iter()
                .map(|d| S::one() / (d + cfg.epsilon).sqrt())
                .collect()
        } else {
            vec![S::one(); 2 * n]
        };
        let b: Vec<S> = rhs.iter().zip(&scale).map(|(&r, &s)| r * s).collect();
        let op = |v: &[S]| -> Result<Vec<S>> {
            let sv: Vec<S> = v.iter().zip(&scale).map(|(&a, &s)| a * s).collect();
            let (a, bz) = split(&sv);
            let (ly, lz) = self.gramian_apply(a, bz)?;
            Ok(join(&ly, &lz)
                .into_iter()
                .zip(&sv)
                .zip(&scale)
                .map(|((l, &x), &s)| s * (l + cfg.epsilon * x))
                .collect())
        };
        let krylov = match cfg.method {
            Krylov::Cg => conjugate_gradient(op, &b, cfg.cg_tol, cfg.cg_max_iters)?,
            Krylov::Cr => conjugate_residual(op, &b, cfg.cg_tol, cfg.cg_max_iters)?,
        };
        let pt: Vec<S> = krylov.x.iter().zip(&scale).map(|(&x, &s)| x * s).collect();
        let (phi_t, psi_t) = split(&pt);

        let adj = self.adjoint(phi_t, psi_t)?;
        let control = observe(&adj, self.grid, -S::one())?;
        let traj = self.forward(&control, y0, z0)?;
        let (ty, tz) = traj.terminal_norms();
        let duality = if cfg.record_duality {
            duality_residual(&traj, &adj, &control)?
        } else {
            S::nan()
        };
        Ok(HumResult {
            control_cost: control.l2_norm(self.grid, self.tgrid),
            control,
            terminal_y_norm: ty,
            terminal_z_norm: tz,
            cg_iterations: krylov.iterations,
            converged: krylov.converged,
            residual_history: krylov.history,
            duality_residual: duality,
            adjoint_terminal: (phi_t.to_vec(), psi_t.to_vec()),
            trajectory: traj,
        })
    }

    /// Runs [`LinearSystem::hum_solve`] for each `ε` (strictly decreasing).
    pub fn epsilon_sweep(
        &self,
        y0: &[S],
        z0: &[S],
        epsilons: &[S],
        cfg: &HumConfig<S>,
    ) -> Result<EpsilonSweep> {
        if epsilons.is_empty() || epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument(
                "epsilons must be a non-empty strictly decreasing list".into(),
            ));
        }
        let data_norm = pair_norm(y0, z0, self.grid).to_f64_lossy();
        let rows = epsilons
            .iter()
            .map(|&eps| {
                let r = self.hum_solve(y0, z0, &cfg.with_epsilon(eps))?;
                let (ty, tz) = (r.terminal_y_norm.to_f64_lossy(), r.terminal_z_norm.to_f64_lossy());
                let terminal = ty.hypot(tz);
                Ok(EpsilonRow {
                    epsilon: eps.to_f64_lossy(),
                    control_cost: r.control_cost.to_f64_lossy(),
                    terminal_y: ty,
                    terminal_z: tz,
                    terminal_norm: terminal,
                    ratio: terminal / eps.to_f64_lossy().sqrt(),
                    cg_iterations: r.cg_iterations,
                    converged: r.converged,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EpsilonSweep::from_rows(rows, data_norm))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub control_cost: f64,
    pub terminal_y: f64,
    pub terminal_z: f64,
    pub terminal_norm: f64,
    /// `terminal_norm / √ε`.
    pub ratio: f64,
    pub cg_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSweep {
    pub rows: Vec<EpsilonRow>,
    pub data_norm: f64,
    /// `(max - min) / max` of the control cost over the last three rows.
    pub cost_spread_last3: f64,
    pub max_cost: f64,
    /// Terminal ratio strictly increasing over the last three rows.
    pub ratio_growing_last3: bool,
    pub max_ratio: f64,
}

impl EpsilonSweep {
    fn from_rows(rows: Vec<EpsilonRow>, data_norm: f64) -> Self {
        let tail = &rows[rows.len().saturating_sub(3)..];
        let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
            (lo.min(r.control_cost), hi.max(r.control_cost))
        });
        let cost_spread_last3 = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        let ratio_growing_last3 = tail.len() == 3 && tail.windows(2).all(|w| w[1].ratio > w[0].ratio);
        Self {
            max_cost: rows.iter().map(|r| r.control_cost).fold(0.0, f64::max),
            max_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
            rows,
            data_norm,
            cost_spread_last3,
            ratio_growing_last3,
        }
    }
}

/// Relative defect of the discrete duality identity
/// `⟨u(T), p(T)⟩ = ⟨u(0), p(0)⟩ + ∬_ω h φ`.
///
/// `traj` is a forward solution under `control`, `adjoint` a backward solution
/// without sources on the same grids. The defect is normalized by the largest
/// of the three terms; it is zero when all three vanish.
pub fn duality_residual<S: Scalar>(
    traj: &Trajectory<S>,
    adjoint: &Trajectory<S>,
    control: &ControlField<S>,
) -> Result<S> {
    let grid = &traj.grid;
    let tgrid = &traj.tgrid;
    if adjoint.n_times() != traj.n_times() || adjoint.grid.n_cells() != grid.n_cells() {
        return Err(Error::InvalidArgument(
            "trajectory and adjoint live on different grids".into(),
        ));
    }
    control.check_shape(tgrid, grid)?;
    let hx = grid.spacing();
    let pairing = |m: usize| {
        (dot(traj.y.slice(m), adjoint.y.slice(m)) + dot(traj.z.slice(m), adjoint.z.slice(m))) * hx
    };
    let terminal = pairing(traj.n_times() - 1);
    let initial = pairing(0);
    let chi = grid.indicator();
    let mut observed = S::zero();
    for m in 0..control.n_steps() {
        let row: S = control
            .field()
            .slice(m)
            .iter()
            .zip(adjoint.y.slice(m))
            .zip(chi)
            .map(|((&h, &p), &w)| w * h * p)
            .sum();
        observed = observed + row;
    }
    observed = observed * hx * tgrid.dt();
    let scale = terminal.abs().max(initial.abs()).max(observed.abs());
    if scale == S::zero() {
        return Ok(S::zero());
    }
    Ok((terminal - initial - observed).abs() / scale)
}

struct KrylovOutcome<S> {
    x: Vec<S>,
    iterations: usize,
    converged: bool,
    history: Vec<S>,
}

fn axpy<S: Scalar>(y: &mut [S], a: S, x: &[S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

fn trivial<S: Scalar>(b: &[S]) -> Option<KrylovOutcome<S>> {
    dot(b, b).is_zero().then(|| KrylovOutcome {
        x: vec![S::zero(); b.len()],
        iterations: 0,
        converged: true,
        history: vec![S::zero()],
    })
}

fn conjugate_gradient<S: Scalar>(
    op: impl Fn(&[S]) -> Result<Vec<S>>,
    b: &[S],
    tol: S,
    max_iters: usize,
) -> Result<KrylovOutcome<S>> {
    if let Some(t) = trivial(b) {
        return Ok(t);
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![S::zero(); b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = vec![S::one()];
    for it in 1..=max_iters {
        let ap = op(&p)?;
        let alpha = rr / dot(&p, &ap);
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = dot(&r, &r);
        history.push(rr_new.sqrt() / bnorm);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(KrylovOutcome {
                x,
                iterations: it,
                converged: true,
                history,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(KrylovOutcome {
        x,
        iterations: max_iters,
        converged: false,
        history,
    })
}

fn conjugate_residual<S: Scalar>(
    op: impl Fn(&[S]) -> Result<Vec<S>>,
    b: &[S],
    tol: S,
    max_iters: usize,
) -> Result<KrylovOutcome<S>> {
    if let Some(t) = trivial(b) {
        return Ok(t);
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![S::zero(); b.len()];
    let mut r = b.to_vec();
    let mut ar = op(&r)?;
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = dot(&r, &ar);
    let mut history = vec![S::one()];
    for it in 1..=max_iters {
        let alpha = rar / dot(&ap, &ap);
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rnorm = dot(&r, &r).sqrt();
        history.push(rnorm / bnorm);
        if rnorm <= tol * bnorm {
            return Ok(KrylovOutcome {
                x,
                iterations: it,
                converged: true,
                history,
            });
        }
        ar = op(&r)?;
        let rar_new = dot(&r, &ar);
        let beta = rar_new / rar;
        rar = rar_new;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        for (qi, &ai) in ap.iter_mut().zip(&ar) {
            *qi = ai + beta * *qi;
        }
    }
    Ok(KrylovOutcome {
        x,
        iterations: max_iters,
        converged: false,
        history,
    })
}
