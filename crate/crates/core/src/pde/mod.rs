//! Implicit-Euler time stepping for the coupled system
//!
//! ```text
//! y_t -  Δy = a11 y + a12 z + h 1_ω
//! z_t - σΔz = a21 y + a22 z
//! ```
//!
//! with homogeneous Neumann conditions, its exact discrete adjoint, the
//! semilinear and shadow variants, and energy/semigroup diagnostics.

mod energy;
mod linear;
mod semilinear;
mod step;

pub(crate) use energy::linear_slope;
pub use energy::{energy_functional, semigroup_checks, EnergyReport, SemigroupReport};
pub use linear::{solve_adjoint, solve_adjoint_mismatched, solve_forward_linear};
pub use semilinear::{solve_forward_semilinear, solve_shadow, InnerSolver};
pub use step::{StepOperator, Tridiagonal};

use crate::error::{Error, Result};
use crate::mesh::{Grid1D, TimeGrid};
use crate::scalar::{max_abs, Scalar};

/// Row-major `(time slice) × (cell)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTime<S> {
    n_times: usize,
    n_cells: usize,
    data: Vec<S>,
}

impl<S: Scalar> SpaceTime<S> {
    pub fn zeros(n_times: usize, n_cells: usize) -> Self {
        Self {
            n_times,
            n_cells,
            data: vec![S::zero(); n_times * n_cells],
        }
    }

    pub fn filled(n_times: usize, n_cells: usize, value: S) -> Self {
        Self {
            n_times,
            n_cells,
            data: vec![value; n_times * n_cells],
        }
    }

    pub fn from_vec(n_times: usize, n_cells: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != n_times * n_cells {
            return Err(Error::LengthMismatch {
                expected: n_times * n_cells,
                got: data.len(),
            });
        }
        Ok(Self {
            n_times,
            n_cells,
            data,
        })
    }

    /// Builds row `m` from `f(m, cell)`.
    pub fn from_fn(n_times: usize, n_cells: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n_times * n_cells);
        for m in 0..n_times {
            for i in 0..n_cells {
                data.push(f(m, i));
            }
        }
        Self {
            n_times,
            n_cells,
            data,
        }
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn slice(&self, m: usize) -> &[S] {
        &self.data[m * self.n_cells..(m + 1) * self.n_cells]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [S] {
        &mut self.data[m * self.n_cells..(m + 1) * self.n_cells]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn sup_norm(&self) -> S {
        max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.n_times == other.n_times && self.n_cells == other.n_cells
    }
}

/// Space-time coefficients `a11, a12, a21, a22`, one row per time node.
///
/// The implicit step from `t_m` to `t_{m+1}` reads row `m + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField<S> {
    a: [SpaceTime<S>; 4],
    sup_norms: [S; 4],
    time_invariant: bool,
}

impl<S: Scalar> CoefficientField<S> {
    /// Spatially and temporally constant coefficients `[a11, a12, a21, a22]`.
    pub fn constant(tgrid: &TimeGrid<S>, n_cells: usize, values: [S; 4]) -> Self {
        let nt = tgrid.n_steps() + 1;
        Self {
            a: values.map(|v| SpaceTime::filled(nt, n_cells, v)),
            sup_norms: values.map(|v| v.abs()),
            time_invariant: true,
        }
    }

    pub fn zeros(tgrid: &TimeGrid<S>, n_cells: usize) -> Self {
        Self::constant(tgrid, n_cells, [S::zero(); 4])
    }

    pub fn from_fields(
        a11: SpaceTime<S>,
        a12: SpaceTime<S>,
        a21: SpaceTime<S>,
        a22: SpaceTime<S>,
    ) -> Result<Self> {
        let a = [a11, a12, a21, a22];
        if a.iter().any(|f| !f.same_shape(&a[0])) {
            return Err(Error::InvalidArgument(
                "coefficient fields must share one shape".into(),
            ));
        }
        if a.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        let sup_norms = [
            a[0].sup_norm(),
            a[1].sup_norm(),
            a[2].sup_norm(),
            a[3].sup_norm(),
        ];
        Ok(Self {
            a,
            sup_norms,
            time_invariant: false,
        })
    }

    pub fn a11(&self) -> &SpaceTime<S> {
        &self.a[0]
    }
    pub fn a12(&self) -> &SpaceTime<S> {
        &self.a[1]
    }
    pub fn a21(&self) -> &SpaceTime<S> {
        &self.a[2]
    }
    pub fn a22(&self) -> &SpaceTime<S> {
        &self.a[3]
    }

    /// `‖a11‖∞, ‖a12‖∞, ‖a21‖∞, ‖a22‖∞`.
    pub fn sup_norms(&self) -> [S; 4] {
        self.sup_norms
    }

    pub fn max_sup_norm(&self) -> S {
        self.sup_norms.iter().fold(S::zero(), |m, &v| m.max(v))
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    /// Coefficients at time node `m` as four slices.
    pub fn at(&self, m: usize) -> [&[S]; 4] {
        [
            self.a[0].slice(m),
            self.a[1].slice(m),
            self.a[2].slice(m),
            self.a[3].slice(m),
        ]
    }

    /// Copy with `a12` and `a21` exchanged.
    pub fn swapped_coupling(&self) -> Self {
        let [a11, a12, a21, a22] = self.a.clone();
        let [n11, n12, n21, n22] = self.sup_norms;
        Self {
            a: [a11, a21, a12, a22],
            sup_norms: [n11, n21, n12, n22],
            time_invariant: self.time_invariant,
        }
    }

    pub(crate) fn check_shape(&self, tgrid: &TimeGrid<S>, grid: &Grid1D<S>) -> Result<()> {
        if self.a[0].n_times() != tgrid.n_steps() + 1 || self.a[0].n_cells() != grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "coefficient field is {}x{}, expected {}x{}",
                self.a[0].n_times(),
                self.a[0].n_cells(),
                tgrid.n_steps() + 1,
                grid.n_cells()
            )));
        }
        Ok(())
    }
}

/// Distributed control; row `m` acts on the step `(t_m, t_{m+1}]`.
///
/// Entries on cells with zero `ω`-indicator are kept at exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField<S> {
    h: SpaceTime<S>,
}

impl<S: Scalar> ControlField<S> {
    pub fn zeros(tgrid: &TimeGrid<S>, grid: &Grid1D<S>) -> Self {
        Self {
            h: SpaceTime::zeros(tgrid.n_steps(), grid.n_cells()),
        }
    }

    /// Wraps `h`, zeroing every cell outside `ω`.
    pub fn masked(mut h: SpaceTime<S>, grid: &Grid1D<S>) -> Result<Self> {
        if h.n_cells() != grid.n_cells() {
            return Err(Error::LengthMismatch {
                expected: grid.n_cells(),
                got: h.n_cells(),
            });
        }
        let chi = grid.indicator();
        for m in 0..h.n_times() {
            for (v, &w) in h.slice_mut(m).iter_mut().zip(chi) {
                if w == S::zero() {
                    *v = S::zero();
                }
            }
        }
        Ok(Self { h })
    }

    pub fn field(&self) -> &SpaceTime<S> {
        &self.h
    }

    pub fn n_steps(&self) -> usize {
        self.h.n_times()
    }

    /// `‖h‖_{L²(0,T; L²(ω))}` with the cut-cell weighted quadrature.
    pub fn l2_norm(&self, grid: &Grid1D<S>, tgrid: &TimeGrid<S>) -> S {
        let chi = grid.indicator();
        let mut acc = S::zero();
        for m in 0..self.h.n_times() {
            acc = acc
                + self
                    .h
                    .slice(m)
                    .iter()
                    .zip(chi)
                    .map(|(&v, &w)| w * v * v)
                    .sum::<S>();
        }
        (acc * grid.spacing() * tgrid.dt()).sqrt()
    }

    /// Weighted `L²` distance to another control on the same grids.
    pub fn distance(&self, other: &Self, grid: &Grid1D<S>, tgrid: &TimeGrid<S>) -> S {
        let chi = grid.indicator();
        let mut acc = S::zero();
        for m in 0..self.h.n_times() {
            for ((&a, &b), &w) in self.h.slice(m).iter().zip(other.h.slice(m)).zip(chi) {
                acc = acc + w * (a - b) * (a - b);
            }
        }
        (acc * grid.spacing() * tgrid.dt()).sqrt()
    }

    pub(crate) fn check_shape(&self, tgrid: &TimeGrid<S>, grid: &Grid1D<S>) -> Result<()> {
        if self.h.n_times() != tgrid.n_steps() || self.h.n_cells() != grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "control is {}x{}, expected {}x{}",
                self.h.n_times(),
                self.h.n_cells(),
                tgrid.n_steps(),
                grid.n_cells()
            )));
        }
        Ok(())
    }
}

/// Space-time record of `(y, z)` or of the adjoint pair `(φ, ψ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub y: SpaceTime<S>,
    pub z: SpaceTime<S>,
    pub sigma: S,
    pub grid: Grid1D<S>,
    pub tgrid: TimeGrid<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub(crate) fn new(grid: &Grid1D<S>, tgrid: &TimeGrid<S>, sigma: S) -> Self {
        let nt = tgrid.n_steps() + 1;
        Self {
            y: SpaceTime::zeros(nt, grid.n_cells()),
            z: SpaceTime::zeros(nt, grid.n_cells()),
            sigma,
            grid: grid.clone(),
            tgrid: tgrid.clone(),
        }
    }

    pub fn n_times(&self) -> usize {
        self.y.n_times()
    }

    pub fn terminal(&self) -> (&[S], &[S]) {
        let m = self.n_times() - 1;
        (self.y.slice(m), self.z.slice(m))
    }

    pub fn initial(&self) -> (&[S], &[S]) {
        (self.y.slice(0), self.z.slice(0))
    }

    /// `(‖y(T)‖, ‖z(T)‖)` in `L²(Ω)`.
    pub fn terminal_norms(&self) -> (S, S) {
        let (y, z) = self.terminal();
        (
            crate::mesh::l2_norm(y, &self.grid),
            crate::mesh::l2_norm(z, &self.grid),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.z.is_finite()
    }
}

/// State of the shadow system: PDE field `y` and scalar path `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowTrajectory<S> {
    pub y: SpaceTime<S>,
    pub xi: Vec<S>,
    pub grid: Grid1D<S>,
    pub tgrid: TimeGrid<S>,
}

pub(crate) fn check_sigma<S: Scalar>(sigma: S) -> Result<()> {
    if !(sigma >= S::one()) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "diffusion ratio sigma must be >= 1, got {sigma}"
        )));
    }
    Ok(())
}

/// `‖(u, v)‖` in `L²(Ω)²`.
pub fn pair_norm<S: Scalar>(u: &[S], v: &[S], grid: &Grid1D<S>) -> S {
    let a = crate::mesh::l2_norm(u, grid);
    let b = crate::mesh::l2_norm(v, grid);
    (a * a + b * b).sqrt()
}
