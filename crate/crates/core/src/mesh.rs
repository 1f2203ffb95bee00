//! Cell-centered discretization of the unit interval, the homogeneous
//! Neumann Laplacian and the discrete `L²(Ω)` pairing.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fractions this close to 0 or 1 are snapped, so that exactly aligned
/// control windows produce an exact 0/1 indicator.
const SNAP: f64 = 1e-9;

/// Uniform cell-centered mesh of `Ω = (0, 1)` carrying the control window `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D<S> {
    n_cells: usize,
    spacing: S,
    centers: Vec<S>,
    omega: (S, S),
    indicator: Vec<S>,
}

impl<S: Scalar> Grid1D<S> {
    pub fn new(n_cells: usize, omega: (S, S)) -> Result<Self> {
        let (a, b) = omega;
        if n_cells < 4 {
            return Err(Error::InvalidGrid(format!(
                "n_cells must be at least 4, got {n_cells}"
            )));
        }
        if !(a > S::zero() && b < S::one()) {
            return Err(Error::InvalidGrid(format!(
                "control window ({a}, {b}) must lie inside (0, 1)"
            )));
        }
        if a >= b {
            return Err(Error::InvalidGrid(format!(
                "control window requires a < b, got a = {a}, b = {b}"
            )));
        }
        let n = S::from_count(n_cells);
        let spacing = S::one() / n;
        let half = S::lit(0.5);
        let centers = (0..n_cells)
            .map(|i| (S::from_count(i) + half) / n)
            .collect();
        let indicator = (0..n_cells)
            .map(|i| {
                let left = S::from_count(i) / n;
                let right = S::from_count(i + 1) / n;
                let overlap = (b.min(right) - a.max(left)).max(S::zero());
                let frac = (overlap / spacing).min(S::one());
                if frac < S::lit(SNAP) {
                    S::zero()
                } else if frac > S::one() - S::lit(SNAP) {
                    S::one()
                } else {
                    frac
                }
            })
            .collect();
        Ok(Self {
            n_cells,
            spacing,
            centers,
            omega,
            indicator,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn spacing(&self) -> S {
        self.spacing
    }

    pub fn centers(&self) -> &[S] {
        &self.centers
    }

    pub fn omega(&self) -> (S, S) {
        self.omega
    }

    /// Per-cell fraction of the cell covered by `ω`.
    pub fn indicator(&self) -> &[S] {
        &self.indicator
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn(S) -> S) -> Vec<S> {
        self.centers.iter().map(|&x| f(x)).collect()
    }

    pub fn constant(&self, c: S) -> Vec<S> {
        vec![c; self.n_cells]
    }

    pub(crate) fn check_len(&self, u: &[S]) -> Result<()> {
        if u.len() != self.n_cells {
            return Err(Error::LengthMismatch {
                expected: self.n_cells,
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// Uniform time mesh on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<S> {
    horizon: S,
    n_steps: usize,
    dt: S,
}

impl<S: Scalar> TimeGrid<S> {
    pub fn new(horizon: S, n_steps: usize) -> Result<Self> {
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        Ok(Self {
            horizon,
            n_steps,
            dt: horizon / S::from_count(n_steps),
        })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn node(&self, m: usize) -> S {
        if m == self.n_steps {
            self.horizon
        } else {
            S::from_count(m) * self.dt
        }
    }

    pub fn nodes(&self) -> Vec<S> {
        (0..=self.n_steps).map(|m| self.node(m)).collect()
    }

    /// Same horizon with the step count raised until `dt <= max_dt`.
    pub fn refined(&self, max_dt: S) -> Self {
        if self.dt <= max_dt {
            return self.clone();
        }
        let steps = (self.horizon / max_dt).ceil().to_usize().unwrap_or(self.n_steps);
        Self {
            horizon: self.horizon,
            n_steps: steps,
            dt: self.horizon / S::from_count(steps),
        }
    }
}

/// Square sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator<S> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<S>,
    symmetric: bool,
}

impl<S: Scalar> DiscreteOperator<S> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, S)>, symmetric: bool) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() = *vals.last().unwrap() + v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
            symmetric,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(S::zero(), |(_, v)| v)
    }

    pub fn apply(&self, u: &[S]) -> Vec<S> {
        assert_eq!(u.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * u[c]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut m = vec![vec![S::zero(); self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] = v;
            }
        }
        m
    }

    /// `max |A - Aᵀ|` over stored entries.
    pub fn asymmetry(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                worst = worst.max((v - self.get(c, i)).abs());
            }
        }
        worst
    }
}

/// Three-point second difference with reflecting end rows.
pub fn neumann_laplacian<S: Scalar>(grid: &Grid1D<S>) -> DiscreteOperator<S> {
    let n = grid.n_cells();
    let h = grid.spacing();
    let inv_h2 = S::one() / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        let mut diag = S::zero();
        if i > 0 {
            t.push((i, i - 1, inv_h2));
            diag = diag - inv_h2;
        }
        if i + 1 < n {
            t.push((i, i + 1, inv_h2));
            diag = diag - inv_h2;
        }
        t.push((i, i, diag));
    }
    DiscreteOperator::from_triplets(n, t, true)
}

/// Midpoint-rule `L²(Ω)` pairing.
pub fn inner_product<S: Scalar>(u: &[S], v: &[S], grid: &Grid1D<S>) -> Result<S> {
    grid.check_len(u)?;
    grid.check_len(v)?;
    Ok(dot(u, v) * grid.spacing())
}

/// Spatial average over `Ω` (`|Ω| = 1`).
pub fn mean_value<S: Scalar>(u: &[S], grid: &Grid1D<S>) -> Result<S> {
    grid.check_len(u)?;
    Ok(u.iter().copied().sum::<S>() * grid.spacing())
}

pub fn l2_norm<S: Scalar>(u: &[S], grid: &Grid1D<S>) -> S {
    (dot(u, u) * grid.spacing()).sqrt()
}

pub(crate) fn dot<S: Scalar>(u: &[S], v: &[S]) -> S {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

/// Exact eigen-decomposition of the cell-centered Neumann Laplacian.
///
/// The eigenvectors are the cosine modes `cos(kπ x_i)` with eigenvalues
/// `-(4/h²) sin²(kπ / 2n)`; they diagonalize the discrete heat semigroup
/// `exp(tσL)`, which is then applied exactly in time.
#[derive(Debug, Clone)]
pub struct NeumannSpectrum<S> {
    n: usize,
    spacing: S,
    /// Eigenvalues of `-L`, ascending, first is zero.
    eigenvalues: Vec<S>,
    /// Row `k` holds mode `k` sampled at the cell centers.
    modes: Vec<Vec<S>>,
    /// Discrete squared norms of the modes.
    norms2: Vec<S>,
}

impl<S: Scalar> NeumannSpectrum<S> {
    pub fn new(grid: &Grid1D<S>) -> Self {
        let n = grid.n_cells();
        let h = grid.spacing();
        let nn = S::from_count(n);
        let four_over_h2 = S::lit(4.0) / (h * h);
        let pi = S::PI();
        let eigenvalues = (0..n)
            .map(|k| {
                let s = (S::from_count(k) * pi / (S::lit(2.0) * nn)).sin();
                four_over_h2 * s * s
            })
            .collect();
        let modes: Vec<Vec<S>> = (0..n)
            .map(|k| {
                grid.centers()
                    .iter()
                    .map(|&x| (S::from_count(k) * pi * x).cos())
                    .collect()
            })
            .collect();
        let norms2 = modes.iter().map(|m| dot(m, m) * h).collect();
        Self {
            n,
            spacing: h,
            eigenvalues,
            modes,
            norms2,
        }
    }

    /// Eigenvalues of `-L` (nonnegative, ascending).
    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    /// Smallest nonzero eigenvalue of `-L`; tends to `π²` under refinement.
    pub fn lambda1(&self) -> S {
        self.eigenvalues[1]
    }

    pub fn project(&self, u: &[S]) -> Vec<S> {
        assert_eq!(u.len(), self.n);
        self.modes
            .iter()
            .zip(&self.norms2)
            .map(|(m, &n2)| dot(m, u) * self.spacing / n2)
            .collect()
    }

    pub fn synthesize(&self, coeffs: &[S]) -> Vec<S> {
        let mut u = vec![S::zero(); self.n];
        for (m, &c) in self.modes.iter().zip(coeffs) {
            if c == S::zero() {
                continue;
            }
            for (ui, &mi) in u.iter_mut().zip(m) {
                *ui = *ui + c * mi;
            }
        }
        u
    }

    /// Discrete `L²` norm of the field with the given modal coefficients.
    pub fn norm_of(&self, coeffs: &[S]) -> S {
        coeffs
            .iter()
            .zip(&self.norms2)
            .map(|(&c, &n2)| c * c * n2)
            .sum::<S>()
            .sqrt()
    }

    /// `exp(tσL) u`, exact in time.
    pub fn semigroup(&self, u: &[S], sigma_t: S) -> Vec<S> {
        let c: Vec<S> = self
            .project(u)
            .into_iter()
            .zip(&self.eigenvalues)
            .map(|(c, &lam)| c * (-lam * sigma_t).exp())
            .collect();
        self.synthesize(&c)
    }
}
