use crate::error::{Error, Result};
use crate::mesh::{DiscreteOperator, Grid1D};
use crate::scalar::Scalar;

type Block<S> = [S; 4];

#[inline]
fn inv2<S: Scalar>(b: &Block<S>) -> Option<Block<S>> {
    let det = b[0] * b[3] - b[1] * b[2];
    let scale = b.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    if !det.is_finite() || det.abs() <= S::lit(16.0) * S::epsilon() * scale * scale {
        return None;
    }
    Some([b[3] / det, -b[1] / det, -b[2] / det, b[0] / det])
}

#[inline]
fn mul2v<S: Scalar>(b: &Block<S>, v: [S; 2], transpose: bool) -> [S; 2] {
    if transpose {
        [b[0] * v[0] + b[2] * v[1], b[1] * v[0] + b[3] * v[1]]
    } else {
        [b[0] * v[0] + b[1] * v[1], b[2] * v[0] + b[3] * v[1]]
    }
}

/// Factorized one-step map `I - dt·A` of the coupled implicit Euler scheme,
/// where
///
/// ```text
/// A = [ L + a11   a12      ]
///     [ a21       σL + a22 ]
/// ```
///
/// Stored with the two unknowns of each cell interleaved, which makes the
/// matrix block tridiagonal with 2×2 blocks; the block Thomas factors are
/// reused for both the forward system and its transpose.
#[derive(Debug, Clone)]
pub struct StepOperator<S> {
    n: usize,
    dt: S,
    sigma: S,
    diag: Vec<Block<S>>,
    /// Neighbour coupling `diag(-dt/h², -dt·σ/h²)`.
    off: [S; 2],
    /// `dt·a` per cell.
    coupling: Vec<Block<S>>,
    pivots_inv: Vec<Block<S>>,
}

impl<S: Scalar> StepOperator<S> {
    /// `coeffs` are the four coefficient slices at the new time level.
    pub fn new(grid: &Grid1D<S>, dt: S, sigma: S, coeffs: [&[S]; 4]) -> Result<Self> {
        let n = grid.n_cells();
        for c in coeffs {
            grid.check_len(c)?;
        }
        if !(dt > S::zero()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        super::check_sigma(sigma)?;
        let h = grid.spacing();
        let inv_h2 = S::one() / (h * h);
        let [a11, a12, a21, a22] = coeffs;
        let diag: Vec<Block<S>> = (0..n)
            .map(|i| {
                let neighbours = S::from_count(usize::from(i > 0) + usize::from(i + 1 < n));
                let lii = -neighbours * inv_h2;
                [
                    S::one() - dt * (lii + a11[i]),
                    -dt * a12[i],
                    -dt * a21[i],
                    S::one() - dt * (sigma * lii + a22[i]),
                ]
            })
            .collect();
        let off = [-dt * inv_h2, -dt * sigma * inv_h2];
        let coupling = (0..n)
            .map(|i| [dt * a11[i], dt * a12[i], dt * a21[i], dt * a22[i]])
            .collect();

        let mut pivots_inv = Vec::with_capacity(n);
        let mut prev: Option<Block<S>> = None;
        for (i, d) in diag.iter().enumerate() {
            let mut p = *d;
            if let Some(q) = prev {
                // P_i = D_i - C P_{i-1}^{-1} C with C diagonal
                p[0] = p[0] - off[0] * q[0] * off[0];
                p[1] = p[1] - off[0] * q[1] * off[1];
                p[2] = p[2] - off[1] * q[2] * off[0];
                p[3] = p[3] - off[1] * q[3] * off[1];
            }
            let pinv = inv2(&p).ok_or(Error::SingularStep { cell: i })?;
            pivots_inv.push(pinv);
            prev = Some(pinv);
        }
        Ok(Self {
            n,
            dt,
            sigma,
            diag,
            off,
            coupling,
            pivots_inv,
        })
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    /// Solves `(I - dt·A) [y; z] = [ry; rz]` in place.
    ///
    /// One step of iterative refinement follows the direct solve, with the
    /// residual formed from differences so that data in the kernel of `A`
    /// (constants without coupling) pass through to round-off.
    pub fn solve(&self, y: &mut [S], z: &mut [S]) {
        self.solve_refined(y, z, false);
    }

    /// Solves `(I - dt·A)ᵀ [φ; ψ] = [rφ; rψ]` in place.
    pub fn solve_transpose(&self, y: &mut [S], z: &mut [S]) {
        self.solve_refined(y, z, true);
    }

    fn solve_refined(&self, y: &mut [S], z: &mut [S], transpose: bool) {
        let (by, bz) = (y.to_vec(), z.to_vec());
        self.sweep(y, z, transpose);
        // r = b - x + dt·A x
        let (mut ry, mut rz) = self.dt_a(y, z, transpose);
        for i in 0..self.n {
            ry[i] = ry[i] + (by[i] - y[i]);
            rz[i] = rz[i] + (bz[i] - z[i]);
        }
        self.sweep(&mut ry, &mut rz, transpose);
        for (v, d) in y.iter_mut().zip(ry) {
            *v = *v + d;
        }
        for (v, d) in z.iter_mut().zip(rz) {
            *v = *v + d;
        }
    }

    /// `dt·A` (or its transpose) applied to `[y; z]`.
    fn dt_a(&self, y: &[S], z: &[S], transpose: bool) -> (Vec<S>, Vec<S>) {
        let n = self.n;
        let mut oy = Vec::with_capacity(n);
        let mut oz = Vec::with_capacity(n);
        for i in 0..n {
            let mut ly = S::zero();
            let mut lz = S::zero();
            if i > 0 {
                ly = ly + (y[i - 1] - y[i]);
                lz = lz + (z[i - 1] - z[i]);
            }
            if i + 1 < n {
                ly = ly + (y[i + 1] - y[i]);
                lz = lz + (z[i + 1] - z[i]);
            }
            let k = mul2v(&self.coupling[i], [y[i], z[i]], transpose);
            oy.push(k[0] - self.off[0] * ly);
            oz.push(k[1] - self.off[1] * lz);
        }
        (oy, oz)
    }

    fn sweep(&self, y: &mut [S], z: &mut [S], transpose: bool) {
        let n = self.n;
        let c = self.off;
        // forward elimination: g_i = b_i - C P_{i-1}^{-1} g_{i-1}
        for i in 1..n {
            let w = mul2v(&self.pivots_inv[i - 1], [y[i - 1], z[i - 1]], transpose);
            y[i] = y[i] - c[0] * w[0];
            z[i] = z[i] - c[1] * w[1];
        }
        let last = mul2v(&self.pivots_inv[n - 1], [y[n - 1], z[n - 1]], transpose);
        y[n - 1] = last[0];
        z[n - 1] = last[1];
        for i in (0..n - 1).rev() {
            let r = [y[i] - c[0] * y[i + 1], z[i] - c[1] * z[i + 1]];
            let x = mul2v(&self.pivots_inv[i], r, transpose);
            y[i] = x[0];
            z[i] = x[1];
        }
    }

    /// `(I - dt·A)` applied to `[y; z]`.
    pub fn apply(&self, y: &[S], z: &[S]) -> (Vec<S>, Vec<S>) {
        let n = self.n;
        let mut oy = vec![S::zero(); n];
        let mut oz = vec![S::zero(); n];
        for i in 0..n {
            let d = &self.diag[i];
            let mut vy = d[0] * y[i] + d[1] * z[i];
            let mut vz = d[2] * y[i] + d[3] * z[i];
            if i > 0 {
                vy = vy + self.off[0] * y[i - 1];
                vz = vz + self.off[1] * z[i - 1];
            }
            if i + 1 < n {
                vy = vy + self.off[0] * y[i + 1];
                vz = vz + self.off[1] * z[i + 1];
            }
            oy[i] = vy;
            oz[i] = vz;
        }
        (oy, oz)
    }

    /// The `2n × 2n` system matrix in `[y; z]` block ordering.
    pub fn system_matrix(&self) -> DiscreteOperator<S> {
        let n = self.n;
        let mut t = Vec::with_capacity(8 * n);
        for i in 0..n {
            let d = &self.diag[i];
            t.push((i, i, d[0]));
            t.push((i, n + i, d[1]));
            t.push((n + i, i, d[2]));
            t.push((n + i, n + i, d[3]));
            for j in [i.wrapping_sub(1), i + 1] {
                if j < n {
                    t.push((i, j, self.off[0]));
                    t.push((n + i, n + j, self.off[1]));
                }
            }
        }
        DiscreteOperator::from_triplets(2 * n, t, false)
    }
}

/// Factorized `I - dt·s·L` for a scalar Neumann heat step with diffusivity `s`.
#[derive(Debug, Clone)]
pub struct Tridiagonal<S> {
    /// `-dt·s/h²`.
    lower: S,
    /// Modified diagonal after elimination.
    pivots: Vec<S>,
}

impl<S: Scalar> Tridiagonal<S> {
    pub fn heat_step(grid: &Grid1D<S>, dt: S, diffusivity: S) -> Self {
        let n = grid.n_cells();
        let h = grid.spacing();
        let r = dt * diffusivity / (h * h);
        let off = -r;
        let mut pivots = Vec::with_capacity(n);
        for i in 0..n {
            let neighbours = S::from_count(usize::from(i > 0) + usize::from(i + 1 < n));
            let mut d = S::one() + neighbours * r;
            if i > 0 {
                d = d - off * off / pivots[i - 1];
            }
            pivots.push(d);
        }
        Self { lower: off, pivots }
    }

    /// Direct solve followed by one refinement step, as in [`StepOperator::solve`].
    pub fn solve(&self, b: &mut [S]) {
        let n = self.pivots.len();
        let rhs = b.to_vec();
        self.sweep(b);
        let mut r: Vec<S> = (0..n)
            .map(|i| {
                let mut l = S::zero();
                if i > 0 {
                    l = l + (b[i - 1] - b[i]);
                }
                if i + 1 < n {
                    l = l + (b[i + 1] - b[i]);
                }
                (rhs[i] - b[i]) - self.lower * l
            })
            .collect();
        self.sweep(&mut r);
        for (v, d) in b.iter_mut().zip(r) {
            *v = *v + d;
        }
    }

    fn sweep(&self, b: &mut [S]) {
        let n = self.pivots.len();
        for i in 1..n {
            b[i] = b[i] - self.lower / self.pivots[i - 1] * b[i - 1];
        }
        b[n - 1] = b[n - 1] / self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - self.lower * b[i + 1]) / self.pivots[i];
        }
    }
}
