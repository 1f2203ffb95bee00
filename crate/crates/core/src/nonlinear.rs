//! Reaction terms `f(y, z)`, `g(y, z)` and a sampling checker for the
//! structural hypotheses the control theory relies on:
//!
//! * H1: `f`, `g` globally Lipschitz with constants `C_f`, `C_g`;
//! * H2: `f(0,0) = g(0,0) = 0`;
//! * H3: `∂g/∂y` keeps one sign along every ray `δ ↦ (δȳ, δz̄)`, `δ ∈ [0,1]`,
//!   and is bounded away from zero at the origin.
//!
//! Lipschitz constants are understood for the `ℓ¹` metric on the inputs,
//! so the quantity compared against `C_f` is `max(|∂f/∂y|, |∂f/∂z|)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::error::Error;
use crate::scalar::Scalar;

/// One scalar reaction term `ℝ² → ℝ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction<S> {
    Zero,
    /// `dy·y + dz·z`.
    Linear { dy: S, dz: S },
    /// `(y+z) / (1 + |y+z|^k)^{1/k}`.
    Sigmoid { k: S },
    /// `arctan(k (y+z))`.
    Arctan { k: S },
}

impl<S: Scalar> Reaction<S> {
    pub fn value(&self, y: S, z: S) -> S {
        match *self {
            Reaction::Zero => S::zero(),
            Reaction::Linear { dy, dz } => dy * y + dz * z,
            Reaction::Sigmoid { k } => {
                let u = y + z;
                u / (S::one() + u.abs().powf(k)).powf(S::one() / k)
            }
            Reaction::Arctan { k } => (k * (y + z)).atan(),
        }
    }

    /// `(∂/∂y, ∂/∂z)`.
    pub fn partials(&self, y: S, z: S) -> (S, S) {
        match *self {
            Reaction::Zero => (S::zero(), S::zero()),
            Reaction::Linear { dy, dz } => (dy, dz),
            Reaction::Sigmoid { k } => {
                // closed form stays finite at u = 0 for every k > 0
                let u = y + z;
                let d = (S::one() + u.abs().powf(k)).powf(-(S::one() / k) - S::one());
                (d, d)
            }
            Reaction::Arctan { k } => {
                let u = k * (y + z);
                let d = k / (S::one() + u * u);
                (d, d)
            }
        }
    }

    /// Declared Lipschitz constant.
    pub fn lipschitz(&self) -> S {
        match *self {
            Reaction::Zero => S::zero(),
            Reaction::Linear { dy, dz } => (dy * dy + dz * dz).sqrt(),
            Reaction::Sigmoid { .. } => S::one(),
            Reaction::Arctan { k } => k,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Reaction::Zero)
    }
}

/// Sigmoid reaction term, Lipschitz with constant 1.
pub fn sigmoid_family<S: Scalar>(k: S) -> Result<Reaction<S>, Error> {
    if !(k > S::zero()) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigmoid exponent must be positive, got {k}"
        )));
    }
    Ok(Reaction::Sigmoid { k })
}

/// `arctan(k(y+z))`, Lipschitz with constant `k`.
pub fn arctan_family<S: Scalar>(k: S) -> Result<Reaction<S>, Error> {
    if !(k > S::zero()) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "arctan slope must be positive, got {k}"
        )));
    }
    Ok(Reaction::Arctan { k })
}

/// The reaction pair `(f, g)` of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityPair<S> {
    pub f: Reaction<S>,
    pub g: Reaction<S>,
    /// `C_f`.
    pub lipschitz_f: S,
    /// `C_g`.
    pub lipschitz_g: S,
    /// Lower bound candidate for `|∂g/∂y|` at the origin.
    pub a21_floor: S,
    /// `±1`, the sign `∂g/∂y` keeps.
    pub a21_sign: S,
}

impl<S: Scalar> NonlinearityPair<S> {
    /// Unchecked pair; the coupling floor and sign are read off `∂g/∂y(0,0)`.
    pub fn new(f: Reaction<S>, g: Reaction<S>) -> Self {
        let (c, _) = g.partials(S::zero(), S::zero());
        Self {
            f,
            g,
            lipschitz_f: f.lipschitz(),
            lipschitz_g: g.lipschitz(),
            a21_floor: c.abs(),
            a21_sign: if c < S::zero() { -S::one() } else { S::one() },
        }
    }

    pub fn with_a21_floor(mut self, floor: S) -> Self {
        self.a21_floor = floor;
        self
    }

    #[inline]
    pub fn f(&self, y: S, z: S) -> S {
        self.f.value(y, z)
    }

    #[inline]
    pub fn g(&self, y: S, z: S) -> S {
        self.g.value(y, z)
    }

    pub fn df(&self, y: S, z: S) -> (S, S) {
        self.f.partials(y, z)
    }

    pub fn dg(&self, y: S, z: S) -> (S, S) {
        self.g.partials(y, z)
    }

    pub fn lipschitz_f(&self) -> S {
        self.lipschitz_f
    }

    pub fn lipschitz_g(&self) -> S {
        self.lipschitz_g
    }

    pub fn max_lipschitz(&self) -> S {
        self.lipschitz_f().max(self.lipschitz_g())
    }

    /// Constant partials `[a11, a12, a21, a22]` when both terms are linear.
    pub fn constant_jacobian(&self) -> Option<[S; 4]> {
        let lin = |r: &Reaction<S>| match *r {
            Reaction::Zero => Some((S::zero(), S::zero())),
            Reaction::Linear { dy, dz } => Some((dy, dz)),
            _ => None,
        };
        let (a, b) = lin(&self.f)?;
        let (c, d) = lin(&self.g)?;
        Some([a, b, c, d])
    }
}

/// `f = ay + bz`, `g = cy + dz`; `c ≠ 0` is the coupling condition.
pub fn linear_pair<S: Scalar>(a: S, b: S, c: S, d: S) -> Result<NonlinearityPair<S>, Error> {
    if c == S::zero() {
        return Err(Error::InvalidArgument(
            "linear pair needs c != 0 (the control reaches z only through c·y)".into(),
        ));
    }
    Ok(NonlinearityPair::new(
        Reaction::Linear { dy: a, dz: b },
        Reaction::Linear { dy: c, dz: d },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    H1,
    H2,
    H3,
    /// Analytic partials disagree with finite differences.
    Derivatives,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub box_halfwidth: f64,
    pub n_samples: usize,
    pub lipschitz_f: f64,
    pub lipschitz_g: f64,
    pub max_grad_f: f64,
    pub max_grad_g: f64,
    pub f_at_origin: f64,
    pub g_at_origin: f64,
    pub a21_sign: f64,
    pub a21_floor: f64,
    pub dg_dy_at_origin: f64,
    /// `min a21_sign · ∂g/∂y(δȳ, δz̄)` over samples and ray points.
    pub min_signed_dg_dy: f64,
    pub max_derivative_error: f64,
    pub deriv_tol: f64,
    pub violations: Vec<Hypothesis>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Error)]
pub enum HypothesisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hypotheses violated: {violated:?}")]
    Violated {
        violated: Vec<Hypothesis>,
        report: Box<HypothesisReport>,
    },
}

impl HypothesisError {
    pub fn report(&self) -> Option<&HypothesisReport> {
        match self {
            HypothesisError::Violated { report, .. } => Some(report),
            HypothesisError::InvalidArgument(_) => None,
        }
    }
}

const LIPSCHITZ_SLACK: f64 = 1e-8;
const RAY_POINTS: usize = 11;

/// Samples `n_samples` points uniformly in `[-R, R]²` and checks H1–H3 plus
/// the analytic partials against central differences.
pub fn check_hypotheses<S: Scalar>(
    pair: &NonlinearityPair<S>,
    box_halfwidth: S,
    n_samples: usize,
    deriv_tol: S,
    seed: u64,
) -> Result<HypothesisReport, HypothesisError> {
    if n_samples < 1000 {
        return Err(HypothesisError::InvalidArgument(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    if !(box_halfwidth > S::zero()) {
        return Err(HypothesisError::InvalidArgument(
            "box half-width must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = box_halfwidth.to_f64_lossy();
    let fd_step = S::lit(1e-5).max(S::epsilon().cbrt());
    let two = S::lit(2.0);

    let mut max_grad_f = S::zero();
    let mut max_grad_g = S::zero();
    let mut min_signed = S::infinity();
    let mut max_fd_err = S::zero();
    let zero = S::zero();
    let (dg_dy0, _) = pair.dg(zero, zero);

    for _ in 0..n_samples {
        let y = S::lit(rng.gen_range(-r..=r));
        let z = S::lit(rng.gen_range(-r..=r));

        let (fy, fz) = pair.df(y, z);
        let (gy, gz) = pair.dg(y, z);
        max_grad_f = max_grad_f.max(fy.abs()).max(fz.abs());
        max_grad_g = max_grad_g.max(gy.abs()).max(gz.abs());

        for j in 0..RAY_POINTS {
            let delta = S::from_count(j) / S::from_count(RAY_POINTS - 1);
            let (c, _) = pair.dg(delta * y, delta * z);
            min_signed = min_signed.min(pair.a21_sign * c);
        }

        let fd = |h: &dyn Fn(S, S) -> S| {
            (
                (h(y + fd_step, z) - h(y - fd_step, z)) / (two * fd_step),
                (h(y, z + fd_step) - h(y, z - fd_step)) / (two * fd_step),
            )
        };
        let (nfy, nfz) = fd(&|a, b| pair.f(a, b));
        let (ngy, ngz) = fd(&|a, b| pair.g(a, b));
        for err in [nfy - fy, nfz - fz, ngy - gy, ngz - gz] {
            max_fd_err = max_fd_err.max(err.abs());
        }
    }

    let mut violations = Vec::new();
    let slack = S::lit(LIPSCHITZ_SLACK);
    if max_grad_f > pair.lipschitz_f() + slack || max_grad_g > pair.lipschitz_g() + slack {
        violations.push(Hypothesis::H1);
    }
    let f0 = pair.f(zero, zero);
    let g0 = pair.g(zero, zero);
    if f0 != S::zero() || g0 != S::zero() {
        violations.push(Hypothesis::H2);
    }
    if !(min_signed > S::zero()) || !(pair.a21_floor > S::zero()) || dg_dy0.abs() < pair.a21_floor
    {
        violations.push(Hypothesis::H3);
    }
    if !(max_fd_err <= deriv_tol) {
        violations.push(Hypothesis::Derivatives);
    }

    let report = HypothesisReport {
        box_halfwidth: r,
        n_samples,
        lipschitz_f: pair.lipschitz_f().to_f64_lossy(),
        lipschitz_g: pair.lipschitz_g().to_f64_lossy(),
        max_grad_f: max_grad_f.to_f64_lossy(),
        max_grad_g: max_grad_g.to_f64_lossy(),
        f_at_origin: f0.to_f64_lossy(),
        g_at_origin: g0.to_f64_lossy(),
        a21_sign: pair.a21_sign.to_f64_lossy(),
        a21_floor: pair.a21_floor.to_f64_lossy(),
        dg_dy_at_origin: dg_dy0.to_f64_lossy(),
        min_signed_dg_dy: min_signed.to_f64_lossy(),
        max_derivative_error: max_fd_err.to_f64_lossy(),
        deriv_tol: deriv_tol.to_f64_lossy(),
        violations,
    };
    if report.passed() {
        Ok(report)
    } else {
        Err(HypothesisError::Violated {
            violated: report.violations.clone(),
            report: Box::new(report),
        })
    }
}
