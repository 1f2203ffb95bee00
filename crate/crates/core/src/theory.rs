//! Closed-form ingredients of the observability estimate: the auxiliary
//! function `η⁰`, the singular Carleman weights built on it, the constants
//! `K` and `K̃`, and sampled checks of the weight inequalities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Grid1D;

/// Samples used when verifying `η⁰` on top of the grid centers.
const DENSE_SAMPLES: usize = 20_001;

/// `η⁰(x) = u(1 - u)` with `u(x) = x + κ x (1 - x)`.
///
/// `u` is an increasing bijection of `[0, 1]` for `|κ| < 1` and maps the
/// designated point `c` to `½`, so `η⁰` vanishes at both ends, is positive
/// inside, has `c` as its only critical point and `‖η⁰‖∞ = ¼`. Unlike
/// `x²(1-x)²`-type profiles its slope is nonzero at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eta0 {
    pub kappa: f64,
    pub critical_point: f64,
    pub interior: (f64, f64),
}

impl Eta0 {
    fn u(&self, x: f64) -> f64 {
        x + self.kappa * x * (1.0 - x)
    }

    pub fn value(&self, x: f64) -> f64 {
        let u = self.u(x);
        u * (1.0 - u)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let du = 1.0 + self.kappa * (1.0 - 2.0 * x);
        (1.0 - 2.0 * self.u(x)) * du
    }

    /// `‖η⁰‖∞`, attained at the critical point.
    pub fn max(&self) -> f64 {
        0.25
    }

    pub fn sample(&self, grid: &Grid1D<f64>) -> Vec<f64> {
        grid.sample(|x| self.value(x))
    }

    /// Smallest `|η⁰'|` over dense samples of `[0, 1]` outside `interior`.
    pub fn min_slope_outside(&self) -> f64 {
        let (a, b) = self.interior;
        (0..DENSE_SAMPLES)
            .map(|j| j as f64 / (DENSE_SAMPLES - 1) as f64)
            .filter(|&x| x <= a || x >= b)
            .map(|x| self.derivative(x).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds `η⁰` whose critical point sits in `interior ⊂⊂ (0, 1)` and checks
/// positivity, the boundary zeros and the slope bound outside `interior` on
/// the grid centers and on a dense sample of `[0, 1]`.
pub fn eta0_1d(grid: &Grid1D<f64>, interior: (f64, f64)) -> Result<Eta0> {
    let (a, b) = interior;
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::Eta0(format!(
            "interior ({a}, {b}) must be compactly contained in (0, 1)"
        )));
    }
    let margin = 0.25 * (b - a);
    let c = 0.5f64.clamp(a + margin, b - margin);
    let kappa = (0.5 - c) / (c * (1.0 - c));
    if kappa.abs() >= 1.0 {
        return Err(Error::Eta0(format!(
            "critical point {c} too far from 1/2 for a monotone reparametrization"
        )));
    }
    let eta = Eta0 {
        kappa,
        critical_point: c,
        interior,
    };
    if eta.value(0.0) != 0.0 || eta.value(1.0).abs() > 1e-15 {
        return Err(Error::Eta0("boundary values are not zero".into()));
    }
    let dense = (1..DENSE_SAMPLES - 1).map(|j| j as f64 / (DENSE_SAMPLES - 1) as f64);
    if grid.centers().iter().copied().chain(dense).any(|x| !(eta.value(x) > 0.0)) {
        return Err(Error::Eta0("not positive in the open interval".into()));
    }
    if !(eta.min_slope_outside() > 0.0) {
        return Err(Error::Eta0(format!(
            "gradient vanishes outside ({a}, {b})"
        )));
    }
    Ok(eta)
}

/// `K` of the observability inequality and the energy constant `K̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservabilityConstants {
    pub k: f64,
    pub k_tilde: f64,
    pub horizon: f64,
    pub sup_norms: [f64; 4],
}

/// `K = 1 + 1/T + T Σ‖a_ij‖ + max‖a_ij‖^{2/3}`,
/// `K̃ = (Σ‖a_ij‖² + 1)(T + 1)`.
pub fn observability_constant(horizon: f64, sup_norms: [f64; 4]) -> Result<ObservabilityConstants> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if sup_norms.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
        return Err(Error::InvalidArgument("sup norms must be finite and nonnegative".into()));
    }
    let sum: f64 = sup_norms.iter().sum();
    let sum2: f64 = sup_norms.iter().map(|a| a * a).sum();
    let max = sup_norms.iter().fold(0.0f64, |m, &a| m.max(a));
    Ok(ObservabilityConstants {
        k: 1.0 + 1.0 / horizon + horizon * sum + max.powf(2.0 / 3.0),
        k_tilde: (sum2 + 1.0) * (horizon + 1.0),
        horizon,
        sup_norms,
    })
}

/// Carleman weights
/// `α = (e^{2λ‖η⁰‖∞} - e^{λη⁰}) / (t(T-t))`, `ξ_w = e^{λη⁰} / (t(T-t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlemanWeights {
    pub eta0: Eta0,
    pub lambda: f64,
    pub s: f64,
    pub horizon: f64,
    /// `max (e^{2λ‖η⁰‖∞} - e^{λη⁰})`.
    pub m_tilde_max: f64,
    /// `max e^{λη⁰}`.
    pub m_max: f64,
    /// `min (e^{2λ‖η⁰‖∞} - e^{λη⁰})`.
    pub m_tilde_min: f64,
    /// `min e^{λη⁰}`.
    pub m_min: f64,
}

impl CarlemanWeights {
    /// Weights with `s = s₀ (T + T² + T² max‖a_ij‖^{2/3})`, `s₀ = max(1, 1/(16 m₀))`.
    pub fn new(eta0: Eta0, lambda: f64, horizon: f64, sup_norms: [f64; 4]) -> Result<Self> {
        if !(lambda > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda and horizon must be positive, got {lambda}, {horizon}"
            )));
        }
        let m = eta0.max();
        let m_min = 1.0;
        let s0 = f64::max(1.0, 1.0 / (16.0 * m_min));
        let amax = sup_norms.iter().fold(0.0f64, |acc, &a| acc.max(a.abs()));
        let s = s0 * (horizon + horizon * horizon + horizon * horizon * amax.powf(2.0 / 3.0));
        Ok(Self {
            eta0,
            lambda,
            s,
            horizon,
            m_tilde_max: (2.0 * lambda * m).exp() - 1.0,
            m_max: (lambda * m).exp(),
            m_tilde_min: (2.0 * lambda * m).exp() - (lambda * m).exp(),
            m_min,
        })
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    fn time_factor(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "weights are singular outside (0, {}), got t = {t}",
                self.horizon
            )));
        }
        Ok(1.0 / (t * (self.horizon - t)))
    }

    /// `(α(t,x), ξ_w(t,x))` for `0 < t < T`.
    pub fn eval(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let tf = self.time_factor(t)?;
        let e = (self.lambda * self.eta0.value(x)).exp();
        let alpha = ((2.0 * self.lambda * self.eta0.max()).exp() - e) * tf;
        Ok((alpha, e * tf))
    }

    /// `α̂(t) = max_x α`.
    pub fn alpha_hat(&self, t: f64) -> Result<f64> {
        Ok(self.m_tilde_max * self.time_factor(t)?)
    }

    /// `α*(t) = min_x α`.
    pub fn alpha_star(&self, t: f64) -> Result<f64> {
        Ok(self.m_tilde_min * self.time_factor(t)?)
    }

    /// `ξ*(t) = max_x ξ_w`.
    pub fn xi_star(&self, t: f64) -> Result<f64> {
        Ok(self.m_max * self.time_factor(t)?)
    }

    /// `ξ̂(t) = min_x ξ_w`.
    pub fn xi_hat(&self, t: f64) -> Result<f64> {
        Ok(self.m_min * self.time_factor(t)?)
    }

    /// `λ‖η⁰‖∞ ≥ ln 2`, the exact form of `α̂ ≤ (1 + ½) α*`.
    pub fn lambda_threshold(&self) -> f64 {
        std::f64::consts::LN_2 / self.eta0.max()
    }
}

/// `(α, ξ_w)` at `(t, x)`; `t` must lie in `(0, T)`.
pub fn weight_eval(w: &CarlemanWeights, t: f64, x: f64) -> Result<(f64, f64)> {
    w.eval(t, x)
}

/// Outcome of the sampled weight inequalities. Violations are the largest
/// values of `lhs - rhs` (in logarithmic form for the exponential bounds),
/// relative to the size of the right-hand side; `≤ 1e-12` counts as holding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightReport {
    pub lambda: f64,
    pub s: f64,
    pub lambda_threshold: f64,
    pub n_samples: usize,
    /// `max_t sampled α̂ / α* - 3/2`.
    pub alpha_ratio_violation: f64,
    /// `s⁸ξ*⁸ e^{-4sα* + 2sα̂} ≤ (8M/(M̃_min e))⁸`.
    pub weight_product_violation: f64,
    /// `s³ξ_w³ e^{-2sα} ≥ e^{-C s/T²}/27` on `(T/4, 3T/4)`.
    pub middle_lower_violation: f64,
    /// Envelope sandwich `α* ≤ α ≤ α̂`, `ξ̂ ≤ ξ_w ≤ ξ*`.
    pub envelope_violation: f64,
    pub alpha_ratio_holds: bool,
    pub weight_product_holds: bool,
    pub middle_lower_holds: bool,
    pub envelope_holds: bool,
}

impl WeightReport {
    pub fn passed(&self) -> bool {
        self.alpha_ratio_holds && self.weight_product_holds && self.middle_lower_holds && self.envelope_holds
    }
}

const REL_TOL: f64 = 1e-12;

fn relative(excess: f64, scale: f64) -> f64 {
    excess / scale.abs().max(1.0)
}

/// Evaluates the weight inequalities on an `n_samples × n_samples` lattice of
/// `[0.01T, 0.99T] × [0, 1]`; the lower bound on `s³ξ_w³e^{-2sα}` is checked
/// on the `(T/4, 3T/4)` part only.
pub fn weight_inequality_checks(w: &CarlemanWeights, n_samples: usize) -> Result<WeightReport> {
    if n_samples < 3 {
        return Err(Error::InvalidArgument("need at least 3 samples per axis".into()));
    }
    let big_t = w.horizon;
    let s = w.s;
    let mut xs: Vec<f64> = (0..n_samples).map(|j| j as f64 / (n_samples - 1) as f64).collect();
    xs.push(w.eta0.critical_point);
    let ts = (0..n_samples).map(|j| big_t * (0.01 + 0.98 * j as f64 / (n_samples - 1) as f64));

    let ln_rhs_product = 8.0 * (8.0 * w.m_max / (w.m_tilde_min * std::f64::consts::E)).ln();
    let c_lower = 32.0 * w.m_tilde_max / 3.0;
    let ln_rhs_lower = -(27f64.ln()) - c_lower * s / (big_t * big_t);

    let (mut v_ratio, mut v_product, mut v_lower, mut venv) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in ts {
        let (a_hat, a_star) = (w.alpha_hat(t)?, w.alpha_star(t)?);
        let (x_star, x_hat) = (w.xi_star(t)?, w.xi_hat(t)?);
        let (mut smax, mut smin) = (f64::NEG_INFINITY, f64::INFINITY);
        let in_middle = t > 0.25 * big_t && t < 0.75 * big_t;
        for &x in &xs {
            let (alpha, xi) = w.eval(t, x)?;
            smax = smax.max(alpha);
            smin = smin.min(alpha);
            venv = venv
                .max(relative(a_star - alpha, alpha))
                .max(relative(alpha - a_hat, alpha))
                .max(relative(x_hat - xi, xi))
                .max(relative(xi - x_star, xi));
            if in_middle {
                let ln_lhs = 3.0 * (s * xi).ln() - 2.0 * s * alpha;
                v_lower = v_lower.max(relative(ln_rhs_lower - ln_lhs, ln_rhs_lower));
            }
        }
        v_ratio = v_ratio.max(smax / smin - 1.5);
        let ln_lhs_product = 8.0 * (s * x_star).ln() - 4.0 * s * a_star + 2.0 * s * a_hat;
        v_product = v_product.max(relative(ln_lhs_product - ln_rhs_product, ln_rhs_product));
    }
    Ok(WeightReport {
        lambda: w.lambda,
        s,
        lambda_threshold: w.lambda_threshold(),
        n_samples,
        alpha_ratio_violation: v_ratio,
        weight_product_violation: v_product,
        middle_lower_violation: v_lower,
        envelope_violation: venv,
        alpha_ratio_holds: v_ratio <= REL_TOL,
        weight_product_holds: v_product <= REL_TOL,
        middle_lower_holds: v_lower <= REL_TOL,
        envelope_holds: venv <= REL_TOL,
    })
}

/// Smallest power of two `λ` for which the sampled `α̂ ≤ (3/2) α*` holds.
pub fn default_lambda(eta0: Eta0, horizon: f64, sup_norms: [f64; 4], n_samples: usize) -> Result<f64> {
    for k in -10..=30 {
        let lambda = 2f64.powi(k);
        let w = CarlemanWeights::new(eta0, lambda, horizon, sup_norms)?;
        if weight_inequality_checks(&w, n_samples)?.alpha_ratio_holds {
            return Ok(lambda);
        }
    }
    Err(Error::InvalidArgument("no admissible lambda up to 2^30".into()))
}
