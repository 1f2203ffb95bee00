use super::{check_sigma, CoefficientField, ControlField, SpaceTime, StepOperator, Trajectory};
use crate::error::{Error, Result};
use crate::mesh::{Grid1D, TimeGrid};
use crate::scalar::Scalar;

/// Sequence of step operators, refactorized only when coefficients vary in time.
struct Stepper<'a, S: Scalar> {
    grid: &'a Grid1D<S>,
    dt: S,
    sigma: S,
    coeffs: &'a CoefficientField<S>,
    cached: Option<StepOperator<S>>,
}

impl<'a, S: Scalar> Stepper<'a, S> {
    fn new(
        grid: &'a Grid1D<S>,
        tgrid: &TimeGrid<S>,
        sigma: S,
        coeffs: &'a CoefficientField<S>,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        coeffs.check_shape(tgrid, grid)?;
        let product = tgrid.dt() * coeffs.max_sup_norm();
        if !(product < S::lit(0.5)) {
            return Err(Error::StepTooLarge {
                product: product.to_f64_lossy(),
            });
        }
        Ok(Self {
            grid,
            dt: tgrid.dt(),
            sigma,
            coeffs,
            cached: None,
        })
    }

    /// Operator for the step `t_m → t_{m+1}`.
    fn operator(&mut self, m: usize) -> Result<&StepOperator<S>> {
        if self.cached.is_none() || !self.coeffs.is_time_invariant() {
            self.cached = Some(StepOperator::new(
                self.grid,
                self.dt,
                self.sigma,
                self.coeffs.at(m + 1),
            )?);
        }
        Ok(self.cached.as_ref().unwrap())
    }
}

/// Implicit Euler for the linear coupled system; the control enters the
/// `y`-equation weighted by the `ω`-indicator.
pub fn solve_forward_linear<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
    coeffs: &CoefficientField<S>,
    control: &ControlField<S>,
    y0: &[S],
    z0: &[S],
) -> Result<Trajectory<S>> {
    grid.check_len(y0)?;
    grid.check_len(z0)?;
    control.check_shape(tgrid, grid)?;
    let mut stepper = Stepper::new(grid, tgrid, sigma, coeffs)?;
    let mut traj = Trajectory::new(grid, tgrid, sigma);
    traj.y.slice_mut(0).copy_from_slice(y0);
    traj.z.slice_mut(0).copy_from_slice(z0);
    let dt = tgrid.dt();
    let chi = grid.indicator();
    let mut y = y0.to_vec();
    let mut z = z0.to_vec();
    for m in 0..tgrid.n_steps() {
        for ((yi, &hi), &w) in y.iter_mut().zip(control.field().slice(m)).zip(chi) {
            *yi = *yi + dt * w * hi;
        }
        stepper.operator(m)?.solve(&mut y, &mut z);
        if !(y.iter().chain(&z).all(|v| v.is_finite())) {
            return Err(Error::NonFinite { step: m + 1 });
        }
        traj.y.slice_mut(m + 1).copy_from_slice(&y);
        traj.z.slice_mut(m + 1).copy_from_slice(&z);
    }
    Ok(traj)
}

/// Exact discrete adjoint of [`solve_forward_linear`]: the transpose of the
/// composed one-step maps, marched backward from `(φ_T, ψ_T)`.
///
/// Slice `m` of the result is `p^m = S_mᵀ⁻¹ (p^{m+1} + dt·F^m)` where `S_m` is
/// the forward step matrix for `t_m → t_{m+1}`; the transposed coupling puts
/// `a21` in front of `ψ` in the `φ`-equation. `source` rows are indexed by step.
pub fn solve_adjoint<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
    coeffs: &CoefficientField<S>,
    phi_t: &[S],
    psi_t: &[S],
    source: Option<(&SpaceTime<S>, &SpaceTime<S>)>,
) -> Result<Trajectory<S>> {
    march_backward(grid, tgrid, sigma, coeffs, phi_t, psi_t, source, true)
}

/// Backward march with the untransposed step, i.e. with `a12` and `a21`
/// exchanged in the coupling. Fault-injection counterpart of
/// [`solve_adjoint`] for duality tests; not an adjoint of anything.
#[doc(hidden)]
pub fn solve_adjoint_mismatched<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
    coeffs: &CoefficientField<S>,
    phi_t: &[S],
    psi_t: &[S],
) -> Result<Trajectory<S>> {
    march_backward(grid, tgrid, sigma, coeffs, phi_t, psi_t, None, false)
}

#[allow(clippy::too_many_arguments)]
fn march_backward<S: Scalar>(
    grid: &Grid1D<S>,
    tgrid: &TimeGrid<S>,
    sigma: S,
    coeffs: &CoefficientField<S>,
    phi_t: &[S],
    psi_t: &[S],
    source: Option<(&SpaceTime<S>, &SpaceTime<S>)>,
    transpose: bool,
) -> Result<Trajectory<S>> {
    grid.check_len(phi_t)?;
    grid.check_len(psi_t)?;
    if let Some((f1, f2)) = source {
        for f in [f1, f2] {
            if f.n_times() != tgrid.n_steps() || f.n_cells() != grid.n_cells() {
                return Err(Error::InvalidArgument(
                    "adjoint source must have one row per time step".into(),
                ));
            }
        }
    }
    let mut stepper = Stepper::new(grid, tgrid, sigma, coeffs)?;
    let mut traj = Trajectory::new(grid, tgrid, sigma);
    let big_m = tgrid.n_steps();
    traj.y.slice_mut(big_m).copy_from_slice(phi_t);
    traj.z.slice_mut(big_m).copy_from_slice(psi_t);
    let dt = tgrid.dt();
    let mut p = phi_t.to_vec();
    let mut q = psi_t.to_vec();
    for m in (0..big_m).rev() {
        if let Some((f1, f2)) = source {
            for (v, &s) in p.iter_mut().zip(f1.slice(m)) {
                *v = *v + dt * s;
            }
            for (v, &s) in q.iter_mut().zip(f2.slice(m)) {
                *v = *v + dt * s;
            }
        }
        let op = stepper.operator(m)?;
        if transpose {
            op.solve_transpose(&mut p, &mut q);
        } else {
            op.solve(&mut p, &mut q);
        }
        if !(p.iter().chain(&q).all(|v| v.is_finite())) {
            return Err(Error::NonFinite { step: m });
        }
        traj.y.slice_mut(m).copy_from_slice(&p);
        traj.z.slice_mut(m).copy_from_slice(&q);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{inner_product, l2_norm, mean_value};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, steps: usize, horizon: f64) -> (Grid1D<f64>, TimeGrid<f64>) {
        (
            Grid1D::new(n, (0.3, 0.7)).unwrap(),
            TimeGrid::new(horizon, steps).unwrap(),
        )
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn constants_are_preserved_without_coupling() {
        let (g, t) = setup(16, 20, 1.0);
        let c = CoefficientField::zeros(&t, 16);
        let h = ControlField::zeros(&t, &g);
        let tr = solve_forward_linear(&g, &t, 3.0, &c, &h, &g.constant(1.0), &g.constant(0.0)).unwrap();
        for m in 0..=20 {
            assert!(tr.y.slice(m).iter().all(|&v| (v - 1.0).abs() < 1e-13));
        }
        let adj = solve_adjoint(&g, &t, 3.0, &c, &g.constant(1.0), &g.constant(0.0), None).unwrap();
        assert!(adj.y.slice(0).iter().all(|&v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn zero_data_gives_zero() {
        let (g, t) = setup(12, 10, 1.0);
        let c = CoefficientField::constant(&t, 12, [1.0, -2.0, 0.5, 3.0]);
        let z = g.constant(0.0);
        let tr = solve_forward_linear(&g, &t, 2.0, &c, &ControlField::zeros(&t, &g), &z, &z).unwrap();
        assert_eq!(tr.y.sup_norm(), 0.0);
        assert_eq!(tr.z.sup_norm(), 0.0);
    }

    #[test]
    fn symmetric_data_stays_symmetric() {
        let (g, t) = setup(20, 30, 0.5);
        let c = CoefficientField::constant(&t, 20, [0.7, -0.3, -0.3, 0.7]);
        let u = g.sample(|x| (3.0 * x).sin() + x);
        let tr = solve_forward_linear(&g, &t, 1.0, &c, &ControlField::zeros(&t, &g), &u, &u).unwrap();
        for m in 0..=30 {
            for (a, b) in tr.y.slice(m).iter().zip(tr.z.slice(m)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mass_is_conserved_without_reaction_or_control() {
        let (g, t) = setup(40, 50, 1.0);
        let c = CoefficientField::zeros(&t, 40);
        let y0 = g.sample(|x| (-(x - 0.2).powi(2) * 40.0).exp());
        let z0 = g.sample(|x| x * x);
        let tr = solve_forward_linear(&g, &t, 50.0, &c, &ControlField::zeros(&t, &g), &y0, &z0).unwrap();
        let my = mean_value(&y0, &g).unwrap();
        let mz = mean_value(&z0, &g).unwrap();
        for m in 0..=50 {
            assert!((mean_value(tr.y.slice(m), &g).unwrap() - my).abs() <= 1e-12 * my.abs());
            assert!((mean_value(tr.z.slice(m), &g).unwrap() - mz).abs() <= 1e-12 * mz.abs());
        }
    }

    #[test]
    fn cosine_mode_decays_at_heat_rate() {
        let (g, t) = setup(400, 4000, 0.1);
        let c = CoefficientField::zeros(&t, 400);
        let y0 = g.sample(|x| (std::f64::consts::PI * x).cos());
        let tr = solve_forward_linear(&g, &t, 1.0, &c, &ControlField::zeros(&t, &g), &y0, &y0).unwrap();
        let ratio = l2_norm(tr.terminal().0, &g) / l2_norm(&y0, &g);
        let exact = (-std::f64::consts::PI.powi(2) * 0.1).exp();
        assert!((ratio - exact).abs() / exact < 0.01, "ratio {ratio}, exact {exact}");
    }

    #[test]
    fn backward_heat_is_a_contraction() {
        let (g, t) = setup(30, 40, 0.3);
        let c = CoefficientField::zeros(&t, 30);
        let phi = g.sample(|x| (5.0 * x).cos() + 0.2);
        let adj = solve_adjoint(&g, &t, 1.0, &c, &phi, &g.constant(0.0), None).unwrap();
        assert!(l2_norm(adj.y.slice(0), &g) <= l2_norm(&phi, &g));
        assert_eq!(adj.z.sup_norm(), 0.0);
    }

    #[test]
    fn adjoint_is_the_transpose_of_the_forward_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g, t) = setup(25, 30, 0.4);
        let n = 25;
        let fields: Vec<SpaceTime<f64>> = (0..4)
            .map(|_| SpaceTime::from_fn(31, n, |_, _| rng.gen_range(-3.0..3.0)))
            .collect();
        let c = CoefficientField::from_fields(
            fields[0].clone(),
            fields[1].clone(),
            fields[2].clone(),
            fields[3].clone(),
        )
        .unwrap();
        for sigma in [1.0, 100.0] {
            let (y0, z0) = (random_field(&mut rng, n), random_field(&mut rng, n));
            let (pt, qt) = (random_field(&mut rng, n), random_field(&mut rng, n));
            let fw = solve_forward_linear(&g, &t, sigma, &c, &ControlField::zeros(&t, &g), &y0, &z0).unwrap();
            let bw = solve_adjoint(&g, &t, sigma, &c, &pt, &qt, None).unwrap();
            let (yt, zt) = fw.terminal();
            let lhs = inner_product(yt, &pt, &g).unwrap() + inner_product(zt, &qt, &g).unwrap();
            let (p0, q0) = bw.initial();
            let rhs = inner_product(&y0, p0, &g).unwrap() + inner_product(&z0, q0, &g).unwrap();
            let scale = (l2_norm(&y0, &g).hypot(l2_norm(&z0, &g))) * (l2_norm(&pt, &g).hypot(l2_norm(&qt, &g)));
            assert!((lhs - rhs).abs() <= 1e-10 * scale, "sigma {sigma}: {lhs} vs {rhs}");

            let bad = solve_adjoint_mismatched(&g, &t, sigma, &c, &pt, &qt).unwrap();
            let (p0, q0) = bad.initial();
            let wrong = inner_product(&y0, p0, &g).unwrap() + inner_product(&z0, q0, &g).unwrap();
            assert!((lhs - wrong).abs() > 1e-6 * scale);
        }
    }

    #[test]
    fn rejects_large_steps_and_bad_shapes() {
        let (g, t) = setup(10, 4, 1.0);
        let c = CoefficientField::constant(&t, 10, [2.5, 0.0, 0.0, 0.0]);
        let z = g.constant(0.0);
        assert!(matches!(
            solve_forward_linear(&g, &t, 1.0, &c, &ControlField::zeros(&t, &g), &z, &z),
            Err(Error::StepTooLarge { .. })
        ));
        let c = CoefficientField::zeros(&t, 10);
        assert!(solve_forward_linear(&g, &t, 1.0, &c, &ControlField::zeros(&t, &g), &z[..5], &z).is_err());
        let t2 = TimeGrid::new(1.0, 5).unwrap();
        assert!(solve_forward_linear(&g, &t, 1.0, &c, &ControlField::zeros(&t2, &g), &z, &z).is_err());
    }

    #[test]
    fn large_sigma_decays_without_blowup() {
        let (g, t) = setup(50, 20, 1.0);
        let c = CoefficientField::zeros(&t, 50);
        let z0 = g.sample(|x| (std::f64::consts::PI * x).cos());
        let tr = solve_forward_linear(&g, &t, 1e4, &c, &ControlField::zeros(&t, &g), &z0, &z0).unwrap();
        assert!(tr.is_finite());
        let norms: Vec<f64> = (0..=20).map(|m| l2_norm(tr.z.slice(m), &g)).collect();
        // the round-off mean of the sampled cosine is conserved, not decayed
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{norms:?}");
        assert!(norms[20] < 1e-10);
    }

    #[test]
    fn first_order_in_time() {
        let g = Grid1D::new(40, (0.3, 0.7)).unwrap();
        let y0 = g.sample(|x| (std::f64::consts::PI * x).cos() + 0.3);
        let z0 = g.sample(|x| x * (1.0 - x));
        let run = |steps: usize| {
            let t = TimeGrid::new(0.2, steps).unwrap();
            let c = CoefficientField::constant(&t, 40, [0.5, 1.0, -1.0, 0.2]);
            solve_forward_linear(&g, &t, 2.0, &c, &ControlField::zeros(&t, &g), &y0, &z0).unwrap()
        };
        let reference = run(5120);
        let (ry, rz) = reference.terminal();
        let steps = [20usize, 40, 80, 160];
        let errs: Vec<f64> = steps
            .iter()
            .map(|&s| {
                let tr = run(s);
                let (y, z) = tr.terminal();
                let dy: Vec<f64> = y.iter().zip(ry).map(|(a, b)| a - b).collect();
                let dz: Vec<f64> = z.iter().zip(rz).map(|(a, b)| a - b).collect();
                l2_norm(&dy, &g).hypot(l2_norm(&dz, &g))
            })
            .collect();
        let xs: Vec<f64> = steps.iter().map(|&s| (0.2 / s as f64).ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = xs.iter().sum::<f64>() / 4.0;
        let my = ys.iter().sum::<f64>() / 4.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }
}
