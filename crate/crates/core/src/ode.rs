//! Implicit-Euler integration of the high-resolution ODE
//!
//! ```text
//! (s/τ) X' - s Fᵀ Y' = -Fᵀ Y - ∇f(X)
//! (s/σ) Y' - s F  X' =  F X  - ∇g*(Y)
//! ```
//!
//! whose implicit-Euler discretization at step `h = s` with `τ = σ = s` is the
//! fixed-step PDHG iteration. Only smooth problems (gradient oracles on both
//! terms) can be integrated.

use nalgebra::{DMatrix, DVector};

use crate::engine::{run, RunOptions};
use crate::error::{Error, Result};
use crate::lyapunov::lyapunov_fixed;
use crate::problem::{PrimalDualPair, SaddleProblem};
use crate::schedule::{make_schedule, Regime, ScheduleParams};

/// Newton stops once the implicit-Euler residual is this small.
pub const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub t: f64,
}

impl OdeState {
    pub fn new(x: DVector<f64>, y: DVector<f64>, t: f64) -> Self {
        OdeState { x, y, t }
    }

    pub fn from_pair(pair: &PrimalDualPair, t: f64) -> Self {
        OdeState { x: pair.x.clone(), y: pair.y.clone(), t }
    }

    pub fn pair(&self) -> PrimalDualPair {
        PrimalDualPair::new(self.x.clone(), self.y.clone())
    }
}

/// Scale and the two time constants of the ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeParams {
    pub s: f64,
    pub tau: f64,
    pub sigma: f64,
}

/// One-time setup of an integration: the block mass matrix and its checks.
struct Integrator<'a> {
    problem: &'a SaddleProblem,
    mass: DMatrix<f64>,
}

impl<'a> Integrator<'a> {
    fn new(problem: &'a SaddleProblem, params: OdeParams) -> Result<Self> {
        let OdeParams { s, tau, sigma } = params;
        for (name, v) in [("s", s), ("tau", tau), ("sigma", sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("must be finite and > 0, got {v}") });
            }
        }
        let (d1, d2) = (problem.d1(), problem.d2());
        let f = problem.coupling();
        let mut mass = DMatrix::zeros(d1 + d2, d1 + d2);
        mass.view_mut((0, 0), (d1, d1)).fill_diagonal(s / tau);
        mass.view_mut((d1, d1), (d2, d2)).fill_diagonal(s / sigma);
        mass.view_mut((0, d1), (d1, d2)).copy_from(&(f.transpose() * -s));
        mass.view_mut((d1, 0), (d2, d1)).copy_from(&(f * -s));

        let eig = mass.clone().symmetric_eigen().eigenvalues;
        let largest = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smallest = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(smallest > 1e-12 * largest) {
            return Err(Error::Singular("mass matrix"));
        }
        Ok(Integrator { problem, mass })
    }

    fn gradients(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let gx = self.problem.f().gradient(x).ok_or(Error::MissingOracle("gradient_f"))?;
        let gy = self.problem.g_conj().gradient(y).ok_or(Error::MissingOracle("gradient_gstar"))?;
        Ok((gx, gy))
    }

    /// `G(z) = (-Fᵀy - ∇f(x), Fx - ∇g*(y))`.
    fn field(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let (d1, d2) = (self.problem.d1(), self.problem.d2());
        let f = self.problem.coupling();
        let x = z.rows(0, d1).into_owned();
        let y = z.rows(d1, d2).into_owned();
        let (gx, gy) = self.gradients(&x, &y)?;
        let mut out = DVector::zeros(d1 + d2);
        out.rows_mut(0, d1).copy_from(&(-f.tr_mul(&y) - gx));
        out.rows_mut(d1, d2).copy_from(&(f * &x - gy));
        Ok(out)
    }

    /// Jacobian of `G`, with the gradient Hessians by central differences.
    fn field_jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = z.len();
        let mut jac = DMatrix::zeros(n, n);
        let mut probe = z.clone();
        for j in 0..n {
            let h = 1e-6 * z[j].abs().max(1.0);
            probe[j] = z[j] + h;
            let plus = self.field(&probe)?;
            probe[j] = z[j] - h;
            let minus = self.field(&probe)?;
            probe[j] = z[j];
            jac.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        Ok(jac)
    }

    fn step(&self, state: &OdeState, h: f64) -> Result<OdeState> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter { name: "h", reason: format!("must be finite and >= 0, got {h}") });
        }
        if h == 0.0 {
            return Ok(state.clone());
        }
        let (d1, d2) = (self.problem.d1(), self.problem.d2());
        if state.x.len() != d1 || state.y.len() != d2 {
            return Err(Error::DimensionMismatch(format!(
                "state is ({}, {}), problem is ({d1}, {d2})",
                state.x.len(),
                state.y.len()
            )));
        }
        let z0 = stack(&state.x, &state.y);
        let residual = |z: &DVector<f64>| -> Result<DVector<f64>> { Ok(&self.mass * (z - &z0) - self.field(z)? * h) };

        let mut z = z0.clone();
        let mut r = residual(&z)?;
        let mut iter = 0;
        while r.norm() > NEWTON_TOL {
            if iter == NEWTON_MAX_ITER || !r.norm().is_finite() {
                return Err(Error::NewtonFailed { residual: r.norm() });
            }
            let jac = &self.mass - self.field_jacobian(&z)? * h;
            let delta = jac.lu().solve(&r).ok_or(Error::Singular("implicit-Euler Jacobian"))?;
            z -= delta;
            r = residual(&z)?;
            iter += 1;
        }
        Ok(OdeState { x: z.rows(0, d1).into_owned(), y: z.rows(d1, d2).into_owned(), t: state.t + h })
    }
}

fn stack(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + y.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), y.len()).copy_from(y);
    z
}

/// One implicit-Euler step: solve `M (z_new - z)/h = G(z_new)` by Newton.
pub fn hires_ode_step(state: &OdeState, h: f64, params: OdeParams, problem: &SaddleProblem) -> Result<OdeState> {
    Integrator::new(problem, params)?.step(state, h)
}

/// `⌈horizon / h⌉` implicit-Euler steps. The returned path starts with `init`.
pub fn integrate(
    init: &OdeState,
    horizon: f64,
    h: f64,
    params: OdeParams,
    problem: &SaddleProblem,
) -> Result<Vec<OdeState>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be finite and > 0, got {horizon}"),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter { name: "h", reason: format!("must be > 0, got {h}") });
    }
    let integrator = Integrator::new(problem, params)?;
    let steps = step_count(horizon, h);
    let mut path = Vec::with_capacity(steps + 1);
    path.push(init.clone());
    for _ in 0..steps {
        let next = integrator.step(path.last().unwrap(), h)?;
        path.push(next);
    }
    Ok(path)
}

/// `⌈horizon / h⌉`, forgiving the rounding in ratios like `10 / 0.1`.
fn step_count(horizon: f64, h: f64) -> usize {
    let ratio = horizon / h;
    (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0) as usize
}

/// `E(t) = ‖X - x*‖²/(2τ) + ‖Y - y*‖²/(2σ) - <F(X - x*), Y - y*>`.
pub fn continuous_lyapunov(
    x: &DVector<f64>,
    y: &DVector<f64>,
    saddle: &PrimalDualPair,
    tau: f64,
    sigma: f64,
    f: &DMatrix<f64>,
) -> f64 {
    lyapunov_fixed(x, y, saddle, tau, sigma, f)
}

/// `sup_k ‖(x_k, y_k) - (X(ks), Y(ks))‖` over `ks <= horizon`, comparing
/// fixed-step PDHG with `τ = σ = s` against a reference ODE path integrated
/// at `h = s / refine`.
pub fn discretization_gap(
    problem: &SaddleProblem,
    init: &PrimalDualPair,
    s: f64,
    horizon: f64,
    refine: usize,
) -> Result<f64> {
    if refine == 0 {
        return Err(Error::InvalidParameter { name: "refine", reason: "must be >= 1".into() });
    }
    let f_norm = problem.coupling_norm()?;
    let params = ScheduleParams {
        s: Some(s),
        tau: Some(s),
        sigma: Some(s),
        mu: problem.mu(),
        gamma: problem.gamma(),
        ..Default::default()
    };
    let schedule = make_schedule(Regime::Fixed, &params, f_norm)?;
    let steps = step_count(horizon, s);
    let opts = RunOptions { budget: steps as u64, tol: 0.0, record_every: 1 };
    let traj = run(problem, &schedule, init, opts)?;

    let mut iterates: Vec<PrimalDualPair> = Vec::with_capacity(steps + 1);
    iterates.push(init.clone());
    iterates.extend(traj.records.iter().map(|r| r.post_state()));
    // an exact fixed point ends the run early; the iterates stay there
    while iterates.len() < steps + 1 {
        iterates.push(iterates.last().unwrap().clone());
    }

    let ode_params = OdeParams { s, tau: s, sigma: s };
    let reference =
        integrate(&OdeState::from_pair(init, 0.0), steps as f64 * s, s / refine as f64, ode_params, problem)?;
    let mut gap = 0.0f64;
    for (k, it) in iterates.iter().enumerate() {
        let z = &reference[k * refine];
        let d = ((&it.x - &z.x).norm_squared() + (&it.y - &z.y).norm_squared()).sqrt();
        gap = gap.max(d);
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::pdhg_step;
    use crate::prox::ShiftedQuadratic;
    use crate::schedule::StepParams;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn quad(center: &[f64], modulus: f64) -> Arc<ShiftedQuadratic> {
        Arc::new(ShiftedQuadratic { center: DVector::from_row_slice(center), modulus })
    }

    fn scalar_problem(coupling: f64) -> SaddleProblem {
        SaddleProblem::new(DMatrix::from_element(1, 1, coupling), quad(&[0.0], 1.0), quad(&[0.0], 1.0), 1.0, 1.0)
            .unwrap()
    }

    fn state(x: f64, y: f64) -> OdeState {
        OdeState::new(DVector::from_element(1, x), DVector::from_element(1, y), 0.0)
    }

    #[test]
    fn decoupled_step_is_scalar_implicit_euler() {
        // F = 0, τ = σ = s: X' = -X, so one step maps X to X/(1 + h)
        let p = scalar_problem(0.0);
        let params = OdeParams { s: 0.3, tau: 0.3, sigma: 0.3 };
        let out = hires_ode_step(&state(2.0, -1.0), 0.1, params, &p).unwrap();
        assert_relative_eq!(out.x[0], 2.0 / 1.1, max_relative = 1e-10);
        assert_relative_eq!(out.y[0], -1.0 / 1.1, max_relative = 1e-10);
        assert_relative_eq!(out.t, 0.1);

        // general time constant: (s/τ) X' = -X gives X/(1 + hτ/s)
        let params = OdeParams { s: 0.5, tau: 0.25, sigma: 1.0 };
        let out = hires_ode_step(&state(1.0, 1.0), 0.2, params, &p).unwrap();
        assert_relative_eq!(out.x[0], 1.0 / 1.1, max_relative = 1e-10);
        assert_relative_eq!(out.y[0], 1.0 / 1.4, max_relative = 1e-10);
    }

    #[test]
    fn equilibrium_and_zero_step_are_fixed() {
        let p = scalar_problem(0.5);
        let params = OdeParams { s: 1.0, tau: 1.0, sigma: 1.0 };
        let eq = state(0.0, 0.0);
        assert_eq!(hires_ode_step(&eq, 0.3, params, &p).unwrap().x, eq.x);
        let z = state(1.0, 2.0);
        assert_eq!(hires_ode_step(&z, 0.0, params, &p).unwrap(), z);
        assert!(hires_ode_step(&z, -0.1, params, &p).is_err());
    }

    #[test]
    fn singular_mass_matrix_is_reported() {
        // s‖F‖ = 1 with τ = σ = s
        let p = scalar_problem(1.0);
        let params = OdeParams { s: 1.0, tau: 1.0, sigma: 1.0 };
        assert_eq!(hires_ode_step(&state(1.0, 1.0), 0.1, params, &p), Err(Error::Singular("mass matrix")));
    }

    #[test]
    fn step_at_h_equal_s_is_a_pdhg_step() {
        let p = SaddleProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.6, -0.2, 0.3, 0.4]),
            quad(&[1.0, -2.0], 1.5),
            quad(&[0.5, 0.0], 0.7),
            1.5,
            0.7,
        )
        .unwrap();
        let s = 0.8;
        let x = DVector::from_row_slice(&[0.3, 0.1]);
        let y = DVector::from_row_slice(&[-1.0, 2.0]);
        let pdhg = pdhg_step(&p, &x, &y, &x, StepParams { tau: s, sigma: s, theta: 1.0 }).unwrap();
        let ode = hires_ode_step(&OdeState::new(x, y, 0.0), s, OdeParams { s, tau: s, sigma: s }, &p).unwrap();
        assert!((pdhg.x_next - ode.x).amax() < 1e-9);
        assert!((pdhg.y_next - ode.y).amax() < 1e-9);
    }

    #[test]
    fn integrate_counts_steps() {
        let p = scalar_problem(0.5);
        let params = OdeParams { s: 1.0, tau: 1.0, sigma: 1.0 };
        assert_eq!(integrate(&state(1.0, 0.0), 0.1, 0.1, params, &p).unwrap().len(), 2);
        assert_eq!(integrate(&state(1.0, 0.0), 10.0, 0.1, params, &p).unwrap().len(), 101);
        assert_eq!(integrate(&state(1.0, 0.0), 1.05, 0.1, params, &p).unwrap().len(), 12);
        let flat = integrate(&state(0.0, 0.0), 1.0, 0.25, params, &p).unwrap();
        assert!(flat.iter().all(|z| z.x[0] == 0.0 && z.y[0] == 0.0));
        assert!(integrate(&state(1.0, 0.0), 0.0, 0.1, params, &p).is_err());
    }

    #[test]
    fn continuous_lyapunov_decreases_along_paths() {
        let p = scalar_problem(0.5);
        let saddle = PrimalDualPair::zeros(1, 1);
        assert_relative_eq!(
            continuous_lyapunov(
                &DVector::from_element(1, 1.0),
                &DVector::from_element(1, 1.0),
                &saddle,
                1.0,
                1.0,
                p.coupling()
            ),
            0.5
        );
        let params = OdeParams { s: 1.0, tau: 1.0, sigma: 1.0 };
        let path = integrate(&state(3.0, -2.0), 5.0, 0.01, params, &p).unwrap();
        let energy: Vec<f64> =
            path.iter().map(|z| continuous_lyapunov(&z.x, &z.y, &saddle, 1.0, 1.0, p.coupling())).collect();
        assert!(energy.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    }

    #[test]
    fn gap_shrinks_with_the_step_scale() {
        let p = scalar_problem(0.8);
        let init = PrimalDualPair::new(DVector::from_element(1, 1.0), DVector::from_element(1, -1.0));
        let coarse = discretization_gap(&p, &init, 0.1, 5.0, 20).unwrap();
        let fine = discretization_gap(&p, &init, 0.05, 5.0, 20).unwrap();
        assert!(fine < 0.7 * coarse, "{fine} vs {coarse}");
    }
}
