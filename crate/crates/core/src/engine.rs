//! The PDHG iteration
//!
//! ```text
//! x_{k+1} = prox_{τ_k f}(x_k - τ_k Fᵀ y_k)
//! x̄_{k+1} = x_{k+1} + θ_k (x_{k+1} - x_k)
//! y_{k+1} = prox_{σ_k g*}(y_k + σ_k F x̄_{k+1})
//! ```
//!
//! driven by a [`Schedule`], with trajectory recording.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{PrimalDualPair, SaddleProblem};
use crate::schedule::{Schedule, StepParams};

/// `‖x‖ + ‖y‖` above which a run is abandoned.
pub const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x_next: DVector<f64>,
    pub x_bar: DVector<f64>,
    pub y_next: DVector<f64>,
}

/// One PDHG step. `x_prev` plays no role in the update and is accepted only so
/// callers can thread diagnostics state through a single call.
pub fn pdhg_step(
    problem: &SaddleProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    _x_prev: &DVector<f64>,
    params: StepParams,
) -> Result<StepOutput> {
    let StepParams { tau, sigma, theta } = params;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter { name: "tau", reason: format!("must be finite and > 0, got {tau}") });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter { name: "sigma", reason: format!("must be finite and > 0, got {sigma}") });
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter { name: "theta", reason: format!("must lie in [0, 1], got {theta}") });
    }
    if x.len() != problem.d1() || y.len() != problem.d2() {
        return Err(Error::DimensionMismatch(format!(
            "state has dims ({}, {}), problem expects ({}, {})",
            x.len(),
            y.len(),
            problem.d1(),
            problem.d2()
        )));
    }
    let f = problem.coupling();

    let x_next = problem.f().prox(&(x - f.tr_mul(y) * tau), tau);
    if x_next.len() != x.len() || !x_next.iter().all(|v| v.is_finite()) {
        return Err(Error::ProxFailure("f"));
    }
    let x_bar = &x_next + (&x_next - x) * theta;
    let y_next = problem.g_conj().prox(&(y + f * &x_bar * sigma), sigma);
    if y_next.len() != y.len() || !y_next.iter().all(|v| v.is_finite()) {
        return Err(Error::ProxFailure("g*"));
    }
    Ok(StepOutput { x_next, x_bar, y_next })
}

/// Everything known about step `k -> k+1`.
///
/// `x_prev`/`y_prev` are `x_{k-1}`/`y_{k-1}` so that the accelerated Lyapunov
/// function is evaluable from a single record. At the first step of a run they
/// equal the initial pair (for the accelerated regime, `x_0 := x_1` and `y_0`
/// is the user's initial dual point).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    pub params: StepParams,
    pub x_prev: DVector<f64>,
    pub y_prev: DVector<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub x_next: DVector<f64>,
    pub x_bar: DVector<f64>,
    pub y_next: DVector<f64>,
    /// `‖Δx/τ - FᵀΔy‖`: norm of an element of `∂f(x_{k+1}) + Fᵀy_{k+1}`.
    pub primal_residual: f64,
    /// `‖Δy/σ - θFΔx‖`: norm of an element of `∂g*(y_{k+1}) - F x_{k+1}`.
    pub dual_residual: f64,
}

impl StepRecord {
    pub fn post_state(&self) -> PrimalDualPair {
        PrimalDualPair::new(self.x_next.clone(), self.y_next.clone())
    }

    pub fn pre_state(&self) -> PrimalDualPair {
        PrimalDualPair::new(self.x.clone(), self.y.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Budget,
    ResidualTol,
    DivergenceGuard,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Budget => "budget",
            Termination::ResidualTol => "residual_tol",
            Termination::DivergenceGuard => "divergence_guard",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub initial: PrimalDualPair,
    pub schedule: Schedule,
    pub termination: Termination,
    pub steps: u64,
}

impl Trajectory {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("a trajectory holds at least one record")
    }

    pub fn final_state(&self) -> PrimalDualPair {
        self.last().post_state()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub budget: u64,
    pub tol: f64,
    pub record_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { budget: 1000, tol: 1e-10, record_every: 1 }
    }
}

/// Iterate PDHG from `init` until the budget is spent or both KKT residuals drop to `tol`.
///
/// For the accelerated regime `init` is read as `(x_1, y_0)` and a dual
/// half-step `y_1 = prox_{σ_0 g*}(y_0 + σ_0 F x_1)` precedes the first
/// iteration; this is the `k = 0` step with `θ_0 = τ_1/τ_0 = 0`.
pub fn run(
    problem: &SaddleProblem,
    schedule: &Schedule,
    init: &PrimalDualPair,
    opts: RunOptions,
) -> Result<Trajectory> {
    problem.check_pair(init)?;
    if opts.budget == 0 {
        return Err(Error::InvalidParameter { name: "budget", reason: "must be >= 1".into() });
    }
    if opts.record_every == 0 {
        return Err(Error::InvalidParameter { name: "record_every", reason: "must be >= 1".into() });
    }

    let f = problem.coupling();
    let mut x = init.x.clone();
    let mut x_prev = init.x.clone();
    let mut y_prev = init.y.clone();
    let mut y = match schedule.warmup_sigma() {
        Some(sigma0) => {
            let y1 = problem.g_conj().prox(&(&init.y + f * &init.x * sigma0), sigma0);
            if !y1.iter().all(|v| v.is_finite()) {
                return Err(Error::ProxFailure("g*"));
            }
            y1
        }
        None => init.y.clone(),
    };

    let k_start = schedule.k_start();
    let mut records = Vec::new();
    let mut termination = Termination::Budget;
    let mut steps = 0;
    for i in 0..opts.budget {
        let k = k_start + i;
        let params = schedule.at(k)?;
        let out = pdhg_step(problem, &x, &y, &x_prev, params)?;
        steps += 1;

        let dx = &out.x_next - &x;
        let dy = &out.y_next - &y;
        let primal_residual = (&dx / params.tau - f.tr_mul(&dy)).norm();
        let dual_residual = (&dy / params.sigma - f * &dx * params.theta).norm();

        let diverged = !(out.x_next.norm() + out.y_next.norm() <= DIVERGENCE_GUARD);
        let converged = primal_residual.max(dual_residual) <= opts.tol;
        let last = i + 1 == opts.budget;
        if i % opts.record_every == 0 || last || converged || diverged {
            records.push(StepRecord {
                k,
                params,
                x_prev: x_prev.clone(),
                y_prev: y_prev.clone(),
                x: x.clone(),
                y: y.clone(),
                x_next: out.x_next.clone(),
                x_bar: out.x_bar,
                y_next: out.y_next.clone(),
                primal_residual,
                dual_residual,
            });
        }
        if diverged {
            termination = Termination::DivergenceGuard;
            break;
        }
        if converged {
            termination = Termination::ResidualTol;
            break;
        }
        x_prev = std::mem::replace(&mut x, out.x_next);
        y_prev = std::mem::replace(&mut y, out.y_next);
    }

    Ok(Trajectory { records, initial: init.clone(), schedule: *schedule, termination, steps })
}

/// Step-inclusion residuals of a record, evaluated through the problem's
/// subdifferential oracles:
/// `r_x = dist(0, ∂f(x_{k+1}) + Fᵀy_k + (x_{k+1} - x_k)/τ_k)` and
/// `r_y = dist(0, ∂g*(y_{k+1}) - F x̄_{k+1} + (y_{k+1} - y_k)/σ_k)`.
pub fn optimality_residual(problem: &SaddleProblem, record: &StepRecord) -> Result<(f64, f64)> {
    let f = problem.coupling();
    let StepParams { tau, sigma, .. } = record.params;
    let primal_offset = f.tr_mul(&record.y) + (&record.x_next - &record.x) / tau;
    let dual_offset = (&record.y_next - &record.y) / sigma - f * &record.x_bar;
    let r_x = problem.f().subdiff_residual(&record.x_next, &primal_offset).ok_or(Error::MissingOracle("subdiff_f"))?;
    let r_y =
        problem.g_conj().subdiff_residual(&record.y_next, &dual_offset).ok_or(Error::MissingOracle("subdiff_gstar"))?;
    Ok((r_x, r_y))
}
