//! Discrete Lyapunov functions, the numerical-error term, per-step descent
//! checks, and the closed-form rate bounds they imply.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::engine::{StepRecord, Trajectory};
use crate::error::{Error, Result};
use crate::problem::{check_admissibility, PrimalDualPair, SaddleProblem};
use crate::schedule::{k0_threshold, Regime, Schedule};

/// `E = ‖x - x*‖²/(2τ) + ‖y - y*‖²/(2σ) - <F(x - x*), y - y*>`.
pub fn lyapunov_fixed(
    x: &DVector<f64>,
    y: &DVector<f64>,
    saddle: &PrimalDualPair,
    tau: f64,
    sigma: f64,
    f: &DMatrix<f64>,
) -> f64 {
    let ex = x - &saddle.x;
    let ey = y - &saddle.y;
    ex.norm_squared() / (2.0 * tau) + ey.norm_squared() / (2.0 * sigma) - (f * &ex).dot(&ey)
}

/// Same quadratic form as [`lyapunov_fixed`], evaluated with the iteration's own `(τ_k, σ_k)`.
pub fn lyapunov_varying(
    x: &DVector<f64>,
    y: &DVector<f64>,
    saddle: &PrimalDualPair,
    tau_k: f64,
    sigma_k: f64,
    f: &DMatrix<f64>,
) -> f64 {
    lyapunov_fixed(x, y, saddle, tau_k, sigma_k, f)
}

/// Accelerated Lyapunov function
///
/// ```text
/// E(k) = ‖x_k - x*‖²/(2τ_k²) + ‖y_{k-1} - y*‖²/(2s²)
///      + <F(x_k - x_{k-1}), y_{k-1} - y*>/τ_{k-1} + ‖x_k - x_{k-1}‖²/(2τ_{k-1}²)
/// ```
///
/// Step sizes enter as reciprocals; `inv_tau_prev = 0` encodes `1/τ_0 := 0`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_accelerated(
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    y_prev: &DVector<f64>,
    saddle: &PrimalDualPair,
    inv_tau: f64,
    inv_tau_prev: f64,
    s: f64,
    f: &DMatrix<f64>,
) -> f64 {
    let ex = x - &saddle.x;
    let ey = y_prev - &saddle.y;
    let dx = x - x_prev;
    0.5 * inv_tau * inv_tau * ex.norm_squared()
        + ey.norm_squared() / (2.0 * s * s)
        + inv_tau_prev * (f * &dx).dot(&ey)
        + 0.5 * inv_tau_prev * inv_tau_prev * dx.norm_squared()
}

/// The two shapes the discarded numerical-error term takes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeForm {
    /// `‖Δx‖²/(2τ) + ‖Δy‖²/(2σ) - <FΔx, Δy>`.
    Standard { tau: f64, sigma: f64 },
    /// `‖Δx‖²/(2τ_{k-1}²) - <FΔx, Δy>/τ_{k-1} + ‖Δy‖²/(2s²)`.
    Accelerated { inv_tau_prev: f64, s: f64 },
}

pub fn numerical_error(dx: &DVector<f64>, dy: &DVector<f64>, form: NeForm, f: &DMatrix<f64>) -> f64 {
    let cross = (f * dx).dot(dy);
    match form {
        NeForm::Standard { tau, sigma } => dx.norm_squared() / (2.0 * tau) + dy.norm_squared() / (2.0 * sigma) - cross,
        NeForm::Accelerated { inv_tau_prev, s } => {
            0.5 * inv_tau_prev * inv_tau_prev * dx.norm_squared() - inv_tau_prev * cross
                + dy.norm_squared() / (2.0 * s * s)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovRecord {
    pub k: u64,
    /// `E(k)`.
    pub energy: f64,
    /// `E(k+1)`.
    pub next_energy: f64,
    pub numerical_error: f64,
    /// Signed right-hand side of the descent lemma (`<= 0` when the coefficients are).
    pub lemma_rhs: f64,
    /// `lemma_rhs - (E(k+1) - E(k))`; nonnegative up to `tolerance` certifies the step.
    pub lemma_slack: f64,
    pub tolerance: f64,
    /// Coefficient of `‖x_{k+1} - x*‖²` in the lemma, where the regime has a sign condition on it.
    pub coefficient: Option<f64>,
    pub dist_x_sq: f64,
    pub dist_y_sq: f64,
    /// Theorem bound at `k`: on `E(k)` for the varying and optimal regimes,
    /// on `‖x_k - x*‖²` for the accelerated regime.
    pub theorem_bound: Option<f64>,
}

impl LyapunovRecord {
    pub fn certified(&self) -> bool {
        self.lemma_slack >= -self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub regime: Regime,
    pub records: Vec<LyapunovRecord>,
}

impl LemmaReport {
    /// False as soon as one step violates its lemma beyond tolerance.
    pub fn valid(&self) -> bool {
        self.records.iter().all(LyapunovRecord::certified)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LyapunovRecord> {
        self.records.iter().filter(|r| !r.certified())
    }

    /// Smallest `lemma_slack / tolerance`.
    pub fn worst_relative_slack(&self) -> f64 {
        self.records.iter().map(|r| r.lemma_slack / r.tolerance).fold(f64::INFINITY, f64::min)
    }
}

/// Slack tolerance `1e-8 (1 + |E(k)|)`.
pub fn slack_tolerance(energy: f64) -> f64 {
    1e-8 * (1.0 + energy.abs())
}

/// Lyapunov energy `E(k)` at the pre-step state of a record.
pub fn record_energy(
    schedule: &Schedule,
    record: &StepRecord,
    saddle: &PrimalDualPair,
    f: &DMatrix<f64>,
) -> Result<f64> {
    Ok(match schedule.regime() {
        Regime::Fixed | Regime::OptimalSs | Regime::VaryingSc => {
            lyapunov_fixed(&record.x, &record.y, saddle, record.params.tau, record.params.sigma, f)
        }
        Regime::Accelerated => lyapunov_accelerated(
            &record.x,
            &record.x_prev,
            &record.y_prev,
            saddle,
            1.0 / record.params.tau,
            schedule.inv_tau(record.k - 1)?,
            schedule.s(),
            f,
        ),
    })
}

/// Evaluate the regime's descent lemma on every record of a trajectory.
pub fn check_lemma(
    regime: Regime,
    trajectory: &Trajectory,
    problem: &SaddleProblem,
    saddle: &PrimalDualPair,
) -> Result<LemmaReport> {
    let schedule = &trajectory.schedule;
    if schedule.regime() != regime {
        return Err(Error::RegimeMismatch { trajectory: schedule.regime().to_string(), requested: regime.to_string() });
    }
    problem.check_pair(saddle)?;
    let f_norm = problem.coupling_norm()?;
    if !check_admissibility(schedule.s(), f_norm).admissible {
        return Err(Error::Inadmissible { s: schedule.s(), product: schedule.s() * f_norm });
    }
    let (mu, gamma) = (problem.mu(), problem.gamma());
    if regime == Regime::Fixed && mu == 0.0 && gamma == 0.0 {
        return Err(Error::NoMatchingLemma(regime.to_string()));
    }

    let constants = TheoremConstants::for_trajectory(trajectory, problem, saddle).ok();
    let f = problem.coupling();
    let s = schedule.s();
    let mut records = Vec::with_capacity(trajectory.records.len());
    for rec in &trajectory.records {
        let k = rec.k;
        let p = rec.params;
        let dist_next_x = (&rec.x_next - &saddle.x).norm_squared();
        let dist_next_y = (&rec.y_next - &saddle.y).norm_squared();
        let energy = record_energy(schedule, rec, saddle, f)?;

        let (next_energy, lemma_rhs, coefficient, ne) = match regime {
            Regime::Fixed | Regime::OptimalSs => {
                let next = lyapunov_fixed(&rec.x_next, &rec.y_next, saddle, p.tau, p.sigma, f);
                let rhs = -(mu * dist_next_x + gamma * dist_next_y);
                let ne = NeForm::Standard { tau: p.tau, sigma: p.sigma };
                (next, rhs, None, numerical_error(&(&rec.x_next - &rec.x), &(&rec.y_next - &rec.y), ne, f))
            }
            Regime::VaryingSc => {
                let q = schedule.at(k + 1)?;
                let next = lyapunov_varying(&rec.x_next, &rec.y_next, saddle, q.tau, q.sigma, f);
                let coef_x = mu + 0.5 / p.tau - 0.5 / q.tau;
                let coef_y = 0.5 / p.sigma - 0.5 / q.sigma;
                let rhs = -coef_x * dist_next_x - coef_y * dist_next_y;
                let ne = NeForm::Standard { tau: p.tau, sigma: p.sigma };
                (next, rhs, Some(coef_x), numerical_error(&(&rec.x_next - &rec.x), &(&rec.y_next - &rec.y), ne, f))
            }
            Regime::Accelerated => {
                let inv_tau = 1.0 / p.tau;
                let inv_tau_next = schedule.inv_tau(k + 1)?;
                let next = lyapunov_accelerated(&rec.x_next, &rec.x, &rec.y, saddle, inv_tau_next, inv_tau, s, f);
                let coef = mu * inv_tau + 0.5 * inv_tau * inv_tau - 0.5 * inv_tau_next * inv_tau_next;
                let rhs = -coef * dist_next_x;
                let ne = NeForm::Accelerated { inv_tau_prev: schedule.inv_tau(k - 1)?, s };
                (next, rhs, Some(coef), numerical_error(&(&rec.x - &rec.x_prev), &(&rec.y - &rec.y_prev), ne, f))
            }
        };

        let theorem_bound = constants.as_ref().and_then(|c| theorem_bound(regime, k, c).ok());
        records.push(LyapunovRecord {
            k,
            energy,
            next_energy,
            numerical_error: ne,
            lemma_rhs,
            lemma_slack: lemma_rhs - (next_energy - energy),
            tolerance: slack_tolerance(energy),
            coefficient,
            dist_x_sq: (&rec.x - &saddle.x).norm_squared(),
            dist_y_sq: (&rec.y - &saddle.y).norm_squared(),
            theorem_bound,
        });
    }
    Ok(LemmaReport { regime, records })
}

/// Constants the rate theorems need. `reference_energy` is `E(0)` for the
/// varying and optimal regimes and `E(K₀)` for the accelerated one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TheoremConstants {
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    pub s: Option<f64>,
    pub f_norm: Option<f64>,
    pub reference_energy: Option<f64>,
}

impl TheoremConstants {
    /// Collect the constants of a run. Fails for the accelerated regime if the
    /// record at `K₀ > 1` was not kept.
    pub fn for_trajectory(trajectory: &Trajectory, problem: &SaddleProblem, saddle: &PrimalDualPair) -> Result<Self> {
        let schedule = &trajectory.schedule;
        let f = problem.coupling();
        let init = &trajectory.initial;
        let reference_energy = match schedule.regime() {
            Regime::Fixed => return Err(Error::NoMatchingLemma(Regime::Fixed.to_string())),
            Regime::VaryingSc | Regime::OptimalSs => {
                let p = schedule.at(0)?;
                lyapunov_fixed(&init.x, &init.y, saddle, p.tau, p.sigma, f)
            }
            Regime::Accelerated => {
                let k0 = k0_threshold(schedule.mu(), schedule.c().unwrap())?;
                if k0 == 1 {
                    // x_0 := x_1 and 1/τ_0 := 0
                    lyapunov_accelerated(&init.x, &init.x, &init.y, saddle, schedule.inv_tau(1)?, 0.0, schedule.s(), f)
                } else {
                    let rec = trajectory
                        .records
                        .iter()
                        .find(|r| r.k == k0)
                        .ok_or(Error::MissingConstant("reference_energy"))?;
                    record_energy(schedule, rec, saddle, f)?
                }
            }
        };
        Ok(TheoremConstants {
            mu: Some(schedule.mu()),
            gamma: Some(schedule.gamma()),
            c: schedule.c(),
            s: Some(schedule.s()),
            f_norm: Some(schedule.f_norm()),
            reference_energy: Some(reference_energy),
        })
    }
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingConstant(name))
}

/// `α = min((2μ - c)/(s + c), 1/(1 + c s ‖F‖²))`.
pub fn varying_alpha(mu: f64, c: f64, s: f64, f_norm: f64) -> f64 {
    ((2.0 * mu - c) / (s + c)).min(1.0 / (1.0 + c * s * f_norm * f_norm))
}

/// `(1 + α) (k+1)! / (k+1+α)!`, through `lnΓ` so it neither overflows nor needs integer `α`.
pub fn factorial_ratio(alpha: f64, k: u64) -> f64 {
    let k = k as f64;
    (1.0 + alpha) * (ln_gamma(k + 2.0) - ln_gamma(k + 2.0 + alpha)).exp()
}

/// `ρ = (1 + s‖F‖) / (1 + s‖F‖ + 2 s sqrt(μγ))`.
pub fn linear_rate(s: f64, f_norm: f64, mu: f64, gamma: f64) -> f64 {
    (1.0 + s * f_norm) / (1.0 + s * f_norm + 2.0 * s * (mu * gamma).sqrt())
}

/// `(1 + s‖F‖)/(1 - s‖F‖)`, the price of sandwiching `E` between weighted distances.
pub fn sandwich_factor(s: f64, f_norm: f64) -> f64 {
    (1.0 + s * f_norm) / (1.0 - s * f_norm)
}

/// Closed-form bound at iteration `k`:
/// varying: `(1+α)(k+1)!/(k+1+α)! E(0)`; accelerated: `2E(K₀)/(c²k²)` on
/// `‖x_k - x*‖²` for `k >= K₀`; optimal: `ρᵏ E(0)`.
pub fn theorem_bound(regime: Regime, k: u64, constants: &TheoremConstants) -> Result<f64> {
    let energy = need(constants.reference_energy, "reference_energy")?;
    match regime {
        Regime::Fixed => Err(Error::NoMatchingLemma(regime.to_string())),
        Regime::VaryingSc => {
            let alpha = varying_alpha(
                need(constants.mu, "mu")?,
                need(constants.c, "c")?,
                need(constants.s, "s")?,
                need(constants.f_norm, "f_norm")?,
            );
            Ok(factorial_ratio(alpha, k) * energy)
        }
        Regime::Accelerated => {
            let (mu, c) = (need(constants.mu, "mu")?, need(constants.c, "c")?);
            let k0 = k0_threshold(mu, c)?;
            if k < k0 {
                return Err(Error::BeforeScheduleStart { k, k_start: k0 });
            }
            Ok(2.0 * energy / (c * c * (k as f64).powi(2)))
        }
        Regime::OptimalSs => {
            let rho = linear_rate(
                need(constants.s, "s")?,
                need(constants.f_norm, "f_norm")?,
                need(constants.mu, "mu")?,
                need(constants.gamma, "gamma")?,
            );
            Ok(rho.powf(k as f64) * energy)
        }
    }
}

/// Varying-regime bound on `‖x_k - x*‖²`:
/// `(1+s‖F‖)/(1-s‖F‖) · (1+α) k!/(k+1+α)! · (‖x_0 - x*‖² + ‖y_0 - y*‖²/(c²s²))`.
pub fn varying_distance_bound(k: u64, mu: f64, c: f64, s: f64, f_norm: f64, x0_sq: f64, y0_sq: f64) -> f64 {
    let alpha = varying_alpha(mu, c, s, f_norm);
    let kf = k as f64;
    let ratio = (1.0 + alpha) * (ln_gamma(kf + 1.0) - ln_gamma(kf + 2.0 + alpha)).exp();
    sandwich_factor(s, f_norm) * ratio * (x0_sq + y0_sq / (c * c * s * s))
}

/// Optimal-regime bound on `μ‖x_k - x*‖² + γ‖y_k - y*‖²`.
pub fn linear_distance_bound(k: u64, s: f64, f_norm: f64, mu: f64, gamma: f64, weighted0: f64) -> f64 {
    sandwich_factor(s, f_norm) * linear_rate(s, f_norm, mu, gamma).powf(k as f64) * weighted0
}
