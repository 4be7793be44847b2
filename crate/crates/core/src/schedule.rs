//! Per-iteration step parameters `(τ_k, σ_k, θ_k)` for the four step-size regimes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::problem::{check_admissibility, default_step_scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Constant `τσ = s²`, `θ = 1`.
    Fixed,
    /// `τ_k = 1/(c(k+1))`, `σ_k = c s² (k+1)`, `θ = 1`; needs `μ > 0`.
    VaryingSc,
    /// `τ_k = 1/(ck)`, `σ_k = c s² (k+1)`, `θ_k = k/(k+1)`; needs `μ > 0`, starts at `k = 1`.
    Accelerated,
    /// `τ = s sqrt(γ/μ)`, `σ = s sqrt(μ/γ)`; needs `μ, γ > 0`.
    OptimalSs,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Fixed, Regime::VaryingSc, Regime::Accelerated, Regime::OptimalSs];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Fixed => "fixed",
            Regime::VaryingSc => "varying_sc",
            Regime::Accelerated => "accelerated",
            Regime::OptimalSs => "optimal_ss",
        }
    }

    pub fn k_start(self) -> u64 {
        match self {
            Regime::Accelerated => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| Error::InvalidParameter {
            name: "regime",
            reason: format!("unknown regime `{s}` (expected fixed, varying_sc, accelerated or optimal_ss)"),
        })
    }
}

/// User-facing schedule inputs; `None` means "use the regime default".
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScheduleParams {
    pub s: Option<f64>,
    pub c: Option<f64>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
}

/// A validated step-size schedule. Pure function of `k`; holds no iteration state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    regime: Regime,
    s: f64,
    c: Option<f64>,
    tau: Option<f64>,
    sigma: Option<f64>,
    mu: f64,
    gamma: f64,
    f_norm: f64,
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

pub fn make_schedule(regime: Regime, params: &ScheduleParams, f_norm: f64) -> Result<Schedule> {
    if !(f_norm >= 0.0 && f_norm.is_finite()) {
        return Err(invalid("f_norm", format!("must be finite and >= 0, got {f_norm}")));
    }
    if !(params.mu >= 0.0) {
        return Err(invalid("mu", format!("must be >= 0, got {}", params.mu)));
    }
    if !(params.gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be >= 0, got {}", params.gamma)));
    }
    let (mu, gamma) = (params.mu, params.gamma);

    let mut c = None;
    let (mut tau, mut sigma) = (None, None);
    let s;
    match regime {
        Regime::Fixed => {
            if params.c.is_some() {
                return Err(invalid("c", "the fixed regime takes no schedule constant"));
            }
            match (params.tau, params.sigma) {
                (Some(t), Some(g)) => {
                    let (t, g) = (positive("tau", t)?, positive("sigma", g)?);
                    let implied = (t * g).sqrt();
                    if let Some(given) = params.s {
                        if ((given * given - t * g) / (t * g)).abs() > 1e-12 {
                            return Err(invalid(
                                "s",
                                format!("s² = {} disagrees with tau*sigma = {}", given * given, t * g),
                            ));
                        }
                    }
                    s = implied;
                    tau = Some(t);
                    sigma = Some(g);
                }
                (Some(t), None) => {
                    s = positive("s", params.s.unwrap_or_else(|| default_step_scale(f_norm)))?;
                    tau = Some(positive("tau", t)?);
                    sigma = Some(s * s / t);
                }
                (None, Some(g)) => {
                    s = positive("s", params.s.unwrap_or_else(|| default_step_scale(f_norm)))?;
                    sigma = Some(positive("sigma", g)?);
                    tau = Some(s * s / g);
                }
                (None, None) => {
                    s = positive("s", params.s.unwrap_or_else(|| default_step_scale(f_norm)))?;
                    tau = Some(s);
                    sigma = Some(s);
                }
            }
        }
        Regime::VaryingSc | Regime::Accelerated => {
            if params.tau.is_some() {
                return Err(invalid("tau", format!("the {regime} regime derives tau from c and s")));
            }
            if params.sigma.is_some() {
                return Err(invalid("sigma", format!("the {regime} regime derives sigma from c and s")));
            }
            if mu <= 0.0 {
                return Err(invalid("mu", format!("the {regime} regime requires a strongly convex f (mu > 0)")));
            }
            s = positive("s", params.s.unwrap_or_else(|| default_step_scale(f_norm)))?;
            let (default_c, upper, label) = match regime {
                Regime::VaryingSc => (mu / 2.0, 2.0 * mu, "2*mu"),
                _ => (2.0 * mu / 3.0, mu, "mu"),
            };
            let value = params.c.unwrap_or(default_c);
            if !(value > 0.0 && value < upper) {
                return Err(invalid("c", format!("must lie strictly inside (0, {label}) = (0, {upper}), got {value}")));
            }
            c = Some(value);
        }
        Regime::OptimalSs => {
            if params.tau.is_some() || params.sigma.is_some() {
                let name = if params.tau.is_some() { "tau" } else { "sigma" };
                return Err(invalid(name, "the optimal_ss regime derives tau and sigma from s, mu and gamma"));
            }
            if params.c.is_some() {
                return Err(invalid("c", "the optimal_ss regime takes no schedule constant"));
            }
            if mu <= 0.0 {
                return Err(invalid("mu", "the optimal_ss regime requires mu > 0"));
            }
            if gamma <= 0.0 {
                return Err(invalid("gamma", "the optimal_ss regime requires gamma > 0"));
            }
            s = positive("s", params.s.unwrap_or_else(|| default_step_scale(f_norm)))?;
            tau = Some(s * (gamma / mu).sqrt());
            sigma = Some(s * (mu / gamma).sqrt());
        }
    }

    if !check_admissibility(s, f_norm).admissible {
        return Err(Error::Inadmissible { s, product: s * f_norm });
    }
    Ok(Schedule { regime, s, c, tau, sigma, mu, gamma, f_norm })
}

impl Schedule {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn c(&self) -> Option<f64> {
        self.c
    }

    /// Constant primal step of the fixed and optimal regimes.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `||F||` the schedule was validated against.
    pub fn f_norm(&self) -> f64 {
        self.f_norm
    }

    pub fn k_start(&self) -> u64 {
        self.regime.k_start()
    }

    pub fn at(&self, k: u64) -> Result<StepParams> {
        if k < self.k_start() {
            return Err(Error::BeforeScheduleStart { k, k_start: self.k_start() });
        }
        let kf = k as f64;
        Ok(match self.regime {
            Regime::Fixed | Regime::OptimalSs => {
                StepParams { tau: self.tau.unwrap(), sigma: self.sigma.unwrap(), theta: 1.0 }
            }
            Regime::VaryingSc => {
                let c = self.c.unwrap();
                StepParams { tau: 1.0 / (c * (kf + 1.0)), sigma: c * self.s * self.s * (kf + 1.0), theta: 1.0 }
            }
            Regime::Accelerated => {
                let c = self.c.unwrap();
                StepParams { tau: 1.0 / (c * kf), sigma: c * self.s * self.s * (kf + 1.0), theta: kf / (kf + 1.0) }
            }
        })
    }

    /// `1/τ_k`, extended to the accelerated regime's `k = 0` by `1/τ_0 := 0`.
    pub fn inv_tau(&self, k: u64) -> Result<f64> {
        if self.regime == Regime::Accelerated && k == 0 {
            return Ok(0.0);
        }
        Ok(1.0 / self.at(k)?.tau)
    }

    /// `σ_0` of the accelerated regime, used by the dual half-step that produces `y_1` from `y_0`.
    pub fn warmup_sigma(&self) -> Option<f64> {
        match self.regime {
            Regime::Accelerated => Some(self.c.unwrap() * self.s * self.s),
            _ => None,
        }
    }
}

pub fn schedule_at(schedule: &Schedule, k: u64) -> Result<StepParams> {
    schedule.at(k)
}

/// `K₀ = max(1, ⌈c / (2μ - 2c)⌉)`: from this iteration on the accelerated
/// descent coefficient `2μk - c(2k+1)` is nonnegative.
pub fn k0_threshold(mu: f64, c: f64) -> Result<u64> {
    if !(mu > 0.0) {
        return Err(invalid("mu", format!("must be > 0, got {mu}")));
    }
    if !(c > 0.0 && c < mu) {
        return Err(invalid("c", format!("must lie strictly inside (0, mu) = (0, {mu}), got {c}")));
    }
    let raw = c / (2.0 * mu - 2.0 * c);
    // c = 2μ/3 lands on exactly 1 in exact arithmetic; absorb the rounding.
    let k0 = (raw - 1e-12 * raw.max(1.0)).ceil();
    Ok((k0 as u64).max(1))
}
