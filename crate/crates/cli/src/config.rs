//! Experiment configuration: a strict TOML document resolved against the
//! instance it describes.
//!
//! ```toml
//! regime = "optimal_ss"        # fixed | varying_sc | accelerated | optimal_ss
//! budget = 2000
//! tol = 1e-10                  # optional, KKT-residual stopping tolerance
//! record_every = 1             # optional
//! checks = ["lemma", "theorem"]  # optional: lemma, theorem, rate_fit, ode_compare
//! output = "pdhg-out"          # optional output directory
//!
//! [instance]
//! kind = "quad_pair"           # lasso | gen_lasso | quad_pair
//! seed = 1
//! d = 4
//! # d2, m, lambda, mu, gamma, cond are optional
//!
//! [schedule]                   # optional; every key optional
//! s = 0.5
//! c = 0.25
//!
//! [sweep]                      # read by `sweep` only
//! c = [0.5, 0.1, 0.02]
//! s = [0.5]
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use pdhg::{make_schedule, Error as CoreError, Instance, InstanceKind, InstanceSpec, Regime, Schedule, ScheduleParams};

use crate::ConfigError;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_OUTPUT: &str = "pdhg-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Lemma,
    Theorem,
    RateFit,
    OdeCompare,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Lemma => "lemma",
            Check::Theorem => "theorem",
            Check::RateFit => "rate_fit",
            Check::OdeCompare => "ode_compare",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    kind: String,
    seed: u64,
    d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    d2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cond: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    #[serde(skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    regime: String,
    budget: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    record_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<Vec<Check>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    instance: RawInstance,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<RawSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepGrid>,
}

/// Fully resolved schedule inputs, as they will be handed to the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSettings {
    pub s: f64,
    pub c: Option<f64>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
}

/// A validated, fully defaulted experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub budget: u64,
    pub tol: f64,
    pub record_every: u64,
    pub checks: Vec<Check>,
    pub output: PathBuf,
    pub instance: InstanceSpec,
    pub schedule: ScheduleSettings,
    pub sweep: Option<SweepGrid>,
}

/// Map a core validation error onto the config key that caused it.
fn core_error(err: CoreError) -> ConfigError {
    match err {
        CoreError::InvalidParameter { name, reason } => {
            let key = match name {
                "s" | "c" | "tau" | "sigma" => format!("schedule.{name}"),
                "regime" => "regime".to_string(),
                "budget" | "record_every" => name.to_string(),
                other => format!("instance.{other}"),
            };
            ConfigError::Invalid { key, reason }
        }
        CoreError::Inadmissible { s, product } => ConfigError::Invalid {
            key: "schedule.s".into(),
            reason: format!("s = {s} gives s*||F|| = {product} >= 1 (inadmissible)"),
        },
        other => ConfigError::Core(other),
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    /// Build the instance this config describes.
    pub fn build_instance(&self) -> Result<Instance, ConfigError> {
        self.instance.build().map_err(core_error)
    }

    pub fn schedule_params(&self, mu: f64, gamma: f64) -> ScheduleParams {
        ScheduleParams {
            s: Some(self.schedule.s),
            c: self.schedule.c,
            tau: self.schedule.tau,
            sigma: self.schedule.sigma,
            mu,
            gamma,
        }
    }

    /// The schedule for `instance`, revalidated.
    pub fn make_schedule(&self, instance: &Instance) -> Result<Schedule, ConfigError> {
        let p = instance.problem();
        let f_norm = p.coupling_norm().map_err(ConfigError::Core)?;
        make_schedule(self.regime, &self.schedule_params(p.mu(), p.gamma()), f_norm).map_err(core_error)
    }

    /// Copy with `c` and/or `s` replaced, re-resolved against `instance`.
    pub fn with_overrides(&self, c: Option<f64>, s: Option<f64>, instance: &Instance) -> Result<Self, ConfigError> {
        let mut raw = self.to_raw();
        let sched = raw.schedule.get_or_insert_with(Default::default);
        if let Some(c) = c {
            sched.c = Some(c);
        }
        if let Some(s) = s {
            sched.s = Some(s);
            if self.regime == Regime::Fixed {
                sched.tau = None;
                sched.sigma = None;
            }
        }
        resolve(raw, Some(instance))
    }

    fn to_raw(&self) -> RawConfig {
        let spec = &self.instance;
        RawConfig {
            regime: self.regime.name().to_string(),
            budget: self.budget,
            tol: Some(self.tol),
            record_every: Some(self.record_every),
            checks: Some(self.checks.clone()),
            output: Some(self.output.clone()),
            instance: RawInstance {
                kind: spec.kind.name().to_string(),
                seed: spec.seed,
                d: spec.d,
                d2: spec.d2,
                m: spec.m,
                lambda: Some(spec.lambda),
                mu: Some(spec.mu),
                gamma: Some(spec.gamma),
                cond: Some(spec.cond),
            },
            schedule: Some(RawSchedule {
                s: Some(self.schedule.s),
                c: self.schedule.c,
                tau: self.schedule.tau,
                sigma: self.schedule.sigma,
            }),
            sweep: self.sweep.clone(),
        }
    }
}

/// Serialize a resolved config; `parse_config` gives it back unchanged.
pub fn serialize_config(config: &ExperimentConfig) -> String {
    toml::to_string(&config.to_raw()).expect("config serializes")
}

/// Parse, default and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw, None)
}

fn resolve(raw: RawConfig, prebuilt: Option<&Instance>) -> Result<ExperimentConfig, ConfigError> {
    let regime: Regime = raw.regime.parse().map_err(core_error)?;
    if raw.budget == 0 {
        return Err(invalid("budget", "must be >= 1"));
    }
    let tol = raw.tol.unwrap_or(DEFAULT_TOL);
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(invalid("tol", format!("must be finite and >= 0, got {tol}")));
    }
    let record_every = raw.record_every.unwrap_or(1);
    if record_every == 0 {
        return Err(invalid("record_every", "must be >= 1"));
    }
    let mut checks = raw.checks.unwrap_or_else(|| vec![Check::Lemma, Check::Theorem]);
    checks.sort();
    checks.dedup();

    let ri = raw.instance;
    let kind: InstanceKind = ri.kind.parse().map_err(|e: CoreError| match e {
        CoreError::InvalidParameter { reason, .. } => invalid("instance.kind", reason),
        other => ConfigError::Core(other),
    })?;
    let base = InstanceSpec::new(kind, ri.seed, ri.d);
    let mut spec = InstanceSpec {
        d2: ri.d2,
        m: ri.m,
        lambda: ri.lambda.unwrap_or(base.lambda),
        mu: ri.mu.unwrap_or(base.mu),
        gamma: ri.gamma.unwrap_or(base.gamma),
        cond: ri.cond.unwrap_or(base.cond),
        ..base
    };
    match kind {
        InstanceKind::QuadPair => {
            spec.d2 = Some(spec.d2.unwrap_or(spec.d));
            positive("instance.mu", spec.mu)?;
            positive("instance.gamma", spec.gamma)?;
            if spec.m.is_some() {
                return Err(invalid("instance.m", "quad_pair instances have no design matrix"));
            }
        }
        InstanceKind::Lasso => {
            spec.m = Some(spec.m.unwrap_or(2 * spec.d));
            positive("instance.lambda", spec.lambda)?;
        }
        InstanceKind::GenLasso => {
            positive("instance.lambda", spec.lambda)?;
            if spec.d < 2 {
                return Err(invalid("instance.d", "gen_lasso needs d >= 2"));
            }
        }
    }
    if kind != InstanceKind::QuadPair && spec.d2.is_some() {
        return Err(invalid("instance.d2", "only quad_pair instances take d2"));
    }
    if spec.d == 0 {
        return Err(invalid("instance.d", "must be >= 1"));
    }

    let built;
    let instance = match prebuilt {
        Some(inst) => inst,
        None => {
            built = spec.build().map_err(core_error)?;
            &built
        }
    };
    let problem = instance.problem();
    let rs = raw.schedule.unwrap_or_default();
    let params =
        ScheduleParams { s: rs.s, c: rs.c, tau: rs.tau, sigma: rs.sigma, mu: problem.mu(), gamma: problem.gamma() };
    let f_norm = problem.coupling_norm().map_err(ConfigError::Core)?;
    let schedule = make_schedule(regime, &params, f_norm).map_err(core_error)?;
    // only the fixed regime takes explicit steps; the others derive them
    let explicit = regime == Regime::Fixed;
    let settings = ScheduleSettings {
        s: schedule.s(),
        c: schedule.c(),
        tau: schedule.tau().filter(|_| explicit),
        sigma: schedule.sigma().filter(|_| explicit),
    };

    if let Some(grid) = &raw.sweep {
        for &c in &grid.c {
            positive("sweep.c", c)?;
        }
        for &s in &grid.s {
            positive("sweep.s", s)?;
        }
    }

    Ok(ExperimentConfig {
        regime,
        budget: raw.budget,
        tol,
        record_every,
        checks,
        output: raw.output.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
        instance: spec,
        schedule: settings,
        sweep: raw.sweep,
    })
}
