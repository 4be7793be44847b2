//! Running a configured experiment: trajectory, diagnostics, checks, artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pdhg::lyapunov::{
    linear_distance_bound, linear_rate, numerical_error, record_energy, varying_alpha, varying_distance_bound, NeForm,
};
use pdhg::ode::discretization_gap;
use pdhg::rates::{default_window, ENERGY_FLOOR};
use pdhg::{
    check_admissibility, check_lemma, contraction_factors, fit_rate, k0_threshold, run, theorem_bound,
    Error as CoreError, Instance, LyapunovRecord, PrimalDualPair, Regime, RunOptions, Schedule, TheoremConstants,
    Trajectory,
};

use crate::config::{Check, ExperimentConfig};
use crate::ConfigError;

/// Bounds are compared with this relative slack.
pub const BOUND_SLACK: f64 = 1e-6;
/// Contraction ratios may exceed `ρ` by this much.
pub const RATIO_SLACK: f64 = 1e-8;
/// A halving of `s` must shrink the ODE gap at least by this factor.
pub const ODE_RATIO: f64 = 0.7;
pub const ODE_HORIZON: f64 = 10.0;
pub const ODE_REFINE: usize = 100;

pub const CSV_HEADER: [&str; 12] = [
    "k",
    "tau_k",
    "sigma_k",
    "theta_k",
    "dist_x_sq",
    "dist_y_sq",
    "lyapunov",
    "ne",
    "lemma_slack",
    "theorem_bound",
    "primal_residual",
    "dual_residual",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub status: Status,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(detail: impl Into<String>) -> Self {
        CheckOutcome { status: Status::Pass, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        CheckOutcome { status: Status::Fail, detail: detail.into() }
    }

    fn skipped(detail: impl Into<String>) -> Self {
        CheckOutcome { status: Status::Skipped, detail: detail.into() }
    }

    fn verdict(ok: bool, detail: impl Into<String>) -> Self {
        if ok {
            Self::pass(detail)
        } else {
            Self::fail(detail)
        }
    }
}

/// Summary report; field order is the on-disk key order.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub regime: String,
    pub instance: String,
    pub seed: u64,
    pub steps: u64,
    pub termination: String,
    pub s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub f_norm: f64,
    pub admissibility_margin: f64,
    pub final_dist_x_sq: f64,
    pub final_dist_y_sq: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_window: Option<[u64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_contraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_contraction: Option<f64>,
    pub all_passed: bool,
    pub checks: std::collections::BTreeMap<String, CheckOutcome>,
}

/// Per-step diagnostic row of the trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub k: u64,
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
    pub dist_x_sq: f64,
    pub dist_y_sq: f64,
    pub lyapunov: f64,
    pub ne: f64,
    pub lemma_slack: Option<f64>,
    pub theorem_bound: Option<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

impl Row {
    pub fn fields(&self) -> [String; 12] {
        [
            self.k.to_string(),
            float(self.tau),
            float(self.sigma),
            float(self.theta),
            float(self.dist_x_sq),
            float(self.dist_y_sq),
            float(self.lyapunov),
            float(self.ne),
            opt_float(self.lemma_slack),
            opt_float(self.theorem_bound),
            float(self.primal_residual),
            float(self.dual_residual),
        ]
    }
}

/// Everything a finished experiment produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub rows: Vec<Row>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.summary.all_passed
    }
}

/// Instance plus its saddle point, shared by all cells of a sweep.
pub struct Prepared {
    pub instance: Instance,
    pub saddle: PrimalDualPair,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self, ConfigError> {
        let instance = config.build_instance()?;
        let saddle = instance.saddle().map_err(ConfigError::Core)?;
        Ok(Prepared { instance, saddle })
    }
}

/// Run the experiment in memory.
pub fn evaluate(config: &ExperimentConfig, prepared: &Prepared) -> Result<Outcome, ConfigError> {
    let Prepared { instance, saddle } = prepared;
    let problem = instance.problem();
    let schedule = config.make_schedule(instance)?;
    let init = PrimalDualPair::zeros(problem.d1(), problem.d2());
    let opts = RunOptions { budget: config.budget, tol: config.tol, record_every: config.record_every };
    let traj = run(problem, &schedule, &init, opts).map_err(ConfigError::Core)?;
    let f_norm = problem.coupling_norm().map_err(ConfigError::Core)?;

    let lemma = match check_lemma(config.regime, &traj, problem, saddle) {
        Ok(report) => Some(report),
        Err(CoreError::NoMatchingLemma(_)) => None,
        Err(e) => return Err(ConfigError::Core(e)),
    };
    let rows = match &lemma {
        Some(report) => report.records.iter().zip(&traj.records).map(|(l, r)| row_from(l, r.params, r)).collect(),
        None => bare_rows(&traj, &schedule, problem.coupling(), saddle)?,
    };

    let mut checks = std::collections::BTreeMap::new();
    let series: Vec<(u64, f64)> = rows.iter().map(|r| (r.k, r.dist_x_sq)).collect();
    let fit = rate_slope(&series, &schedule);
    let contraction = consecutive_energies(&rows).and_then(|e| contraction_factors(&e).ok());

    for &check in &config.checks {
        let outcome = match check {
            Check::Lemma => match &lemma {
                None => {
                    CheckOutcome::skipped(format!("no descent lemma for the {} regime on this problem", config.regime))
                }
                Some(report) => {
                    let failures = report.failures().count();
                    CheckOutcome::verdict(
                        failures == 0,
                        format!(
                            "{failures} of {} steps violate the lemma; worst slack/tolerance {:.3e}",
                            report.records.len(),
                            report.worst_relative_slack()
                        ),
                    )
                }
            },
            Check::Theorem => {
                theorem_check(config.regime, &traj, &rows, &schedule, f_norm, saddle, problem, lemma.is_some())
            }
            Check::RateFit => rate_check(config.regime, &schedule, f_norm, &fit, contraction.as_ref()),
            Check::OdeCompare => ode_check(config, instance, f_norm)?,
        };
        checks.insert(check.name().to_string(), outcome);
    }

    let last = traj.final_state();
    let summary = Summary {
        regime: config.regime.name().to_string(),
        instance: config.instance.kind.name().to_string(),
        seed: config.instance.seed,
        steps: traj.steps,
        termination: traj.termination.name().to_string(),
        s: schedule.s(),
        c: schedule.c(),
        f_norm,
        admissibility_margin: check_admissibility(schedule.s(), f_norm).margin,
        final_dist_x_sq: (&last.x - &saddle.x).norm_squared(),
        final_dist_y_sq: (&last.y - &saddle.y).norm_squared(),
        rate_slope: fit.as_ref().ok().map(|f| f.slope),
        rate_window: fit.as_ref().ok().map(|f| [f.window.0, f.window.1]),
        max_contraction: contraction.as_ref().map(|c| c.max),
        mean_contraction: contraction.as_ref().map(|c| c.geometric_mean),
        all_passed: checks.values().all(|c| c.status != Status::Fail),
        checks,
    };
    Ok(Outcome { summary, rows })
}

fn row_from(l: &LyapunovRecord, p: pdhg::StepParams, r: &pdhg::StepRecord) -> Row {
    Row {
        k: l.k,
        tau: p.tau,
        sigma: p.sigma,
        theta: p.theta,
        dist_x_sq: l.dist_x_sq,
        dist_y_sq: l.dist_y_sq,
        lyapunov: l.energy,
        ne: l.numerical_error,
        lemma_slack: Some(l.lemma_slack),
        theorem_bound: l.theorem_bound,
        primal_residual: r.primal_residual,
        dual_residual: r.dual_residual,
    }
}

/// Rows for runs without a lemma: energy and NE still make sense.
fn bare_rows(
    traj: &Trajectory,
    schedule: &Schedule,
    f: &pdhg::DMatrix<f64>,
    saddle: &PrimalDualPair,
) -> Result<Vec<Row>, ConfigError> {
    traj.records
        .iter()
        .map(|r| {
            let p = r.params;
            let ne = numerical_error(
                &(&r.x_next - &r.x),
                &(&r.y_next - &r.y),
                NeForm::Standard { tau: p.tau, sigma: p.sigma },
                f,
            );
            Ok(Row {
                k: r.k,
                tau: p.tau,
                sigma: p.sigma,
                theta: p.theta,
                dist_x_sq: (&r.x - &saddle.x).norm_squared(),
                dist_y_sq: (&r.y - &saddle.y).norm_squared(),
                lyapunov: record_energy(schedule, r, saddle, f).map_err(ConfigError::Core)?,
                ne,
                lemma_slack: None,
                theorem_bound: None,
                primal_residual: r.primal_residual,
                dual_residual: r.dual_residual,
            })
        })
        .collect()
}

/// Energies of a run recorded at every step, cut before the rounding floor.
fn consecutive_energies(rows: &[Row]) -> Option<Vec<(u64, f64)>> {
    if rows.len() < 2 || rows.windows(2).any(|w| w[1].k != w[0].k + 1) {
        return None;
    }
    let out: Vec<_> = rows.iter().map(|r| (r.k, r.lyapunov)).take_while(|&(_, e)| e >= ENERGY_FLOOR).collect();
    (out.len() >= 2).then_some(out)
}

/// Fit over the default window, clipped to the recorded range and to the
/// part of the series above the rounding floor.
fn rate_slope(series: &[(u64, f64)], schedule: &Schedule) -> Result<pdhg::RateFit, String> {
    let (lo, hi) = default_window(schedule.mu(), schedule.c());
    let usable: Vec<_> = series.iter().copied().take_while(|&(_, v)| v >= ENERGY_FLOOR).collect();
    let last = usable.last().map(|&(k, _)| k).unwrap_or(0);
    let hi = hi.min(last);
    if hi <= lo {
        return Err(format!("series reaches the rounding floor or ends at k = {last}, before the window start {lo}"));
    }
    fit_rate(&usable, (lo, hi)).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn theorem_check(
    regime: Regime,
    traj: &Trajectory,
    rows: &[Row],
    schedule: &Schedule,
    f_norm: f64,
    saddle: &PrimalDualPair,
    problem: &pdhg::SaddleProblem,
    has_lemma: bool,
) -> CheckOutcome {
    if regime == Regime::Fixed || !has_lemma {
        return CheckOutcome::skipped(format!("no rate theorem for the {regime} regime"));
    }
    let consts = match TheoremConstants::for_trajectory(traj, problem, saddle) {
        Ok(c) => c,
        Err(e) => return CheckOutcome::skipped(format!("theorem constants unavailable: {e}")),
    };
    let x0 = (&traj.initial.x - &saddle.x).norm_squared();
    let y0 = (&traj.initial.y - &saddle.y).norm_squared();
    let (mu, gamma, s) = (schedule.mu(), schedule.gamma(), schedule.s());
    let mut violations = 0usize;
    let mut checked = 0usize;
    for row in rows {
        let Ok(bound) = theorem_bound(regime, row.k, &consts) else { continue };
        checked += 1;
        let ok = match regime {
            Regime::VaryingSc => {
                let dist = varying_distance_bound(row.k, mu, schedule.c().unwrap(), s, f_norm, x0, y0);
                row.lyapunov <= bound * (1.0 + BOUND_SLACK) && row.dist_x_sq <= dist * (1.0 + BOUND_SLACK)
            }
            Regime::Accelerated => row.dist_x_sq <= bound * (1.0 + BOUND_SLACK),
            Regime::OptimalSs => {
                let weighted = mu * row.dist_x_sq + gamma * row.dist_y_sq;
                let dist = linear_distance_bound(row.k, s, f_norm, mu, gamma, mu * x0 + gamma * y0);
                row.lyapunov <= bound * (1.0 + BOUND_SLACK) && weighted <= dist * (1.0 + BOUND_SLACK)
            }
            Regime::Fixed => unreachable!(),
        };
        if !ok {
            violations += 1;
        }
    }
    if checked == 0 {
        return CheckOutcome::skipped("no recorded step lies in the theorem's range");
    }
    CheckOutcome::verdict(violations == 0, format!("{violations} of {checked} recorded steps exceed the bound"))
}

/// The measured order must be at least as fast as the theorem guarantees.
fn rate_check(
    regime: Regime,
    schedule: &Schedule,
    f_norm: f64,
    fit: &Result<pdhg::RateFit, String>,
    contraction: Option<&pdhg::Contraction>,
) -> CheckOutcome {
    match regime {
        Regime::Fixed => CheckOutcome::skipped("no rate claim for the fixed regime"),
        Regime::OptimalSs => {
            let rho = linear_rate(schedule.s(), f_norm, schedule.mu(), schedule.gamma());
            match contraction {
                None => CheckOutcome::skipped("needs a run recorded at every step with positive energy"),
                Some(c) => CheckOutcome::verdict(
                    c.max <= rho + RATIO_SLACK,
                    format!("max ratio {:.6e}, geometric mean {:.6e}, rho {:.6e}", c.max, c.geometric_mean, rho),
                ),
            }
        }
        Regime::VaryingSc | Regime::Accelerated => {
            let order = match regime {
                Regime::VaryingSc => 1.0 + varying_alpha(schedule.mu(), schedule.c().unwrap(), schedule.s(), f_norm),
                _ => 2.0,
            };
            match fit {
                Err(why) => CheckOutcome::skipped(format!("no fit: {why}")),
                Ok(fit) => CheckOutcome::verdict(
                    fit.slope <= -order + fit.residual,
                    format!(
                        "slope {:.4} over [{}, {}] (fit residual {:.2e}); guaranteed order {:.4}",
                        fit.slope, fit.window.0, fit.window.1, fit.residual, -order
                    ),
                ),
            }
        }
    }
}

fn ode_check(config: &ExperimentConfig, instance: &Instance, f_norm: f64) -> Result<CheckOutcome, ConfigError> {
    let problem = instance.problem();
    let probe = pdhg::DVector::zeros(problem.d1());
    if problem.f().gradient(&probe).is_none()
        || problem.g_conj().gradient(&pdhg::DVector::zeros(problem.d2())).is_none()
    {
        return Ok(CheckOutcome::skipped("the ODE needs gradient oracles for f and g*"));
    }
    if f_norm == 0.0 {
        return Ok(CheckOutcome::skipped("decoupled problem"));
    }
    let s = config.schedule.s;
    let init = PrimalDualPair::zeros(problem.d1(), problem.d2());
    let coarse = discretization_gap(problem, &init, s, ODE_HORIZON, ODE_REFINE).map_err(ConfigError::Core)?;
    let fine = discretization_gap(problem, &init, s / 2.0, ODE_HORIZON, ODE_REFINE).map_err(ConfigError::Core)?;
    if coarse < 1e-14 {
        return Ok(CheckOutcome::skipped("the start is an equilibrium; both gaps vanish"));
    }
    let ratio = fine / coarse;
    Ok(CheckOutcome::verdict(
        ratio <= ODE_RATIO,
        format!("gap {coarse:.4e} at s, {fine:.4e} at s/2; ratio {ratio:.4} (limit {ODE_RATIO})"),
    ))
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), ConfigError> {
    let io = |e: csv::Error| ConfigError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.fields()).map_err(io)?;
    }
    w.flush().map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
}

pub fn summary_toml(summary: &Summary) -> String {
    toml::to_string(summary).expect("summary serializes")
}

fn write_text(path: &Path, text: &str) -> Result<(), ConfigError> {
    fs::write(path, text).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), ConfigError> {
    fs::create_dir_all(dir).map_err(|e| ConfigError::Io(format!("{}: {e}", dir.display())))
}

/// Paths of the artifacts `execute` writes.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub trajectory: Option<PathBuf>,
    pub summary: PathBuf,
}

/// Run the experiment and write `trajectory.csv` (unless `checks_only`) and
/// `summary.toml` under the configured output directory.
pub fn execute(config: &ExperimentConfig, checks_only: bool) -> Result<(Outcome, Artifacts), ConfigError> {
    let prepared = Prepared::new(config)?;
    execute_prepared(config, &prepared, &config.output, checks_only)
}

pub fn execute_prepared(
    config: &ExperimentConfig,
    prepared: &Prepared,
    dir: &Path,
    checks_only: bool,
) -> Result<(Outcome, Artifacts), ConfigError> {
    let outcome = evaluate(config, prepared)?;
    ensure_dir(dir)?;
    let trajectory = if checks_only {
        None
    } else {
        let path = dir.join("trajectory.csv");
        write_csv(&path, &outcome.rows)?;
        Some(path)
    };
    let summary = dir.join("summary.toml");
    write_text(&summary, &summary_toml(&outcome.summary))?;
    Ok((outcome, Artifacts { trajectory, summary }))
}

/// Resolved settings and derived constants, for `info`.
#[derive(Debug, Clone, Serialize)]
pub struct Info {
    pub regime: String,
    pub instance: String,
    pub d1: usize,
    pub d2: usize,
    pub mu: f64,
    pub gamma: f64,
    pub f_norm: f64,
    pub s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub admissible: bool,
    pub admissibility_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

pub fn info(config: &ExperimentConfig) -> Result<Info, ConfigError> {
    let instance = config.build_instance()?;
    let p = instance.problem();
    let f_norm = p.coupling_norm().map_err(ConfigError::Core)?;
    let sched = config.make_schedule(&instance)?;
    let adm = check_admissibility(sched.s(), f_norm);
    let (mu, gamma) = (p.mu(), p.gamma());
    Ok(Info {
        regime: config.regime.name().into(),
        instance: config.instance.kind.name().into(),
        d1: p.d1(),
        d2: p.d2(),
        mu,
        gamma,
        f_norm,
        s: sched.s(),
        c: sched.c(),
        tau: sched.tau(),
        sigma: sched.sigma(),
        admissible: adm.admissible,
        admissibility_margin: adm.margin,
        k0: match config.regime {
            Regime::Accelerated => k0_threshold(mu, sched.c().unwrap()).ok(),
            _ => None,
        },
        alpha: match config.regime {
            Regime::VaryingSc => Some(varying_alpha(mu, sched.c().unwrap(), sched.s(), f_norm)),
            _ => None,
        },
        rho: (mu > 0.0 && gamma > 0.0).then(|| linear_rate(sched.s(), f_norm, mu, gamma)),
    })
}
