//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Run with `cargo test -p pdhg-cli --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pdhg::lyapunov::{
    linear_distance_bound, linear_rate, numerical_error, varying_alpha, varying_distance_bound, NeForm,
};
use pdhg::ode::discretization_gap;
use pdhg::zoo::{make_quad_pair, GeneralizedLasso};
use pdhg::{
    certify_saddle, check_lemma, contraction_factors, fit_rate, make_schedule, operator_norm, optimality_residual, run,
    theorem_bound, DMatrix, DVector, Instance, InstanceKind, InstanceSpec, PrimalDualPair, Regime, RunOptions,
    ScheduleParams, TheoremConstants, Trajectory,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

const DIMS: [usize; 4] = [1, 2, 5, 20];

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn run_regime(
    inst: &Instance,
    regime: Regime,
    params: ScheduleParams,
    init: &PrimalDualPair,
    budget: u64,
) -> Result<Trajectory, String> {
    let p = inst.problem();
    let sched = make_schedule(regime, &params, p.coupling_norm().map_err(err)?).map_err(err)?;
    run(p, &sched, init, RunOptions { budget, tol: 0.0, record_every: 1 }).map_err(err)
}

fn defaults(inst: &Instance) -> ScheduleParams {
    ScheduleParams { mu: inst.problem().mu(), gamma: inst.problem().gamma(), ..Default::default() }
}

fn displaced(saddle: &PrimalDualPair, seed: u64) -> PrimalDualPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PrimalDualPair::new(
        saddle.x.map(|v| v + rng.random_range(-2.0..2.0)),
        saddle.y.map(|v| v + rng.random_range(-2.0..2.0)),
    )
}

/// Quad pairs over `DIMS` for every regime, plus full-rank Lasso for the two
/// iteration-varying regimes; 50 instances per regime.
fn lemma_instances(regime: Regime) -> Vec<InstanceSpec> {
    (0..50u64)
        .map(|i| {
            let d = DIMS[i as usize % 4];
            let lasso = regime != Regime::OptimalSs && i % 2 == 1;
            if lasso {
                InstanceSpec { lambda: 0.2, cond: 3.0, ..InstanceSpec::new(InstanceKind::Lasso, 1000 + i, d) }
            } else {
                InstanceSpec { mu: 0.5 + (i % 3) as f64, gamma: 0.7, ..InstanceSpec::new(InstanceKind::QuadPair, i, d) }
            }
        })
        .collect()
}

fn lemma_suites() -> Verdict {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    let mut steps = 0usize;
    for regime in [Regime::VaryingSc, Regime::Accelerated, Regime::OptimalSs] {
        for spec in lemma_instances(regime) {
            let inst = spec.build().map_err(err)?;
            let saddle = inst.saddle().map_err(err)?;
            let traj = run_regime(&inst, regime, defaults(&inst), &displaced(&saddle, spec.seed), 1000)?;
            let report = check_lemma(regime, &traj, inst.problem(), &saddle).map_err(err)?;
            steps += report.records.len();
            worst = worst.min(report.worst_relative_slack());
            if let Some(bad) = report.failures().next() {
                return Err(format!(
                    "{regime} on {:?} seed {}: slack {:.3e} < -{:.3e} at k = {}",
                    spec.kind, spec.seed, bad.lemma_slack, bad.tolerance, bad.k
                ));
            };
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("{steps} steps over 150 runs, min slack/tol {worst:.3e}, {secs:.1} s (limit 60 s)"))
}

fn varying_bound() -> Verdict {
    let mut checked = 0usize;
    let mut tightest = 0.0f64;
    let specs = [
        InstanceSpec { mu: 1.0, gamma: 0.5, ..InstanceSpec::new(InstanceKind::QuadPair, 1, 5) },
        InstanceSpec { mu: 2.0, gamma: 1.0, ..InstanceSpec::new(InstanceKind::QuadPair, 2, 20) },
        InstanceSpec { lambda: 0.2, cond: 3.0, ..InstanceSpec::new(InstanceKind::Lasso, 3, 10) },
    ];
    for spec in specs {
        let inst = spec.build().map_err(err)?;
        let p = inst.problem();
        let saddle = inst.saddle().map_err(err)?;
        let init = displaced(&saddle, 7);
        let traj = run_regime(&inst, Regime::VaryingSc, defaults(&inst), &init, 10_000)?;
        let report = check_lemma(Regime::VaryingSc, &traj, p, &saddle).map_err(err)?;
        let sched = &traj.schedule;
        let f_norm = sched.f_norm();
        let x0 = (&init.x - &saddle.x).norm_squared();
        let y0 = (&init.y - &saddle.y).norm_squared();
        for r in &report.records {
            let bound = r.theorem_bound.ok_or("missing bound")?;
            if r.energy > bound * (1.0 + 1e-6) {
                return Err(format!("{:?}: E({}) = {:.6e} > bound {:.6e}", spec.kind, r.k, r.energy, bound));
            }
            let dist = varying_distance_bound(r.k, p.mu(), sched.c().unwrap(), sched.s(), f_norm, x0, y0);
            if r.dist_x_sq > dist * (1.0 + 1e-6) {
                return Err(format!("{:?}: |x_{} - x*|^2 = {:.6e} > {:.6e}", spec.kind, r.k, r.dist_x_sq, dist));
            }
            if bound > 0.0 {
                tightest = tightest.max(r.energy / bound);
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} steps, largest E(k)/bound {tightest:.3e}"))
}

/// The remark instance: a full-rank Lasso, where `g*` is not strongly convex.
fn remark_instance() -> Result<Instance, String> {
    InstanceSpec { lambda: 0.2, cond: 3.0, ..InstanceSpec::new(InstanceKind::Lasso, 17, 10) }.build().map_err(err)
}

fn dist_series(traj: &Trajectory, saddle: &PrimalDualPair) -> Vec<(u64, f64)> {
    traj.records.iter().map(|r| (r.k, (&r.x - &saddle.x).norm_squared())).collect()
}

fn varying_slope_trend() -> Verdict {
    let inst = remark_instance()?;
    let p = inst.problem();
    let saddle = inst.saddle().map_err(err)?;
    let mu = p.mu();
    let f_norm = p.coupling_norm().map_err(err)?;
    let s = (0.9 / f_norm).min(mu);
    let mut slopes = Vec::new();
    let mut notes = Vec::new();
    for frac in [0.5, 0.1, 0.02] {
        let c = frac * mu;
        let params = ScheduleParams { s: Some(s), c: Some(c), mu, gamma: p.gamma(), ..Default::default() };
        let traj = run_regime(&inst, Regime::VaryingSc, params, &displaced(&saddle, 3), 10_000)?;
        let alpha = varying_alpha(mu, c, s, f_norm);
        match fit_rate(&dist_series(&traj, &saddle), (100, 10_000)) {
            Ok(fit) => {
                notes.push(format!("c={frac}mu slope {:.3} (bound order {:.3})", fit.slope, -(1.0 + alpha)));
                slopes.push(fit.slope);
            }
            Err(e) => {
                notes.push(format!("c={frac}mu no fit: {e} (bound order {:.3})", -(1.0 + alpha)));
                slopes.push(f64::NAN);
            }
        }
    }
    let trend = slopes.windows(2).all(|w| (w[1] + 2.0).abs() <= (w[0] + 2.0).abs());
    let last = slopes[2];
    ensure(trend && (-2.1..=-1.75).contains(&last), notes.join("; "))
}

fn accelerated_bound_and_slope() -> Verdict {
    let specs = [
        InstanceSpec { lambda: 0.2, cond: 3.0, ..InstanceSpec::new(InstanceKind::Lasso, 17, 10) },
        InstanceSpec { mu: 1.0, gamma: 0.5, ..InstanceSpec::new(InstanceKind::QuadPair, 4, 5) },
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for spec in specs {
        let start = Instant::now();
        let inst = spec.build().map_err(err)?;
        let p = inst.problem();
        let saddle = inst.saddle().map_err(err)?;
        let mu = p.mu();
        let params = ScheduleParams { c: Some(2.0 * mu / 3.0), mu, gamma: p.gamma(), ..Default::default() };
        let traj = run_regime(&inst, Regime::Accelerated, params, &displaced(&saddle, 5), 10_000)?;
        let consts = TheoremConstants::for_trajectory(&traj, p, &saddle).map_err(err)?;
        let series = dist_series(&traj, &saddle);
        let mut bound_ok = true;
        for &(k, d) in &series {
            let b = theorem_bound(Regime::Accelerated, k, &consts).map_err(err)?;
            if d > b * (1.0 + 1e-6) {
                bound_ok = false;
                notes.push(format!("{:?}: |x_{k} - x*|^2 = {d:.3e} > {b:.3e}", spec.kind));
                break;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        let fit = fit_rate(&series, (100, 10_000));
        let slope_ok = fit.as_ref().is_ok_and(|f| (-2.3..=-1.9).contains(&f.slope));
        notes.push(format!(
            "{:?}: bound {}, slope {}, {secs:.1} s",
            spec.kind,
            if bound_ok { "holds" } else { "violated" },
            match &fit {
                Ok(f) => format!("{:.3}", f.slope),
                Err(e) => format!("unavailable ({e})"),
            }
        ));
        ok &= bound_ok && slope_ok && secs < 30.0;
    }
    ensure(ok, format!("{} (slope target [-2.3, -1.9])", notes.join("; ")))
}

/// Quad pair with `‖F‖ = 1` exactly (up to the norm estimate).
fn unit_norm_pair(seed: u64, d: usize, mu: f64, gamma: f64) -> Result<Instance, String> {
    let base = InstanceSpec { mu, gamma, ..InstanceSpec::new(InstanceKind::QuadPair, seed, d) }.build().map_err(err)?;
    let Instance::QuadPair(q) = base else { unreachable!() };
    let f = q.problem().coupling();
    let scaled = f / operator_norm(f, 1e-14, 1_000_000).map_err(err)?;
    let pair = make_quad_pair(q.primal_center.clone(), q.dual_center.clone(), mu, gamma, scaled).map_err(err)?;
    Ok(Instance::QuadPair(pair))
}

fn linear_rate_check() -> Verdict {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut cases = Vec::new();
    for (seed, d, mu, gamma, s) in
        [(1, 5, 1.0, 1.0, 0.5), (2, 20, 0.5, 2.0, 0.8), (3, 2, 3.0, 0.3, 0.3), (4, 1, 1.0, 1.0, 0.9)]
    {
        let inst = unit_norm_pair(seed, d, mu, gamma)?;
        let p = inst.problem();
        let saddle = inst.saddle().map_err(err)?;
        let f_norm = p.coupling_norm().map_err(err)?;
        let init = displaced(&saddle, seed);
        let params = ScheduleParams { s: Some(s), mu, gamma, ..Default::default() };
        let traj = run_regime(&inst, Regime::OptimalSs, params, &init, 400)?;
        let report = check_lemma(Regime::OptimalSs, &traj, p, &saddle).map_err(err)?;
        let rho = linear_rate(s, f_norm, mu, gamma);
        let energies: Vec<_> = report.records.iter().map(|r| (r.k, r.energy)).collect();
        let c = contraction_factors(&energies).map_err(err)?;
        worst_excess = worst_excess.max(c.max - rho);
        if c.max > rho + 1e-8 {
            return Err(format!("seed {seed}: max ratio {:.10} > rho {:.10}", c.max, rho));
        }
        let w0 = mu * (&init.x - &saddle.x).norm_squared() + gamma * (&init.y - &saddle.y).norm_squared();
        let last = traj.last();
        let wk = mu * (&last.x_next - &saddle.x).norm_squared() + gamma * (&last.y_next - &saddle.y).norm_squared();
        let bound = linear_distance_bound(last.k + 1, s, f_norm, mu, gamma, w0);
        if wk > bound * (1.0 + 1e-6) {
            return Err(format!("seed {seed}: terminal weighted distance {wk:.3e} > {bound:.3e}"));
        }
        if (mu, gamma, s) == (1.0, 1.0, 0.5) {
            if c.geometric_mean > 0.6 {
                return Err(format!("geometric-mean ratio {:.6} > 0.6", c.geometric_mean));
            }
            cases.push(format!("rho {rho:.6}, geometric mean {:.6}, max {:.6}", c.geometric_mean, c.max));
        }
    }
    Ok(format!("{}; worst max-ratio minus rho {worst_excess:.3e}", cases.join("")))
}

fn ne_nonnegativity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e);
    let mut min_std = f64::INFINITY;
    let mut min_acc = f64::INFINITY;
    for i in 0..10_000 {
        let d1 = DIMS[i % 4];
        let d2 = DIMS[(i / 4) % 4];
        let f: DMatrix<f64> = DMatrix::from_fn(d2, d1, |_, _| rng.random_range(-1.0..1.0));
        let f_norm = f.clone().svd(false, false).singular_values.max();
        let s = rng.random_range(0.1..=0.99) / f_norm.max(1e-12);
        let dx = DVector::from_fn(d1, |_, _| rng.random_range(-1.0..1.0));
        let dy = DVector::from_fn(d2, |_, _| rng.random_range(-1.0..1.0));
        let tau = s * 10f64.powf(rng.random_range(-1.5..1.5));
        let ne = numerical_error(&dx, &dy, NeForm::Standard { tau, sigma: s * s / tau }, &f);
        min_std = min_std.min(ne);
        let ne = numerical_error(&dx, &dy, NeForm::Accelerated { inv_tau_prev: 1.0 / tau, s }, &f);
        min_acc = min_acc.min(ne);
    }
    ensure(
        min_std >= -1e-12 && min_acc >= -1e-12,
        format!("10^4 pairs per form; min NE standard {min_std:.3e}, accelerated {min_acc:.3e}"),
    )
}

fn optimality_residuals() -> Verdict {
    let mut worst = 0.0f64;
    let mut steps = 0usize;
    for kind in [InstanceKind::Lasso, InstanceKind::GenLasso, InstanceKind::QuadPair] {
        for seed in 0..3 {
            let inst = InstanceSpec { lambda: 0.3, ..InstanceSpec::new(kind, 40 + seed, 12) }.build().map_err(err)?;
            let p = inst.problem();
            let regimes: &[Regime] = match kind {
                InstanceKind::QuadPair => &Regime::ALL,
                _ => &[Regime::Fixed, Regime::VaryingSc, Regime::Accelerated],
            };
            for &regime in regimes {
                let init = PrimalDualPair::new(DVector::from_element(p.d1(), 1.0), DVector::zeros(p.d2()));
                let traj = run_regime(&inst, regime, defaults(&inst), &init, 500)?;
                for rec in &traj.records {
                    let (rx, ry) = optimality_residual(p, rec).map_err(err)?;
                    worst = worst.max(rx).max(ry);
                    steps += 1;
                }
            }
        }
    }
    ensure(worst <= 1e-9, format!("{steps} steps, worst residual {worst:.3e}"))
}

fn oracle_equivalence() -> Verdict {
    let mut notes = Vec::new();
    for (seed, d) in [(11u64, 1usize), (12, 2), (13, 5), (14, 20)] {
        let spec = InstanceSpec {
            mu: 1.0 + seed as f64 / 10.0,
            gamma: 0.6,
            ..InstanceSpec::new(InstanceKind::QuadPair, seed, d)
        };
        let inst = spec.build().map_err(err)?;
        let p = inst.problem();
        let saddle = inst.saddle().map_err(err)?;
        let (mu, gamma) = (p.mu(), p.gamma());
        let f_norm = p.coupling_norm().map_err(err)?;
        let sched = make_schedule(Regime::OptimalSs, &defaults(&inst), f_norm).map_err(err)?;
        let rho = linear_rate(sched.s(), f_norm, mu, gamma);
        let budget = (5.0 * 1e8f64.ln() / (1.0 / rho).ln()).floor() as u64;
        let traj =
            run(p, &sched, &PrimalDualPair::zeros(p.d1(), p.d2()), RunOptions { budget, tol: 0.0, record_every: 1 })
                .map_err(err)?;
        let hit = traj.records.iter().find(|r| {
            (mu * (&r.x_next - &saddle.x).norm_squared() + gamma * (&r.y_next - &saddle.y).norm_squared()).sqrt()
                <= 1e-8
        });
        match hit {
            Some(r) => notes.push(format!("d={d}: {} of {budget}", r.k + 1)),
            None => return Err(format!("d={d}: weighted distance above 1e-8 after {budget} steps")),
        }
    }
    Ok(format!("iterations to 1e-8: {}", notes.join(", ")))
}

fn ode_consistency() -> Verdict {
    let inst =
        InstanceSpec { mu: 1.0, gamma: 1.0, ..InstanceSpec::new(InstanceKind::QuadPair, 2, 2) }.build().map_err(err)?;
    let p = inst.problem();
    let f_norm = p.coupling_norm().map_err(err)?;
    let init = PrimalDualPair::zeros(2, 2);
    let mut gaps = Vec::new();
    for scale in [0.1, 0.05, 0.025] {
        gaps.push(discretization_gap(p, &init, scale / f_norm, 10.0, 100).map_err(err)?);
    }
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    ensure(
        ratios.iter().all(|&r| r <= 0.7),
        format!("gaps {:.3e}, {:.3e}, {:.3e}; ratios {:.4}, {:.4}", gaps[0], gaps[1], gaps[2], ratios[0], ratios[1]),
    )
}

fn tv_end_to_end() -> Verdict {
    let inst =
        InstanceSpec { lambda: 1.0, ..InstanceSpec::new(InstanceKind::GenLasso, 2024, 50) }.build().map_err(err)?;
    let Instance::GenLasso(tv) = &inst else { unreachable!() };
    let tv: &GeneralizedLasso = tv;
    let p = tv.problem();
    let reference = tv.reference_saddle().map_err(err)?;
    let optimum = tv.objective(&reference.x);
    let sched = make_schedule(Regime::Fixed, &defaults(&inst), p.coupling_norm().map_err(err)?).map_err(err)?;
    let traj = run(
        p,
        &sched,
        &PrimalDualPair::zeros(50, 49),
        RunOptions { budget: 1_000_000, tol: 1e-10, record_every: 1_000_000 },
    )
    .map_err(err)?;
    let last = traj.final_state();
    let cert = certify_saddle(p, &last, 1e-8).map_err(err)?;
    let gap = (tv.objective(&last.x) - optimum).abs();
    ensure(
        cert.passed && gap <= 1e-6,
        format!(
            "{} steps; residuals ({:.2e}, {:.2e}); |Phi - Phi*| = {gap:.2e}; distance to reference {:.2e}",
            traj.steps,
            cert.primal_residual,
            cert.dual_residual,
            (&last.x - &reference.x).amax()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("lemma descent suites", lemma_suites),
        ("varying-step energy and distance bounds", varying_bound),
        ("varying-step slope trend as c shrinks", varying_slope_trend),
        ("accelerated inverse-square bound and slope", accelerated_bound_and_slope),
        ("linear contraction and sandwich bound", linear_rate_check),
        ("numerical-error nonnegativity", ne_nonnegativity),
        ("step optimality residuals", optimality_residuals),
        ("convergence to the KKT oracle", oracle_equivalence),
        ("ODE consistency under step halving", ode_consistency),
        ("TV denoising end to end", tv_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} [{secs:6.1} s] {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
