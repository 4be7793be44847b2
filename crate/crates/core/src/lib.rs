//! Primal-dual hybrid gradient (PDHG) solvers for convex-concave saddle problems
//!
//! ```text
//! min_x max_y  f(x) + <Fx, y> - g*(y)
//! ```
//!
//! together with the discrete Lyapunov machinery used to certify their
//! convergence: fixed-step, iteration-varying, accelerated and
//! doubly-strongly-convex step-size regimes, per-step descent checks,
//! closed-form rate bounds, and an implicit-Euler integrator for the
//! high-resolution ODE that the fixed-step method discretizes.
//!
//! The engine only ever touches `f` and `g*` through their proximal
//! operators (see [`ConvexTerm`]), so nonsmooth terms such as the l1 norm are
//! first-class.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod lyapunov;
pub mod ode;
pub mod problem;
pub mod prox;
pub mod rates;
pub mod schedule;
pub mod zoo;

pub use engine::{optimality_residual, pdhg_step, run, RunOptions, StepOutput, StepRecord, Termination, Trajectory};
pub use error::{Error, Result};
pub use lyapunov::{check_lemma, theorem_bound, LemmaReport, LyapunovRecord, NeForm, TheoremConstants};
pub use problem::{check_admissibility, operator_norm, Admissibility, ConvexTerm, PrimalDualPair, SaddleProblem};
pub use rates::{contraction_factors, fit_rate, Contraction, RateFit};
pub use schedule::{k0_threshold, make_schedule, Regime, Schedule, ScheduleParams, StepParams};
pub use zoo::{certify_saddle, Instance, InstanceKind, InstanceSpec, SaddleCertificate};

pub use nalgebra::{DMatrix, DVector};
