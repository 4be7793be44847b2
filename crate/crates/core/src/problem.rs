//! Saddle problems `min_x max_y f(x) + <Fx, y> - g*(y)` and the coupling
//! operator checks that every step-size regime depends on.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed of the power-iteration start vector. Fixed so reports are reproducible.
pub const NORM_SEED: u64 = 0x005e_ed0f_f00d;

/// Default tolerance and iteration cap used wherever `||F||` is computed internally.
pub const NORM_TOL: f64 = 1e-12;
pub const NORM_MAX_ITER: usize = 200_000;

/// A closed proper convex function, seen only through its oracles.
///
/// `prox` is mandatory. The other oracles are optional and unlock, respectively,
/// the continuous-time dynamics (`gradient`), saddle certification and step
/// residuals (`subdiff_residual`), and objective reporting (`value`).
pub trait ConvexTerm: Send + Sync {
    /// `argmin_u h(u) + ||u - v||^2 / (2t)`.
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64>;

    fn gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// `dist(0, ∂h(x) + offset)`.
    fn subdiff_residual(&self, _x: &DVector<f64>, _offset: &DVector<f64>) -> Option<f64> {
        None
    }

    fn value(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

type ProxFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type ResidualFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;

/// A [`ConvexTerm`] assembled from closures, for user-supplied oracles.
pub struct FnTerm {
    prox: Box<ProxFn>,
    gradient: Option<Box<GradFn>>,
    residual: Option<Box<ResidualFn>>,
}

impl FnTerm {
    pub fn new(prox: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        FnTerm { prox: Box::new(prox), gradient: None, residual: None }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(grad));
        self
    }

    pub fn with_residual(
        mut self,
        residual: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.residual = Some(Box::new(residual));
        self
    }
}

impl ConvexTerm for FnTerm {
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.prox)(v, t)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    fn subdiff_residual(&self, x: &DVector<f64>, offset: &DVector<f64>) -> Option<f64> {
        self.residual.as_ref().map(|r| r(x, offset))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPair {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PrimalDualPair {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        PrimalDualPair { x, y }
    }

    pub fn zeros(d1: usize, d2: usize) -> Self {
        PrimalDualPair { x: DVector::zeros(d1), y: DVector::zeros(d2) }
    }
}

/// Convex-concave saddle problem with coupling matrix `F` of shape `d2 x d1`.
///
/// `mu` and `gamma` are the strong-convexity moduli of `f` and `g*`; zero means
/// "merely convex". The problem is immutable and cheap to clone, so one
/// instance can back many concurrent runs.
#[derive(Clone)]
pub struct SaddleProblem {
    coupling: DMatrix<f64>,
    f: Arc<dyn ConvexTerm>,
    g_conj: Arc<dyn ConvexTerm>,
    mu: f64,
    gamma: f64,
}

impl fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("d1", &self.d1())
            .field("d2", &self.d2())
            .field("mu", &self.mu)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl SaddleProblem {
    pub fn new(
        coupling: DMatrix<f64>,
        f: Arc<dyn ConvexTerm>,
        g_conj: Arc<dyn ConvexTerm>,
        mu: f64,
        gamma: f64,
    ) -> Result<Self> {
        if coupling.nrows() == 0 || coupling.ncols() == 0 {
            return Err(Error::DimensionMismatch("coupling matrix must be non-empty".into()));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter { name: "mu", reason: format!("must be finite and >= 0, got {mu}") });
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and >= 0, got {gamma}"),
            });
        }
        Ok(SaddleProblem { coupling, f, g_conj, mu, gamma })
    }

    pub fn d1(&self) -> usize {
        self.coupling.ncols()
    }

    pub fn d2(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn f(&self) -> &dyn ConvexTerm {
        self.f.as_ref()
    }

    pub fn g_conj(&self) -> &dyn ConvexTerm {
        self.g_conj.as_ref()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `||F||` with the crate-wide default tolerance.
    pub fn coupling_norm(&self) -> Result<f64> {
        operator_norm(&self.coupling, NORM_TOL, NORM_MAX_ITER)
    }

    pub fn check_pair(&self, pair: &PrimalDualPair) -> Result<()> {
        if pair.x.len() != self.d1() || pair.y.len() != self.d2() {
            return Err(Error::DimensionMismatch(format!(
                "pair has dims ({}, {}), problem expects ({}, {})",
                pair.x.len(),
                pair.y.len(),
                self.d1(),
                self.d2()
            )));
        }
        Ok(())
    }

    /// Saddle-point inclusion residuals
    /// `(dist(0, ∂f(x) + Fᵀy), dist(0, ∂g*(y) - Fx))`.
    pub fn saddle_residuals(&self, pair: &PrimalDualPair) -> Result<(f64, f64)> {
        self.check_pair(pair)?;
        let primal_offset = self.coupling.tr_mul(&pair.y);
        let dual_offset = -(&self.coupling * &pair.x);
        let r_x = self.f.subdiff_residual(&pair.x, &primal_offset).ok_or(Error::MissingOracle("subdiff_f"))?;
        let r_y = self.g_conj.subdiff_residual(&pair.y, &dual_offset).ok_or(Error::MissingOracle("subdiff_gstar"))?;
        Ok((r_x, r_y))
    }
}

/// Largest singular value of `f` by power iteration on `FᵀF`.
///
/// Stops once the eigen-residual `||FᵀF v - λ v||` drops below `tol * λ`, which
/// bounds the relative error of `λ = σ²` by `tol`.
pub fn operator_norm(f: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: format!("must be > 0, got {tol}") });
    }
    if f.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let gram = f.tr_mul(f);
    let n = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_SEED);
    let mut v = DVector::from_fn(n, |_, _| 1.0 + 0.1 * rng.random_range(-1.0..1.0));
    v.normalize_mut();

    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = &gram * &v;
        estimate = v.dot(&w);
        let residual = (&w - &v * estimate).norm();
        if residual <= tol * estimate {
            return Ok(estimate.sqrt());
        }
        let norm = w.norm();
        if norm == 0.0 {
            // v fell into the kernel; restart along a coordinate direction.
            v = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
            continue;
        }
        v = w / norm;
    }
    Err(Error::NormNotConverged { iterations: max_iter, estimate: estimate.max(0.0).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// `1 - s * ||F||`; positive exactly when admissible.
    pub margin: f64,
}

/// `s * ||F|| < 1`, the condition under which every Lyapunov quadratic form is
/// positive definite.
pub fn check_admissibility(s: f64, f_norm: f64) -> Admissibility {
    let margin = 1.0 - s * f_norm;
    Admissibility { admissible: margin > 0.0, margin }
}

/// Step scale used when a configuration omits `s`.
pub fn default_step_scale(f_norm: f64) -> f64 {
    if f_norm > 0.0 {
        0.9 / f_norm
    } else {
        1.0
    }
}
