//! Benchmark saddle problems: Lasso, generalized Lasso (1-D total variation),
//! and quadratic pairs with an exact saddle point.
//!
//! Every generator is a pure function of its [`InstanceSpec`]: the same spec
//! gives bitwise-identical matrices.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::{run, RunOptions};
use crate::error::{Error, Result};
use crate::problem::{PrimalDualPair, SaddleProblem};
use crate::prox::{LeastSquares, LinfBallIndicator, QuadraticProxCache, ShiftedQuadratic};
use crate::schedule::{make_schedule, Regime, ScheduleParams};

/// Reference runs stop at this KKT residual before polishing.
pub const REFERENCE_TOL: f64 = 1e-12;
/// Certification level a reference saddle must reach.
pub const REFERENCE_CERTIFY_TOL: f64 = 1e-8;
const REFERENCE_BUDGET: u64 = 2_000_000;

/// First-difference operator, `(d-1) x d` with rows `(.., -1, +1, ..)`.
pub fn difference_matrix(d: usize) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::InvalidParameter { name: "d", reason: format!("difference matrix needs d >= 2, got {d}") });
    }
    Ok(DMatrix::from_fn(d - 1, d, |i, j| {
        if j == i {
            -1.0
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    }))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    // column-major fill order, fixed for reproducibility
    DMatrix::from_iterator(r, c, (0..r * c).map(|_| StandardNormal.sample(rng)))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)))
}

/// `m x d` design `U Σ Vᵀ` with orthonormal `U`, `V` and singular values
/// log-spaced from `1` to `cond`, so `λ_min(AᵀA) = 1` whenever `m >= d`.
pub fn random_design(rng: &mut ChaCha8Rng, m: usize, d: usize, cond: f64) -> Result<DMatrix<f64>> {
    if m == 0 || d == 0 {
        return Err(Error::DimensionMismatch(format!("design must be non-empty, got {m} x {d}")));
    }
    if !(cond >= 1.0 && cond.is_finite()) {
        return Err(Error::InvalidParameter { name: "cond", reason: format!("must be finite and >= 1, got {cond}") });
    }
    let r = m.min(d);
    let u = gaussian_matrix(rng, m, r).qr().q();
    let v = gaussian_matrix(rng, d, r).qr().q();
    let singular = DVector::from_fn(r, |i, _| if r == 1 { 1.0 } else { cond.powf(i as f64 / (r - 1) as f64) });
    Ok(u * DMatrix::from_diagonal(&singular) * v.transpose())
}

/// Below this relative size an eigenvalue of `AᵀA` counts as zero.
const RANK_TOL: f64 = 1e-10;

/// `min_x ½||Ax - b||² + λ||Fx||₁` as the saddle problem
/// `min_x max_{||y||∞ <= λ} ½||Ax - b||² + <Fx, y>`.
#[derive(Debug, Clone)]
pub struct GeneralizedLasso {
    cache: QuadraticProxCache,
    lambda: f64,
    problem: SaddleProblem,
}

impl GeneralizedLasso {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, lambda: f64, coupling: DMatrix<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be finite and > 0, got {lambda}"),
            });
        }
        if coupling.ncols() != a.ncols() {
            return Err(Error::DimensionMismatch(format!("F has {} columns, A has {}", coupling.ncols(), a.ncols())));
        }
        let cache = QuadraticProxCache::new(a, b)?;
        let top = cache.eigenvalues().max();
        let mu = if cache.modulus() > RANK_TOL * top.max(1.0) { cache.modulus() } else { 0.0 };
        let problem = SaddleProblem::new(
            coupling,
            Arc::new(LeastSquares { cache: cache.clone() }),
            Arc::new(LinfBallIndicator { radius: lambda }),
            mu,
            0.0,
        )?;
        Ok(GeneralizedLasso { cache, lambda, problem })
    }

    pub fn problem(&self) -> &SaddleProblem {
        &self.problem
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a(&self) -> &DMatrix<f64> {
        self.cache.a()
    }

    pub fn b(&self) -> &DVector<f64> {
        self.cache.b()
    }

    /// `Φ(x) = ½||Ax - b||² + λ||Fx||₁`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.cache.value(x) + self.lambda * (self.problem.coupling() * x).lp_norm(1)
    }

    /// High-accuracy saddle point: a fixed-step run to KKT residual `1e-12`,
    /// an active-set polish of the result, then certification at `1e-8`.
    pub fn reference_saddle(&self) -> Result<PrimalDualPair> {
        let p = &self.problem;
        let f_norm = p.coupling_norm()?;
        let schedule = make_schedule(Regime::Fixed, &ScheduleParams { mu: p.mu(), ..Default::default() }, f_norm)?;
        let opts = RunOptions { budget: REFERENCE_BUDGET, tol: REFERENCE_TOL, record_every: REFERENCE_BUDGET };
        let traj = run(p, &schedule, &PrimalDualPair::zeros(p.d1(), p.d2()), opts)?;
        let rough = traj.final_state();

        let mut best = rough.clone();
        let mut best_res = saddle_residual(p, &rough)?;
        if let Some(polished) = self.polish(&rough) {
            let res = saddle_residual(p, &polished)?;
            if res < best_res {
                best = polished;
                best_res = res;
            }
        }
        if best_res > REFERENCE_CERTIFY_TOL {
            return Err(Error::ReferenceNotCertified { residual: best_res });
        }
        Ok(best)
    }

    /// Solve the optimality system exactly on the sign pattern of `F x`:
    /// `AᵀA x + F_Zᵀ y_Z = Aᵀb - λ F_Sᵀ sign(F_S x)`, `F_Z x = 0`,
    /// where `Z` holds the (numerically) zero entries of `Fx` and `S` the rest.
    fn polish(&self, guess: &PrimalDualPair) -> Option<PrimalDualPair> {
        let f = self.problem.coupling();
        let fx = f * &guess.x;
        let cut = 1e-8 * fx.amax().max(1.0);
        let zero: Vec<usize> = (0..fx.len()).filter(|&i| fx[i].abs() <= cut).collect();
        let d = guess.x.len();
        let nz = zero.len();

        let a = self.cache.a();
        let mut kkt = DMatrix::zeros(d + nz, d + nz);
        kkt.view_mut((0, 0), (d, d)).copy_from(&a.tr_mul(a));
        let mut rhs = DVector::zeros(d + nz);
        let mut rhs_x = a.tr_mul(self.cache.b());
        let mut y = DVector::zeros(fx.len());
        for i in 0..fx.len() {
            if fx[i].abs() > cut {
                y[i] = self.lambda * fx[i].signum();
                rhs_x -= f.row(i).transpose() * y[i];
            }
        }
        for (col, &i) in zero.iter().enumerate() {
            let row = f.row(i);
            kkt.view_mut((0, d + col), (d, 1)).copy_from(&row.transpose());
            kkt.view_mut((d + col, 0), (1, d)).copy_from(&row);
        }
        rhs.rows_mut(0, d).copy_from(&rhs_x);
        let sol = kkt.lu().solve(&rhs)?;
        let x = sol.rows(0, d).into_owned();
        for (col, &i) in zero.iter().enumerate() {
            y[i] = sol[d + col];
        }
        // the pattern must reproduce itself for the solution to be a saddle point
        if y.amax() > self.lambda * (1.0 + 1e-12) || !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let fx_new = f * &x;
        for i in 0..fx.len() {
            if fx[i].abs() > cut && fx_new[i].signum() != fx[i].signum() {
                return None;
            }
        }
        Some(PrimalDualPair::new(x, y))
    }
}

fn saddle_residual(problem: &SaddleProblem, pair: &PrimalDualPair) -> Result<f64> {
    let (rx, ry) = problem.saddle_residuals(pair)?;
    Ok(rx.max(ry))
}

/// Lasso `min ½||Ax - b||² + λ||x||₁`: `F = I`, `μ = λ_min(AᵀA)`, `γ = 0`.
pub fn make_lasso(a: DMatrix<f64>, b: DVector<f64>, lambda: f64) -> Result<GeneralizedLasso> {
    let d = a.ncols();
    GeneralizedLasso::new(a, b, lambda, DMatrix::identity(d, d))
}

pub fn make_generalized_lasso(
    a: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
    coupling: DMatrix<f64>,
) -> Result<GeneralizedLasso> {
    GeneralizedLasso::new(a, b, lambda, coupling)
}

/// `f = (μ/2)||x - a||²`, `g* = (γ/2)||y - b̂||²`, with its saddle point.
#[derive(Debug, Clone)]
pub struct QuadPair {
    pub primal_center: DVector<f64>,
    pub dual_center: DVector<f64>,
    problem: SaddleProblem,
    saddle: PrimalDualPair,
}

impl QuadPair {
    pub fn problem(&self) -> &SaddleProblem {
        &self.problem
    }

    pub fn saddle(&self) -> &PrimalDualPair {
        &self.saddle
    }
}

pub fn make_quad_pair(
    primal_center: DVector<f64>,
    dual_center: DVector<f64>,
    mu: f64,
    gamma: f64,
    coupling: DMatrix<f64>,
) -> Result<QuadPair> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter { name: "mu", reason: format!("must be > 0, got {mu}") });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter { name: "gamma", reason: format!("must be > 0, got {gamma}") });
    }
    if coupling.ncols() != primal_center.len() || coupling.nrows() != dual_center.len() {
        return Err(Error::DimensionMismatch(format!(
            "F is {} x {}, centers have lengths {} and {}",
            coupling.nrows(),
            coupling.ncols(),
            primal_center.len(),
            dual_center.len()
        )));
    }
    let saddle = kkt_oracle(&primal_center, &dual_center, mu, gamma, &coupling)?;
    let problem = SaddleProblem::new(
        coupling,
        Arc::new(ShiftedQuadratic { center: primal_center.clone(), modulus: mu }),
        Arc::new(ShiftedQuadratic { center: dual_center.clone(), modulus: gamma }),
        mu,
        gamma,
    )?;
    Ok(QuadPair { primal_center, dual_center, problem, saddle })
}

/// Solves `[[μI, Fᵀ], [-F, γI]] (x, y) = (μa, γb̂)`, the optimality system of a quadratic pair.
pub fn kkt_oracle(
    primal_center: &DVector<f64>,
    dual_center: &DVector<f64>,
    mu: f64,
    gamma: f64,
    coupling: &DMatrix<f64>,
) -> Result<PrimalDualPair> {
    let (d1, d2) = (primal_center.len(), dual_center.len());
    let mut system = DMatrix::zeros(d1 + d2, d1 + d2);
    system.view_mut((0, 0), (d1, d1)).fill_diagonal(mu);
    system.view_mut((d1, d1), (d2, d2)).fill_diagonal(gamma);
    system.view_mut((0, d1), (d1, d2)).copy_from(&coupling.transpose());
    system.view_mut((d1, 0), (d2, d1)).copy_from(&(-coupling));
    let mut rhs = DVector::zeros(d1 + d2);
    rhs.rows_mut(0, d1).copy_from(&(primal_center * mu));
    rhs.rows_mut(d1, d2).copy_from(&(dual_center * gamma));
    let sol = system.lu().solve(&rhs).ok_or(Error::Singular("KKT system"))?;
    Ok(PrimalDualPair::new(sol.rows(0, d1).into_owned(), sol.rows(d1, d2).into_owned()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleCertificate {
    pub passed: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// PASS iff both saddle-inclusion residuals are at most `tol`.
pub fn certify_saddle(problem: &SaddleProblem, candidate: &PrimalDualPair, tol: f64) -> Result<SaddleCertificate> {
    let (primal_residual, dual_residual) = problem.saddle_residuals(candidate)?;
    Ok(SaddleCertificate { passed: primal_residual <= tol && dual_residual <= tol, primal_residual, dual_residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    Lasso,
    GenLasso,
    QuadPair,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::Lasso => "lasso",
            InstanceKind::GenLasso => "gen_lasso",
            InstanceKind::QuadPair => "quad_pair",
        }
    }
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(InstanceKind::Lasso),
            "gen_lasso" => Ok(InstanceKind::GenLasso),
            "quad_pair" => Ok(InstanceKind::QuadPair),
            other => Err(Error::InvalidParameter {
                name: "kind",
                reason: format!("unknown instance kind {other:?} (expected lasso, gen_lasso or quad_pair)"),
            }),
        }
    }
}

/// Seeded description of a zoo instance.
///
/// * `Lasso`: random `m x d` design with condition number `cond`, sparse
///   ground truth plus noise for `b`.
/// * `GenLasso`: 1-D total-variation denoising (`A = I`, `F` the difference
///   matrix) of a noisy piecewise-constant signal of length `d`; when `m` is
///   set, a random design replaces the identity.
/// * `QuadPair`: `d2 x d` Gaussian coupling scaled by `1/sqrt(d)`, Gaussian
///   centers, moduli `mu` and `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub seed: u64,
    pub d: usize,
    pub d2: Option<usize>,
    pub m: Option<usize>,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    pub cond: f64,
}

impl InstanceSpec {
    pub fn new(kind: InstanceKind, seed: u64, d: usize) -> Self {
        InstanceSpec { kind, seed, d, d2: None, m: None, lambda: 0.1, mu: 1.0, gamma: 1.0, cond: 1.0 }
    }

    pub fn build(&self) -> Result<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let d = self.d;
        if d == 0 {
            return Err(Error::InvalidParameter { name: "d", reason: "must be >= 1".into() });
        }
        match self.kind {
            InstanceKind::Lasso => {
                let m = self.m.unwrap_or(2 * d);
                let a = random_design(&mut rng, m, d, self.cond)?;
                let truth = DVector::from_fn(d, |i, _| if i % 3 == 0 { 1.0 + i as f64 / d as f64 } else { 0.0 });
                let b = &a * truth + gaussian_vector(&mut rng, m) * 0.1;
                Ok(Instance::Lasso(make_lasso(a, b, self.lambda)?))
            }
            InstanceKind::GenLasso => {
                let a = match self.m {
                    Some(m) => random_design(&mut rng, m, d, self.cond)?,
                    None => DMatrix::identity(d, d),
                };
                let blocks = [0.0, 2.0, -1.0, 1.0];
                let truth = DVector::from_fn(d, |i, _| blocks[(4 * i / d).min(3)]);
                let clean = &a * truth;
                let b = &clean + gaussian_vector(&mut rng, clean.len()) * 0.3;
                Ok(Instance::GenLasso(make_generalized_lasso(a, b, self.lambda, difference_matrix(d)?)?))
            }
            InstanceKind::QuadPair => {
                let d2 = self.d2.unwrap_or(d);
                let coupling = gaussian_matrix(&mut rng, d2, d) / (d as f64).sqrt();
                let a = gaussian_vector(&mut rng, d);
                let b = gaussian_vector(&mut rng, d2);
                Ok(Instance::QuadPair(make_quad_pair(a, b, self.mu, self.gamma, coupling)?))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Instance {
    Lasso(GeneralizedLasso),
    GenLasso(GeneralizedLasso),
    QuadPair(QuadPair),
}

impl Instance {
    pub fn problem(&self) -> &SaddleProblem {
        match self {
            Instance::Lasso(l) | Instance::GenLasso(l) => l.problem(),
            Instance::QuadPair(q) => q.problem(),
        }
    }

    pub fn kind(&self) -> InstanceKind {
        match self {
            Instance::Lasso(_) => InstanceKind::Lasso,
            Instance::GenLasso(_) => InstanceKind::GenLasso,
            Instance::QuadPair(_) => InstanceKind::QuadPair,
        }
    }

    /// Exact saddle for quadratic pairs; certified reference otherwise.
    pub fn saddle(&self) -> Result<PrimalDualPair> {
        match self {
            Instance::Lasso(l) | Instance::GenLasso(l) => l.reference_saddle(),
            Instance::QuadPair(q) => Ok(q.saddle().clone()),
        }
    }

    /// Primal objective, where one is defined (`Φ` for the Lasso family).
    pub fn objective(&self, x: &DVector<f64>) -> Option<f64> {
        match self {
            Instance::Lasso(l) | Instance::GenLasso(l) => Some(l.objective(x)),
            Instance::QuadPair(_) => None,
        }
    }
}
