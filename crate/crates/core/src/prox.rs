//! Closed-form and cached-factorization proximal operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::ConvexTerm;

/// Componentwise `sign(v) * max(|v| - t, 0)`, the prox of `t * ||.||_1`.
///
/// Points with `|v_i| == t` map to exactly zero.
pub fn soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|vi| {
        let shrunk = vi.abs() - t;
        if shrunk > 0.0 {
            vi.signum() * shrunk
        } else {
            0.0
        }
    })
}

/// Projection onto `{y : ||y||_inf <= r}`, the prox of its indicator for every step size.
pub fn project_linf_ball(w: &DVector<f64>, r: f64) -> DVector<f64> {
    w.map(|wi| wi.clamp(-r, r))
}

/// `(v + t m a) / (1 + t m)`, the prox of `(m/2) ||u - a||²`.
pub fn prox_shifted_quadratic(a: &DVector<f64>, m: f64, v: &DVector<f64>, t: f64) -> DVector<f64> {
    (v + a * (t * m)) / (1.0 + t * m)
}

/// `dist(0, weight * ∂||x||_1 + offset)`, evaluated coordinate by coordinate.
pub fn l1_subdiff_residual(x: &DVector<f64>, weight: f64, offset: &DVector<f64>) -> f64 {
    x.iter()
        .zip(offset.iter())
        .map(|(&xi, &oi)| {
            let d = if xi > 0.0 {
                (weight + oi).abs()
            } else if xi < 0.0 {
                (oi - weight).abs()
            } else {
                (oi.abs() - weight).max(0.0)
            };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `dist(0, N(y) + offset)` for the normal cone `N` of the l-infinity ball of radius `r`.
///
/// Coordinates within `1e-12 * max(1, r)` of a face count as on it; a point
/// outside the ball has an empty subdifferential and gives `+inf`.
pub fn linf_ball_normal_residual(y: &DVector<f64>, r: f64, offset: &DVector<f64>) -> f64 {
    let slack = 1e-12 * r.max(1.0);
    let mut acc = 0.0;
    for (&yi, &oi) in y.iter().zip(offset.iter()) {
        let d = if yi.abs() > r + slack {
            return f64::INFINITY;
        } else if yi >= r - slack && r > 0.0 {
            oi.max(0.0)
        } else if yi <= -r + slack && r > 0.0 {
            (-oi).max(0.0)
        } else if r == 0.0 {
            0.0
        } else {
            oi.abs()
        };
        acc += d * d;
    }
    acc.sqrt()
}

/// Spectral factorization of `AᵀA` backing the prox of `½||Au - b||²` for any step size.
#[derive(Debug, Clone)]
pub struct QuadraticProxCache {
    a: DMatrix<f64>,
    b: DVector<f64>,
    eigvecs: DMatrix<f64>,
    /// Ascending, clamped at zero.
    eigvals: DVector<f64>,
    atb: DVector<f64>,
}

impl QuadraticProxCache {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!("A has {} rows, b has {} entries", a.nrows(), b.len())));
        }
        let gram = a.tr_mul(&a);
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigvals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
        let eigvecs = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
        let atb = a.tr_mul(&b);
        Ok(QuadraticProxCache { a, b, eigvecs, eigvals, atb })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    /// `λ_min(AᵀA)`, the certified strong-convexity modulus of `½||Ax - b||²`.
    pub fn modulus(&self) -> f64 {
        self.eigvals[0]
    }

    /// `u = V (I + tΛ)⁻¹ Vᵀ (v + t Aᵀb)`.
    pub fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        let rhs = v + &self.atb * t;
        let mut coeffs = self.eigvecs.tr_mul(&rhs);
        for (c, &lambda) in coeffs.iter_mut().zip(self.eigvals.iter()) {
            *c /= 1.0 + t * lambda;
        }
        &self.eigvecs * coeffs
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * x - &self.b))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared()
    }
}

pub fn prox_least_squares(cache: &QuadraticProxCache, v: &DVector<f64>, t: f64) -> DVector<f64> {
    cache.prox(v, t)
}

/// `f(x) = ½||Ax - b||²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub cache: QuadraticProxCache,
}

impl ConvexTerm for LeastSquares {
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        self.cache.prox(v, t)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.cache.gradient(x))
    }

    fn subdiff_residual(&self, x: &DVector<f64>, offset: &DVector<f64>) -> Option<f64> {
        Some((self.cache.gradient(x) + offset).norm())
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.cache.value(x))
    }
}

/// `h(u) = (m/2)||u - center||²`.
#[derive(Debug, Clone)]
pub struct ShiftedQuadratic {
    pub center: DVector<f64>,
    pub modulus: f64,
}

impl ConvexTerm for ShiftedQuadratic {
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        prox_shifted_quadratic(&self.center, self.modulus, v, t)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some((x - &self.center) * self.modulus)
    }

    fn subdiff_residual(&self, x: &DVector<f64>, offset: &DVector<f64>) -> Option<f64> {
        Some(((x - &self.center) * self.modulus + offset).norm())
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(0.5 * self.modulus * (x - &self.center).norm_squared())
    }
}

/// Indicator of `{y : ||y||_inf <= radius}`, the conjugate of `radius * ||.||_1`.
#[derive(Debug, Clone)]
pub struct LinfBallIndicator {
    pub radius: f64,
}

impl ConvexTerm for LinfBallIndicator {
    fn prox(&self, v: &DVector<f64>, _t: f64) -> DVector<f64> {
        project_linf_ball(v, self.radius)
    }

    fn subdiff_residual(&self, x: &DVector<f64>, offset: &DVector<f64>) -> Option<f64> {
        Some(linf_ball_normal_residual(x, self.radius, offset))
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(if x.amax() <= self.radius { 0.0 } else { f64::INFINITY })
    }
}

/// `weight * ||x||_1`.
#[derive(Debug, Clone)]
pub struct L1Norm {
    pub weight: f64,
}

impl ConvexTerm for L1Norm {
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        soft_threshold(v, t * self.weight)
    }

    fn subdiff_residual(&self, x: &DVector<f64>, offset: &DVector<f64>) -> Option<f64> {
        Some(l1_subdiff_residual(x, self.weight, offset))
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.weight * x.lp_norm(1))
    }
}
