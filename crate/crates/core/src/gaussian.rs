//! 3D Gaussian density primitives shared by every other module.
//!
//! Covariances are symmetrized and regularized on construction so that
//! downstream code can assume strict positive definiteness.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Workspace position or direction, meters (radians in joint-space contexts).
pub type Vec3 = Vector3<f64>;

/// Minimum eigenvalue below which a covariance gets a diagonal bump.
pub const COV_REGULARIZER: f64 = 1e-12;
/// Condition number beyond which a covariance is rejected outright.
pub const COV_MAX_CONDITION: f64 = 1e12;

/// Symmetric positive definite 3x3 covariance, meters^2.
///
/// Construction symmetrizes (filter updates accumulate asymmetry), adds
/// `COV_REGULARIZER * I` when the smallest eigenvalue falls below it, and
/// caches the inverse, determinant, and Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix3 {
    m: Matrix3<f64>,
    inv: Matrix3<f64>,
    det: f64,
    chol_lower: Matrix3<f64>,
}

impl SpdMatrix3 {
    pub fn new(raw: Matrix3<f64>) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCovariance("non-finite entry".into()));
        }
        let mut m = (raw + raw.transpose()) * 0.5;
        let eig = m.symmetric_eigenvalues();
        let min_eig = eig.min();
        let max_eig = eig.max();
        if min_eig < COV_REGULARIZER {
            m += Matrix3::identity() * COV_REGULARIZER;
        }
        let eig = m.symmetric_eigenvalues();
        let (min_eig, max_eig2) = (eig.min(), eig.max());
        if min_eig <= 0.0 || max_eig2 / min_eig > COV_MAX_CONDITION {
            return Err(Error::NearSingularCovariance(max_eig / min_eig.max(f64::MIN_POSITIVE)));
        }
        let chol = nalgebra::Cholesky::new(m)
            .ok_or_else(|| Error::BadCovariance("Cholesky factorization failed".into()))?;
        let inv = chol.inverse();
        let det = m.determinant();
        Ok(Self {
            m,
            inv,
            det,
            chol_lower: chol.l(),
        })
    }

    pub fn isotropic(var: f64) -> Result<Self> {
        Self::new(Matrix3::identity() * var)
    }

    pub fn from_diagonal(d: Vec3) -> Result<Self> {
        Self::new(Matrix3::from_diagonal(&d))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inv
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    pub fn cholesky_lower(&self) -> &Matrix3<f64> {
        &self.chol_lower
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.m.symmetric_eigenvalues().max()
    }
}

/// Trivariate normal distribution over workspace positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3 {
    pub mean: Vec3,
    pub cov: SpdMatrix3,
}

impl Gaussian3 {
    pub fn new(mean: Vec3, cov: SpdMatrix3) -> Result<Self> {
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCovariance("non-finite mean".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn isotropic(mean: Vec3, var: f64) -> Result<Self> {
        Ok(Self {
            mean,
            cov: SpdMatrix3::isotropic(var)?,
        })
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &Vec3) -> f64 {
        let d = x - self.mean;
        d.dot(&(self.cov.inverse() * d))
    }

    /// Density at `x`, 1/m^3.
    pub fn density(&self, x: &Vec3) -> f64 {
        let norm = ((2.0 * std::f64::consts::PI).powi(3) * self.cov.determinant()).sqrt();
        (-0.5 * self.mahalanobis_sq(x)).exp() / norm
    }

    /// Peak density, attained at the mean.
    pub fn peak_density(&self) -> f64 {
        let norm = ((2.0 * std::f64::consts::PI).powi(3) * self.cov.determinant()).sqrt();
        1.0 / norm
    }

    /// Draws one sample through the Cholesky factor of the covariance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let z = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        self.mean + self.cov.cholesky_lower() * z
    }
}
