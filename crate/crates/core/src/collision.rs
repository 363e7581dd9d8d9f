//! Probabilistic collision detection between rigid robot spheres and
//! Gaussian-distributed obstacle spheres.
//!
//! The pairwise check reduces sphere-sphere overlap to the obstacle center
//! falling inside the combined sphere of radius `r1 + r2` around the robot
//! sphere center. The bounded approximation multiplies the density at the
//! most likely point of that region by its volume, which can never
//! underestimate the exact integral. Two baselines (center-point density and
//! enlarged confidence ellipsoid) and a Monte-Carlo estimator are provided
//! for comparison.

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian3, Vec3};
use crate::stats::chi2_quantile;

/// Robot bounding sphere with an exactly known center.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl RigidSphere {
    pub fn new(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rigid sphere needs finite center and radius > 0, got r={radius}"
            )));
        }
        Ok(Self { center, radius })
    }
}

/// Obstacle bounding sphere whose center position is Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSphere {
    pub center_dist: Gaussian3,
    pub radius: f64,
}

impl GaussianSphere {
    pub fn new(center_dist: Gaussian3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gaussian sphere needs radius > 0, got {radius}"
            )));
        }
        Ok(Self {
            center_dist,
            radius,
        })
    }
}

/// Output of the bounded pairwise collision query.
#[derive(Debug, Clone)]
pub struct CollisionQueryResult {
    /// Upper bound on the collision probability, clamped to [0, 1].
    pub probability: f64,
    /// Most likely obstacle-center position inside the combined sphere.
    pub x_max: Vec3,
    /// Lagrange multiplier of the boundary-constrained maximization.
    pub lambda: f64,
    /// True when the obstacle mean lies inside the combined sphere.
    pub interior: bool,
}

/// Collision-probability method used for pairwise checks and aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollisionMethod {
    /// Density at the maximum-probability point times the combined volume.
    Bound,
    /// Density at the robot sphere center times the combined volume.
    Center,
    /// Deterministic check against the confidence ellipsoid; reports 1 or 0.
    Enlarged { delta_cl: f64 },
}

const LAMBDA_MAX_ITERS: usize = 200;

fn x_of_lambda(obs: &Gaussian3, o: &Vec3, lambda: f64) -> Vec3 {
    let inv = obs.cov.inverse();
    let lhs = inv + Matrix3::identity() * lambda;
    let rhs = inv * obs.mean + o * lambda;
    lhs.lu().solve(&rhs).expect("SPD + lambda*I is invertible")
}

/// Finds the point of the combined sphere around `robot.center` with the
/// highest obstacle density, via bisection on the Lagrange multiplier.
///
/// Returns `(x_max, lambda, interior)`. When the obstacle mean is inside the
/// combined sphere the unconstrained maximum is feasible and is returned
/// directly with `lambda = 0`.
pub fn max_probability_point(
    robot: &RigidSphere,
    obs: &GaussianSphere,
    tol: f64,
) -> Result<(Vec3, f64, bool)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    let o = robot.center;
    let p = obs.center_dist.mean;
    let r = robot.radius + obs.radius;
    let dist = (p - o).norm();
    if dist <= r {
        return Ok((p, 0.0, true));
    }

    // ||x(lambda) - o|| decreases from ||p - o|| at lambda=0 toward 0; bracket
    // the boundary crossing and bisect.
    let inv_max_eig = 1.0 / obs.center_dist.cov.matrix().symmetric_eigenvalues().min();
    let mut hi = (inv_max_eig * dist / r).max(1e-6);
    let mut doublings = 0;
    while (x_of_lambda(&obs.center_dist, &o, hi) - o).norm() >= r {
        hi *= 2.0;
        doublings += 1;
        if doublings > LAMBDA_MAX_ITERS {
            return Err(Error::NoConvergence {
                iterations: doublings,
                residual: (x_of_lambda(&obs.center_dist, &o, hi) - o).norm() - r,
            });
        }
    }
    let mut lo = 0.0;
    let mut x = x_of_lambda(&obs.center_dist, &o, hi);
    for _ in 0..LAMBDA_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        x = x_of_lambda(&obs.center_dist, &o, mid);
        let f = (x - o).norm() - r;
        if f.abs() < tol {
            return Ok((x, mid, false));
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = ((x - o).norm() - r).abs();
    if residual < tol * 10.0 {
        Ok((x, 0.5 * (lo + hi), false))
    } else {
        Err(Error::NoConvergence {
            iterations: LAMBDA_MAX_ITERS,
            residual,
        })
    }
}

/// Volume of the combined sphere, `4/3 * pi * (r1 + r2)^3`.
pub fn combined_volume(robot: &RigidSphere, obs: &GaussianSphere) -> f64 {
    let r = robot.radius + obs.radius;
    4.0 / 3.0 * std::f64::consts::PI * r * r * r
}

/// Upper bound on the pairwise collision probability: density at the
/// maximum-probability point times the combined-sphere volume, clamped to 1.
pub fn collision_probability_bound(
    robot: &RigidSphere,
    obs: &GaussianSphere,
) -> Result<CollisionQueryResult> {
    let (x_max, lambda, interior) = max_probability_point(robot, obs, 1e-9)?;
    let p = combined_volume(robot, obs) * obs.center_dist.density(&x_max);
    Ok(CollisionQueryResult {
        probability: p.min(1.0),
        x_max,
        lambda,
        interior,
    })
}

/// Center-point approximation: density at the robot sphere center times the
/// combined volume. Fast, but not a bound in either direction.
pub fn collision_probability_center(robot: &RigidSphere, obs: &GaussianSphere) -> f64 {
    (combined_volume(robot, obs) * obs.center_dist.density(&robot.center)).min(1.0)
}

fn enlarged_hit(robot: &RigidSphere, obs: &GaussianSphere, quantile: f64) -> Result<bool> {
    // x_max minimizes the Mahalanobis distance over the combined sphere, so
    // the ellipsoid (inflated by r2 through the combined-sphere radius)
    // intersects the robot sphere iff its Mahalanobis distance is within the
    // quantile.
    let (x_max, _, interior) = max_probability_point(robot, obs, 1e-9)?;
    if interior {
        return Ok(true);
    }
    Ok(obs.center_dist.mahalanobis_sq(&x_max) <= quantile)
}

/// Enlarged-bounding-volume baseline: true when the `delta_cl` confidence
/// ellipsoid of the obstacle center, inflated by the obstacle radius,
/// intersects the robot sphere.
pub fn collision_enlarged_bv(
    robot: &RigidSphere,
    obs: &GaussianSphere,
    delta_cl: f64,
) -> Result<bool> {
    if !(0.0 < delta_cl && delta_cl < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must be in (0,1), got {delta_cl}"
        )));
    }
    enlarged_hit(robot, obs, chi2_quantile(3.0, delta_cl)?)
}

/// Smooth violation depth for the enlarged-bounding-volume check, in [0, 1].
///
/// Zero exactly when the check reports no collision; ramps toward 1 as the
/// obstacle mean approaches the combined sphere. Gives gradient-based
/// planners a usable descent direction where the boolean check has none.
pub fn enlarged_violation_depth(
    robot: &RigidSphere,
    obs: &GaussianSphere,
    quantile: f64,
) -> Result<f64> {
    let (x_max, _, interior) = max_probability_point(robot, obs, 1e-9)?;
    if interior {
        return Ok(1.0);
    }
    let m2 = obs.center_dist.mahalanobis_sq(&x_max);
    Ok((1.0 - m2 / quantile).max(0.0))
}

/// Monte-Carlo estimate of the exact pairwise collision probability with its
/// standard error. Samples the obstacle center and counts combined-sphere
/// membership.
pub fn collision_probability_mc(
    robot: &RigidSphere,
    obs: &GaussianSphere,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = robot.radius + obs.radius;
    let r2 = r * r;
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let x = obs.center_dist.sample(&mut rng);
        if (x - robot.center).norm_squared() <= r2 {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    let se = (p * (1.0 - p) / n_samples as f64).sqrt();
    Ok((p, se))
}

/// Aggregates pairwise values over grouped spheres: max over member-sphere
/// pairs within each (link, obstacle) pair, complement-product across pairs.
pub fn aggregate_pairwise<F>(
    robot_links: &[Vec<RigidSphere>],
    obstacles: &[Vec<GaussianSphere>],
    mut pair_value: F,
) -> Result<f64>
where
    F: FnMut(&RigidSphere, &GaussianSphere) -> Result<f64>,
{
    if robot_links.is_empty() || obstacles.is_empty() {
        return Ok(0.0);
    }
    let mut no_collision = 1.0;
    for link in robot_links {
        for obstacle in obstacles {
            let mut worst: f64 = 0.0;
            for b in link {
                for s in obstacle {
                    worst = worst.max(pair_value(b, s)?);
                }
            }
            no_collision *= 1.0 - worst.min(1.0);
        }
    }
    Ok(1.0 - no_collision)
}

/// Collision probability of a whole robot configuration against all obstacle
/// belief spheres, with the chosen pairwise method.
pub fn configuration_collision_probability(
    robot_links: &[Vec<RigidSphere>],
    obstacles: &[Vec<GaussianSphere>],
    method: CollisionMethod,
) -> Result<f64> {
    match method {
        CollisionMethod::Bound => aggregate_pairwise(robot_links, obstacles, |b, s| {
            Ok(collision_probability_bound(b, s)?.probability)
        }),
        CollisionMethod::Center => {
            aggregate_pairwise(robot_links, obstacles, |b, s| {
                Ok(collision_probability_center(b, s))
            })
        }
        CollisionMethod::Enlarged { delta_cl } => {
            if !(0.0 < delta_cl && delta_cl < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "confidence level must be in (0,1), got {delta_cl}"
                )));
            }
            let q = chi2_quantile(3.0, delta_cl)?;
            aggregate_pairwise(robot_links, obstacles, |b, s| {
                Ok(if enlarged_hit(b, s, q)? { 1.0 } else { 0.0 })
            })
        }
    }
}
