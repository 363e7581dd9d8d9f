//! Environment state estimation from point clouds.
//!
//! A shape model gives each obstacle a fixed set of bounding spheres with
//! rest positions. Each frame, the sphere centers are fitted to the cloud by
//! iterating nearest-surface assignment and penalized least squares (the
//! pairwise rest distances are kept within a relative band `epsilon` through
//! a quadratic penalty). Fitted centers feed per-sphere constant-velocity
//! Kalman filters whose observation noise comes from the viewing geometry of
//! the assigned points and whose process noise comes from the recent
//! acceleration history. A hypothetical control input pulls sphere pairs
//! back toward their rest distance during prediction.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian3, SpdMatrix3, Vec3};

/// Frames of acceleration history used for the process-noise covariance.
pub const ACCEL_HISTORY_WINDOW: usize = 10;
/// Fallback acceleration standard deviation, m/s^2, when history is short.
pub const DEFAULT_SIGMA_A: f64 = 0.5;
/// Weight multiplier for the rest-distance penalty, applied as w / sigma^2.
const PENALTY_WEIGHT: f64 = 1e3;
const FIT_MAX_OUTER: usize = 50;
const FIT_POSITION_TOL: f64 = 1e-5;

/// One bounding sphere of a shape model: radius plus rest position.
#[derive(Debug, Clone, serde::Deserialize, serde::Serialize)]
pub struct ShapeSphere {
    pub radius: f64,
    pub rest_position: [f64; 3],
}

impl ShapeSphere {
    pub fn rest(&self) -> Vec3 {
        Vec3::new(self.rest_position[0], self.rest_position[1], self.rest_position[2])
    }
}

/// Shape of a single obstacle: its bounding spheres in rest pose.
#[derive(Debug, Clone, serde::Deserialize, serde::Serialize)]
pub struct ObstacleShape {
    pub name: String,
    pub spheres: Vec<ShapeSphere>,
}

impl ObstacleShape {
    /// Rest distance between spheres `j` and `h`.
    pub fn rest_distance(&self, j: usize, h: usize) -> f64 {
        (self.spheres[j].rest() - self.spheres[h].rest()).norm()
    }
}

/// The model database: one entry per obstacle in the scene.
#[derive(Debug, Clone, Default, serde::Deserialize, serde::Serialize)]
pub struct ShapeModel {
    pub obstacles: Vec<ObstacleShape>,
}

impl ShapeModel {
    pub fn sphere_count(&self) -> usize {
        self.obstacles.iter().map(|o| o.spheres.len()).sum()
    }

    pub fn rest_positions(&self) -> Vec<Vec<Vec3>> {
        self.obstacles
            .iter()
            .map(|o| o.spheres.iter().map(|s| s.rest()).collect())
            .collect()
    }
}

/// Sensor point cloud for one frame.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub sensor_sigma: f64,
}

/// Result of one shape-model fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted sphere centers, grouped like the shape model.
    pub positions: Vec<Vec<Vec3>>,
    /// Per cloud point, the (obstacle, sphere) it was assigned to.
    pub assignments: Vec<(usize, usize)>,
    pub iterations: usize,
    pub objective: f64,
}

fn surface_residual(center: &Vec3, radius: f64, point: &Vec3) -> f64 {
    (center - point).norm() - radius
}

fn assign_points(
    shape: &ShapeModel,
    positions: &[Vec<Vec3>],
    points: &[Vec3],
) -> Vec<(usize, usize)> {
    points
        .iter()
        .map(|d| {
            let mut best = (0, 0);
            let mut best_abs = f64::INFINITY;
            for (l, obstacle) in shape.obstacles.iter().enumerate() {
                for (m, sphere) in obstacle.spheres.iter().enumerate() {
                    let r = surface_residual(&positions[l][m], sphere.radius, d).abs();
                    if r < best_abs {
                        best_abs = r;
                        best = (l, m);
                    }
                }
            }
            best
        })
        .collect()
}

struct FitObjective<'a> {
    shape: &'a ShapeModel,
    cloud: &'a PointCloud,
    epsilon: f64,
    weight: f64,
}

impl FitObjective<'_> {
    fn value(&self, positions: &[Vec<Vec3>], assignments: &[(usize, usize)]) -> f64 {
        let inv_var = 1.0 / (self.cloud.sensor_sigma * self.cloud.sensor_sigma);
        let mut f = 0.0;
        for (d, &(l, m)) in self.cloud.points.iter().zip(assignments) {
            let r = surface_residual(&positions[l][m], self.shape.obstacles[l].spheres[m].radius, d);
            f += 0.5 * r * r * inv_var;
        }
        for (l, obstacle) in self.shape.obstacles.iter().enumerate() {
            for j in 0..obstacle.spheres.len() {
                for h in j + 1..obstacle.spheres.len() {
                    let c = obstacle.rest_distance(j, h);
                    if c < 1e-12 {
                        continue;
                    }
                    let rho = (positions[l][j] - positions[l][h]).norm() / c;
                    let over = (rho - (1.0 + self.epsilon)).max(0.0);
                    let under = ((1.0 - self.epsilon) - rho).max(0.0);
                    f += self.weight * (over * over + under * under);
                }
            }
        }
        f
    }

    fn gradient(
        &self,
        positions: &[Vec<Vec3>],
        assignments: &[(usize, usize)],
    ) -> (Vec<Vec<Vec3>>, Vec<Vec<f64>>) {
        let inv_var = 1.0 / (self.cloud.sensor_sigma * self.cloud.sensor_sigma);
        let mut grad: Vec<Vec<Vec3>> = positions
            .iter()
            .map(|g| vec![Vec3::zeros(); g.len()])
            .collect();
        // Diagonal curvature estimate used as a Jacobi preconditioner.
        let mut curvature: Vec<Vec<f64>> = positions
            .iter()
            .map(|g| vec![1e-9; g.len()])
            .collect();
        for (d, &(l, m)) in self.cloud.points.iter().zip(assignments) {
            let p = &positions[l][m];
            let diff = p - d;
            let dist = diff.norm();
            if dist < 1e-12 {
                continue;
            }
            let r = dist - self.shape.obstacles[l].spheres[m].radius;
            grad[l][m] += diff * (r / dist) * inv_var;
            curvature[l][m] += inv_var;
        }
        for (l, obstacle) in self.shape.obstacles.iter().enumerate() {
            for j in 0..obstacle.spheres.len() {
                for h in j + 1..obstacle.spheres.len() {
                    let c = obstacle.rest_distance(j, h);
                    if c < 1e-12 {
                        continue;
                    }
                    let diff = positions[l][j] - positions[l][h];
                    let dist = diff.norm().max(1e-12);
                    let rho = dist / c;
                    let over = (rho - (1.0 + self.epsilon)).max(0.0);
                    let under = ((1.0 - self.epsilon) - rho).max(0.0);
                    let dpen = 2.0 * self.weight * (over - under);
                    let g = diff * (dpen / (c * dist));
                    grad[l][j] += g;
                    grad[l][h] -= g;
                    let curv = 2.0 * self.weight / (c * c);
                    curvature[l][j] += curv;
                    curvature[l][h] += curv;
                }
            }
        }
        (grad, curvature)
    }
}

/// Fits the shape-model sphere centers to a point cloud, starting from
/// `init`, keeping pairwise distances within the `epsilon` band of the rest
/// distances via a quadratic penalty.
pub fn fit_environment_state(
    shape: &ShapeModel,
    cloud: &PointCloud,
    init: &[Vec<Vec3>],
    epsilon: f64,
) -> Result<FitResult> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be in (0,1), got {epsilon}"
        )));
    }
    let objective = FitObjective {
        shape,
        cloud,
        epsilon,
        weight: PENALTY_WEIGHT / (cloud.sensor_sigma * cloud.sensor_sigma),
    };
    let mut positions: Vec<Vec<Vec3>> = init.to_vec();
    let mut assignments = assign_points(shape, &positions, &cloud.points);
    let mut prev_objective = f64::INFINITY;
    let mut increases = 0;
    let mut iterations = 0;

    for outer in 0..FIT_MAX_OUTER {
        iterations = outer + 1;
        assignments = assign_points(shape, &positions, &cloud.points);
        let mut f = objective.value(&positions, &assignments);
        let mut max_move: f64 = 0.0;

        for _ in 0..10 {
            let (grad, curvature) = objective.gradient(&positions, &assignments);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let candidate: Vec<Vec<Vec3>> = positions
                    .iter()
                    .enumerate()
                    .map(|(l, group)| {
                        group
                            .iter()
                            .enumerate()
                            .map(|(m, p)| p - grad[l][m] * (alpha / curvature[l][m]))
                            .collect()
                    })
                    .collect();
                let fc = objective.value(&candidate, &assignments);
                if fc <= f {
                    for (l, group) in candidate.iter().enumerate() {
                        for (m, p) in group.iter().enumerate() {
                            max_move = max_move.max((p - positions[l][m]).norm());
                        }
                    }
                    positions = candidate;
                    f = fc;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        if f > prev_objective + 1e-12 {
            increases += 1;
            if increases >= 5 {
                return Err(Error::FitDiverged(increases));
            }
        } else {
            increases = 0;
        }
        prev_objective = f;
        if max_move < FIT_POSITION_TOL {
            break;
        }
    }

    let final_objective = objective.value(&positions, &assignments);
    Ok(FitResult {
        positions,
        assignments,
        iterations,
        objective: final_objective,
    })
}

/// Covariance of a fitted sphere center given the points assigned to it.
///
/// Each point constrains the center along its viewing normal only, so the
/// information matrix sums `n n^T / sigma^2`; unseen directions are absorbed
/// by the regularizer. Returned as a plain matrix because one-sided coverage
/// legitimately produces near-singular information (huge variance in the
/// unseen directions).
pub fn observation_covariance(
    points: &[Vec3],
    sensor_sigma: f64,
    fitted_center: &Vec3,
) -> Result<Matrix3<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let inv_var = 1.0 / (sensor_sigma * sensor_sigma);
    let mut info = Matrix3::zeros();
    for d in points {
        let diff = fitted_center - d;
        let dist = diff.norm();
        if dist < 1e-12 {
            continue;
        }
        let n = diff / dist;
        info += n * n.transpose() * inv_var;
    }
    info += Matrix3::identity() * 1e-12;
    let cov = info
        .lu()
        .solve(&Matrix3::identity())
        .ok_or_else(|| Error::BadCovariance("information matrix not invertible".into()))?;
    Ok((cov + cov.transpose()) * 0.5)
}

/// Position + velocity state of one tracked bounding sphere.
#[derive(Debug, Clone)]
pub struct TrackState {
    /// `[p; p_dot]`, meters and meters/second.
    pub state: Vector6<f64>,
    pub cov: Matrix6<f64>,
    pub time: f64,
}

impl TrackState {
    pub fn new(position: Vec3, velocity: Vec3, cov: Matrix6<f64>, time: f64) -> Self {
        let mut state = Vector6::zeros();
        state.fixed_rows_mut::<3>(0).copy_from(&position);
        state.fixed_rows_mut::<3>(3).copy_from(&velocity);
        Self { state, cov, time }
    }

    pub fn position(&self) -> Vec3 {
        self.state.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.state.fixed_rows::<3>(3).into_owned()
    }

    pub fn position_cov(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

fn transition_matrix(dt: f64) -> Matrix6<f64> {
    let mut a = Matrix6::identity();
    for i in 0..3 {
        a[(i, i + 3)] = dt;
    }
    a
}

/// Prediction step: `x <- A x + B u`, `P <- A P A^T + Q`.
///
/// The input matrix applies `u` to the position block and `dt * u` to the
/// velocity block.
pub fn kf_predict(track: &TrackState, dt: f64, u: &Vec3, process_cov: &Matrix6<f64>) -> TrackState {
    let a = transition_matrix(dt);
    let mut state = a * track.state;
    for i in 0..3 {
        state[i] += u[i];
        state[i + 3] += dt * u[i];
    }
    let cov = a * track.cov * a.transpose() + process_cov;
    TrackState {
        state,
        cov: (cov + cov.transpose()) * 0.5,
        time: track.time + dt,
    }
}

/// Measurement step with `z = C x`, `C = [I 0]`, measurement noise `obs_cov`.
pub fn kf_update(track: &TrackState, z: &Vec3, obs_cov: &Matrix3<f64>) -> Result<TrackState> {
    let p_pp = track.cov.fixed_view::<3, 3>(0, 0).into_owned();
    let mut s = p_pp + obs_cov;
    let s_inv = match s.lu().solve(&Matrix3::identity()) {
        Some(inv) => inv,
        None => {
            s += Matrix3::identity() * 1e-12;
            s.lu()
                .solve(&Matrix3::identity())
                .ok_or_else(|| Error::BadCovariance("innovation covariance singular".into()))?
        }
    };
    // K = P C^T S^-1 uses only the left 6x3 block of P.
    let p_left = track.cov.fixed_view::<6, 3>(0, 0).into_owned();
    let k = p_left * s_inv;
    let innovation = z - track.position();
    let state = track.state + k * innovation;
    let mut i_kc: Matrix6<f64> = Matrix6::identity();
    for r in 0..6 {
        for c in 0..3 {
            i_kc[(r, c)] -= k[(r, c)];
        }
    }
    let cov: Matrix6<f64> = i_kc * track.cov;
    Ok(TrackState {
        state,
        cov: (cov + cov.transpose()) * 0.5,
        time: track.time,
    })
}

/// Hypothetical control input that pulls sphere `j` toward its partner `h`
/// when their distance deviates from the rest distance.
pub fn length_preserving_input(p_j: &Vec3, p_h: &Vec3, rest_distance: f64) -> Vec3 {
    let diff = p_h - p_j;
    let dist = diff.norm();
    if dist < 1e-9 {
        return Vec3::zeros();
    }
    diff * (1.0 - rest_distance / dist)
}

/// Acceleration estimates from second differences of a position history.
pub fn accelerations_from_history(positions: &[Vec3], dt: f64) -> Vec<Vec3> {
    positions
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (dt * dt))
        .collect()
}

/// Process-noise covariance from the recent acceleration history:
/// `blockdiag(dt^4/4 * Sigma_a, dt^2/4 * Sigma_a)`.
///
/// With fewer than two acceleration samples, falls back to the isotropic
/// default `sigma_a`.
pub fn process_covariance(accel_history: &[Vec3], dt: f64, default_sigma_a: f64) -> Matrix6<f64> {
    let sigma_a = if accel_history.len() >= 2 {
        let n = accel_history.len() as f64;
        let mean: Vec3 = accel_history.iter().sum::<Vec3>() / n;
        let mut cov = Matrix3::zeros();
        for a in accel_history {
            let d = a - mean;
            cov += d * d.transpose();
        }
        cov / (n - 1.0)
    } else {
        Matrix3::identity() * default_sigma_a * default_sigma_a
    };
    let dt2 = dt * dt;
    let mut q = Matrix6::zeros();
    let pos_block = sigma_a * (0.25 * dt2 * dt2);
    let vel_block = sigma_a * (0.25 * dt2);
    q.fixed_view_mut::<3, 3>(0, 0).copy_from(&pos_block);
    q.fixed_view_mut::<3, 3>(3, 3).copy_from(&vel_block);
    q += Matrix6::identity() * 1e-15;
    q
}

/// Belief over all obstacle bounding-sphere positions at one timestamp.
#[derive(Debug, Clone)]
pub struct BeliefState {
    pub time: f64,
    /// Grouped like the shape model: per obstacle, per sphere.
    pub spheres: Vec<Vec<crate::collision::GaussianSphere>>,
}

/// Rolls the per-sphere filters forward without measurements, applying the
/// length-preserving inputs and the given per-track process noise each step.
pub fn predict_belief(
    tracks: &[Vec<TrackState>],
    shape: &ShapeModel,
    process_covs: &[Vec<Matrix6<f64>>],
    dt: f64,
    m_steps: usize,
) -> Result<Vec<BeliefState>> {
    if m_steps == 0 {
        return Err(Error::InvalidParameter("m_steps must be >= 1".into()));
    }
    if tracks.iter().all(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(
            "predict_belief needs at least one track".into(),
        ));
    }
    let mut current: Vec<Vec<TrackState>> = tracks.to_vec();
    let mut out = Vec::with_capacity(m_steps);
    for _ in 0..m_steps {
        let mut next = Vec::with_capacity(current.len());
        for (l, group) in current.iter().enumerate() {
            let mut next_group = Vec::with_capacity(group.len());
            for (j, track) in group.iter().enumerate() {
                let mut u = Vec3::zeros();
                let partners = group.len().saturating_sub(1);
                if partners > 0 {
                    for (h, other) in group.iter().enumerate() {
                        if h == j {
                            continue;
                        }
                        u += length_preserving_input(
                            &track.position(),
                            &other.position(),
                            shape.obstacles[l].rest_distance(j, h),
                        );
                    }
                    // Halved because both endpoints of a pair apply their own
                    // correction; full corrections on both sides would reflect
                    // the distance around the rest length instead of closing it.
                    u /= (2 * partners) as f64;
                }
                next_group.push(kf_predict(track, dt, &u, &process_covs[l][j]));
            }
            next.push(next_group);
        }
        current = next;
        let mut spheres = Vec::with_capacity(current.len());
        for (l, group) in current.iter().enumerate() {
            let mut group_spheres = Vec::with_capacity(group.len());
            for (j, track) in group.iter().enumerate() {
                let gaussian =
                    Gaussian3::new(track.position(), SpdMatrix3::new(track.position_cov())?)?;
                group_spheres.push(crate::collision::GaussianSphere::new(
                    gaussian,
                    shape.obstacles[l].spheres[j].radius,
                )?);
            }
            spheres.push(group_spheres);
        }
        let time = current
            .iter()
            .flat_map(|g| g.iter())
            .map(|t| t.time)
            .next()
            .expect("non-empty tracks checked above");
        out.push(BeliefState { time, spheres });
    }
    Ok(out)
}

/// Owns the per-sphere filters and position histories for a whole scene.
pub struct ObstacleTracker {
    pub shape: ShapeModel,
    pub tracks: Vec<Vec<TrackState>>,
    histories: Vec<Vec<VecDeque<Vec3>>>,
    pub default_sigma_a: f64,
}

impl ObstacleTracker {
    pub fn new(shape: ShapeModel, initial_positions: &[Vec<Vec3>], time: f64, initial_var: f64) -> Result<Self> {
        let mut cov = Matrix6::identity() * initial_var;
        // Velocity starts unknown at a looser scale.
        for i in 3..6 {
            cov[(i, i)] = initial_var.max(0.01);
        }
        let tracks: Vec<Vec<TrackState>> = initial_positions
            .iter()
            .map(|group| {
                group
                    .iter()
                    .map(|p| TrackState::new(*p, Vec3::zeros(), cov, time))
                    .collect()
            })
            .collect();
        let histories = initial_positions
            .iter()
            .map(|group| group.iter().map(|p| VecDeque::from([*p])).collect())
            .collect();
        Ok(Self {
            shape,
            tracks,
            histories,
            default_sigma_a: DEFAULT_SIGMA_A,
        })
    }

    pub fn positions(&self) -> Vec<Vec<Vec3>> {
        self.tracks
            .iter()
            .map(|g| g.iter().map(|t| t.position()).collect())
            .collect()
    }

    pub fn process_covariances(&self, dt: f64) -> Vec<Vec<Matrix6<f64>>> {
        self.histories
            .iter()
            .map(|group| {
                group
                    .iter()
                    .map(|h| {
                        let positions: Vec<Vec3> = h.iter().copied().collect();
                        let accels = accelerations_from_history(&positions, dt);
                        process_covariance(&accels, dt, self.default_sigma_a)
                    })
                    .collect()
            })
            .collect()
    }

    /// One frame: fit the cloud, then predict + update every track to `time`.
    pub fn step(&mut self, cloud: &PointCloud, time: f64, epsilon: f64) -> Result<FitResult> {
        let fit = fit_environment_state(&self.shape, cloud, &self.positions(), epsilon)?;

        // Points assigned per sphere, for the observation covariance.
        let mut assigned: Vec<Vec<Vec<Vec3>>> = self
            .tracks
            .iter()
            .map(|g| vec![Vec::new(); g.len()])
            .collect();
        for (d, &(l, m)) in cloud.points.iter().zip(&fit.assignments) {
            assigned[l][m].push(*d);
        }

        let process = self.process_covariances((time - self.tracks[0][0].time).max(1e-6));
        for l in 0..self.tracks.len() {
            for m in 0..self.tracks[l].len() {
                let dt = time - self.tracks[l][m].time;
                let predicted = if dt > 0.0 {
                    let mut u = Vec3::zeros();
                    let partners = self.tracks[l].len().saturating_sub(1);
                    if partners > 0 {
                        for h in 0..self.tracks[l].len() {
                            if h == m {
                                continue;
                            }
                            u += length_preserving_input(
                                &self.tracks[l][m].position(),
                                &self.tracks[l][h].position(),
                                self.shape.obstacles[l].rest_distance(m, h),
                            );
                        }
                        // Halved because both endpoints of a pair apply their own
                    // correction; full corrections on both sides would reflect
                    // the distance around the rest length instead of closing it.
                    u /= (2 * partners) as f64;
                    }
                    kf_predict(&self.tracks[l][m], dt, &u, &process[l][m])
                } else {
                    self.tracks[l][m].clone()
                };
                let z = fit.positions[l][m];
                let obs_cov = if assigned[l][m].is_empty() {
                    // Nothing seen this frame: skip the update.
                    self.tracks[l][m] = predicted;
                    self.push_history(l, m);
                    continue;
                } else {
                    observation_covariance(&assigned[l][m], cloud.sensor_sigma, &z)?
                };
                self.tracks[l][m] = kf_update(&predicted, &z, &obs_cov)?;
                self.push_history(l, m);
            }
        }
        Ok(fit)
    }

    fn push_history(&mut self, l: usize, m: usize) {
        let h = &mut self.histories[l][m];
        h.push_back(self.tracks[l][m].position());
        while h.len() > ACCEL_HISTORY_WINDOW {
            h.pop_front();
        }
    }

    /// Future belief states at `dt` spacing, `m_steps` of them.
    pub fn predict_belief(&self, dt: f64, m_steps: usize) -> Result<Vec<BeliefState>> {
        predict_belief(
            &self.tracks,
            &self.shape,
            &self.process_covariances(dt),
            dt,
            m_steps,
        )
    }
}

/// One timestamped point cloud for file replay.
#[derive(Debug, Clone)]
pub struct CloudFrame {
    pub time: f64,
    pub points: Vec<Vec3>,
}

/// Writes cloud frames as whitespace-separated `t x y z` lines.
pub fn write_cloud_frames<W: Write>(mut w: W, frames: &[CloudFrame]) -> Result<()> {
    for frame in frames {
        for p in &frame.points {
            writeln!(w, "{:.9} {:.9} {:.9} {:.9}", frame.time, p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

/// Reads `t x y z` lines back into frames, grouping consecutive equal
/// timestamps.
pub fn read_cloud_frames<R: BufRead>(r: R) -> Result<Vec<CloudFrame>> {
    let mut frames: Vec<CloudFrame> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Config(format!("line {}: bad float field {f:?}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != 4 {
            return Err(Error::Config(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let (t, p) = (fields[0], Vec3::new(fields[1], fields[2], fields[3]));
        match frames.last_mut() {
            Some(f) if (f.time - t).abs() < 1e-12 => f.points.push(p),
            _ => frames.push(CloudFrame {
                time: t,
                points: vec![p],
            }),
        }
    }
    Ok(frames)
}
