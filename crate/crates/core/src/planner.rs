//! Space-time trajectory optimization with chance constraints.
//!
//! A trajectory is a uniformly spaced sequence of joint configurations. The
//! objective combines a squared-second-difference smoothness term, a squared
//! hinge penalty against known static geometry, and a chance-constraint term
//! that penalizes keyframes whose collision probability against the predicted
//! obstacle beliefs exceeds the confidence budget. Descent steps are
//! preconditioned by the second-difference metric so updates stay smooth, and
//! when optimization alone cannot restore feasibility the approach segment is
//! time-stretched by inserting keyframes (the robot slows down or waits).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::collision::{
    aggregate_pairwise, configuration_collision_probability, enlarged_violation_depth,
    CollisionMethod,
};
use crate::error::{Error, Result};
use crate::estimation::{BeliefState, ObstacleTracker, PointCloud};
use crate::gaussian::Vec3;
use crate::robot::{Configuration, RobotModel};
use crate::stats::chi2_quantile;

/// Uniformly spaced joint-space trajectory with a frozen (already executed or
/// committed) prefix.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub keyframes: Vec<Configuration>,
    /// Time of keyframe 0.
    pub t0: f64,
    /// Keyframe spacing, seconds.
    pub dt: f64,
    /// Keyframes with index < `frozen` are never modified.
    pub frozen: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Configuration at an arbitrary time, linearly interpolated between
    /// keyframes and clamped to the endpoints.
    pub fn sample(&self, t: f64) -> Configuration {
        let s = ((t - self.t0) / self.dt).clamp(0.0, (self.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.len() - 2);
        let frac = s - i as f64;
        Configuration(&self.keyframes[i].0 * (1.0 - frac) + &self.keyframes[i + 1].0 * frac)
    }

    /// Workspace length of the end-effector polyline.
    pub fn workspace_length(&self, robot: &RobotModel) -> Result<f64> {
        let mut total = 0.0;
        let mut prev: Option<Vec3> = None;
        for q in &self.keyframes {
            let p = robot.end_effector(q)?;
            if let Some(prev) = prev {
                total += (p - prev).norm();
            }
            prev = Some(p);
        }
        Ok(total)
    }
}

/// Known static geometry the robot must clear deterministically.
#[derive(Debug, Clone)]
pub enum StaticShape {
    Sphere { center: Vec3, radius: f64 },
    Aabb { min: Vec3, max: Vec3 },
}

impl StaticShape {
    /// Signed distance from `p` to the shape surface (negative inside) and
    /// its gradient with respect to `p`.
    pub fn surface_distance(&self, p: &Vec3) -> (f64, Vec3) {
        match self {
            StaticShape::Sphere { center, radius } => {
                let diff = p - center;
                let dist = diff.norm();
                if dist < 1e-12 {
                    (-radius, Vec3::x())
                } else {
                    (dist - radius, diff / dist)
                }
            }
            StaticShape::Aabb { min, max } => {
                let clamped = Vec3::new(
                    p.x.clamp(min.x, max.x),
                    p.y.clamp(min.y, max.y),
                    p.z.clamp(min.z, max.z),
                );
                let diff = p - clamped;
                let dist = diff.norm();
                if dist > 1e-12 {
                    return (dist, diff / dist);
                }
                // Inside: distance to the nearest face, gradient toward it.
                let mut best = f64::INFINITY;
                let mut normal = Vec3::x();
                for axis in 0..3 {
                    let lo = p[axis] - min[axis];
                    let hi = max[axis] - p[axis];
                    if lo < best {
                        best = lo;
                        normal = -Vec3::ith(axis, 1.0);
                    }
                    if hi < best {
                        best = hi;
                        normal = Vec3::ith(axis, 1.0);
                    }
                }
                (-best, normal)
            }
        }
    }
}

/// Collection of static shapes.
#[derive(Debug, Clone, Default)]
pub struct StaticWorld {
    pub shapes: Vec<StaticShape>,
}

/// Optimizer and chance-constraint settings.
#[derive(Debug, Clone)]
pub struct PlannerSettings {
    /// Required per-keyframe collision-free confidence, in (0,1).
    pub delta_cl: f64,
    /// Keyframe spacing, seconds.
    pub keyframe_dt: f64,
    /// Keyframes per planning step; the chance window spans the next two of
    /// these blocks.
    pub steps_per_plan: usize,
    pub max_iterations: usize,
    /// Preconditioned step size before backtracking.
    pub step_size: f64,
    /// Required static clearance, meters.
    pub clearance: f64,
    pub static_weight: f64,
    pub chance_weight: f64,
    /// Maximum duration extensions per planning step before reporting
    /// infeasibility.
    pub max_extensions: usize,
    pub grad_tolerance: f64,
    /// Finite-difference step for probability gradients, radians.
    pub fd_step: f64,
    /// Shape-fit rest-distance band.
    pub fit_epsilon: f64,
    /// Optional wall-clock budget per optimize call, seconds. Off by default
    /// so repeated runs stay bit-identical.
    pub time_budget: Option<f64>,
    pub method: CollisionMethod,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            delta_cl: 0.99,
            keyframe_dt: 0.1,
            steps_per_plan: 5,
            max_iterations: 100,
            step_size: 0.05,
            clearance: 0.02,
            static_weight: 200.0,
            chance_weight: 200.0,
            max_extensions: 8,
            grad_tolerance: 1e-8,
            fd_step: 1e-5,
            fit_epsilon: 0.05,
            time_budget: None,
            method: CollisionMethod::Bound,
        }
    }
}

/// Straight joint-space interpolation from `q_s` to `q_g` over `n` segments
/// (`n + 1` keyframes); this is the exact minimizer of the
/// squared-second-difference objective with pinned endpoints.
pub fn initialize_trajectory(
    q_s: &Configuration,
    q_g: &Configuration,
    n: usize,
    dt: f64,
    t0: f64,
) -> Result<Trajectory> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 segments, got {n}"
        )));
    }
    if q_s.dof() != q_g.dof() {
        return Err(Error::DimensionMismatch {
            expected: q_s.dof(),
            got: q_g.dof(),
        });
    }
    let keyframes = (0..=n)
        .map(|i| {
            let a = i as f64 / n as f64;
            Configuration(&q_s.0 * (1.0 - a) + &q_g.0 * a)
        })
        .collect();
    Ok(Trajectory {
        keyframes,
        t0,
        dt,
        frozen: 0,
    })
}

/// Sum of squared second differences over interior keyframes, with the
/// gradient per keyframe.
pub fn smoothness_cost(traj: &Trajectory) -> (f64, Vec<DVector<f64>>) {
    let n = traj.len();
    let dof = traj.keyframes[0].dof();
    let mut cost = 0.0;
    let mut grad = vec![DVector::zeros(dof); n];
    for i in 1..n - 1 {
        let s = &traj.keyframes[i - 1].0 - 2.0 * &traj.keyframes[i].0 + &traj.keyframes[i + 1].0;
        cost += s.norm_squared();
        grad[i - 1] += 2.0 * &s;
        grad[i] -= 4.0 * &s;
        grad[i + 1] += 2.0 * &s;
    }
    (cost, grad)
}

/// Squared hinge penalty against static geometry with its analytic gradient:
/// each robot sphere must clear each shape by `clearance`.
pub fn static_cost(
    traj: &Trajectory,
    world: &StaticWorld,
    robot: &RobotModel,
    clearance: f64,
) -> Result<(f64, Vec<DVector<f64>>)> {
    let n = traj.len();
    let dof = traj.keyframes[0].dof();
    let mut cost = 0.0;
    let mut grad = vec![DVector::zeros(dof); n];
    if world.shapes.is_empty() {
        return Ok((cost, grad));
    }
    for (i, q) in traj.keyframes.iter().enumerate() {
        let (spheres, jacobians) = robot.link_sphere_jacobians(q)?;
        for (link, link_spheres) in spheres.iter().enumerate() {
            for (k, sphere) in link_spheres.iter().enumerate() {
                for shape in &world.shapes {
                    let (dist, normal) = shape.surface_distance(&sphere.center);
                    let pen = (clearance + sphere.radius - dist).max(0.0);
                    if pen > 0.0 {
                        cost += pen * pen;
                        // d(pen^2)/dq = -2 pen * J^T n.
                        let jtn = jacobians[link][k].transpose() * normal;
                        grad[i] -= 2.0 * pen * jtn;
                    }
                }
            }
        }
    }
    Ok((cost, grad))
}

fn belief_at<'a>(beliefs: &'a [BeliefState], t: f64, tol: f64) -> Result<&'a BeliefState> {
    beliefs
        .iter()
        .find(|b| (b.time - t).abs() < tol)
        .ok_or(Error::MissingBelief(t))
}

/// Collision probability of one configuration against one belief, with the
/// chosen method. The enlarged method uses a smooth violation depth in [0,1]
/// (zero exactly where the boolean ellipsoid check passes) so gradient
/// descent has a usable direction.
pub fn keyframe_probability(
    robot: &RobotModel,
    q: &Configuration,
    belief: &BeliefState,
    method: CollisionMethod,
) -> Result<f64> {
    let links = robot.link_spheres(q)?;
    match method {
        CollisionMethod::Enlarged { delta_cl } => {
            let quantile = chi2_quantile(3.0, delta_cl)?;
            let flat: Vec<_> = belief.spheres.iter().flat_map(|g| g.iter().cloned()).collect();
            aggregate_pairwise(&links, &[flat], |b, s| {
                enlarged_violation_depth(b, s, quantile)
            })
        }
        _ => {
            let flat: Vec<_> = belief.spheres.iter().flat_map(|g| g.iter().cloned()).collect();
            configuration_collision_probability(&links, &[flat], method)
        }
    }
}

/// Chance-constraint evaluation over the active window `[start, end]`
/// (inclusive keyframe indices): per-keyframe probabilities, hinge cost
/// `sum(max(P_i - (1 - delta_cl), 0))`, and per-keyframe feasibility.
pub struct ChanceEval {
    pub cost: f64,
    /// (keyframe index, probability, feasible) for each window keyframe.
    pub keyframes: Vec<(usize, f64, bool)>,
}

pub fn chance_constraint_cost(
    traj: &Trajectory,
    beliefs: &[BeliefState],
    robot: &RobotModel,
    delta_cl: f64,
    method: CollisionMethod,
    window: (usize, usize),
) -> Result<ChanceEval> {
    let budget = 1.0 - delta_cl;
    let tol = traj.dt * 0.5;
    let mut cost = 0.0;
    let mut keyframes = Vec::new();
    for i in window.0..=window.1.min(traj.len() - 1) {
        let belief = belief_at(beliefs, traj.time_of(i), tol)?;
        let p = keyframe_probability(robot, &traj.keyframes[i], belief, method)?;
        cost += (p - budget).max(0.0);
        keyframes.push((i, p, p < budget));
    }
    Ok(ChanceEval { cost, keyframes })
}

/// The chance window checked while the prefix up to `frozen` executes:
/// one planning block ahead, spanning the following block.
fn chance_window(traj: &Trajectory, m: usize) -> (usize, usize) {
    let last = traj.len() - 1;
    let start = if traj.frozen == 0 {
        m.min(last)
    } else {
        traj.frozen.min(last)
    };
    let end = (start + m).min(last);
    (start, end)
}

struct CostBreakdown {
    total: f64,
    chance: ChanceEval,
}

fn total_cost(
    traj: &Trajectory,
    beliefs: &[BeliefState],
    world: &StaticWorld,
    robot: &RobotModel,
    settings: &PlannerSettings,
    window: (usize, usize),
) -> Result<CostBreakdown> {
    let (smooth, _) = smoothness_cost(traj);
    let (stat, _) = static_cost(traj, world, robot, settings.clearance)?;
    let chance = chance_constraint_cost(
        traj,
        beliefs,
        robot,
        settings.delta_cl,
        settings.method,
        window,
    )?;
    Ok(CostBreakdown {
        total: smooth + settings.static_weight * stat + settings.chance_weight * chance.cost,
        chance,
    })
}

fn total_gradient(
    traj: &Trajectory,
    beliefs: &[BeliefState],
    world: &StaticWorld,
    robot: &RobotModel,
    settings: &PlannerSettings,
    window: (usize, usize),
) -> Result<Vec<DVector<f64>>> {
    let dof = traj.keyframes[0].dof();
    let (_, smooth_grad) = smoothness_cost(traj);
    let (_, static_grad) = static_cost(traj, world, robot, settings.clearance)?;
    let mut grad: Vec<DVector<f64>> = smooth_grad
        .into_iter()
        .zip(static_grad)
        .map(|(s, st)| s + settings.static_weight * st)
        .collect();

    // Chance term: central finite differences on P_i, active only where the
    // hinge is engaged (P_i depends on keyframe i alone).
    let budget = 1.0 - settings.delta_cl;
    let tol = traj.dt * 0.5;
    let h = settings.fd_step;
    for i in window.0..=window.1.min(traj.len() - 1) {
        let belief = belief_at(beliefs, traj.time_of(i), tol)?;
        let p = keyframe_probability(robot, &traj.keyframes[i], belief, settings.method)?;
        if p <= budget {
            continue;
        }
        for d in 0..dof {
            let mut plus = traj.keyframes[i].clone();
            plus.0[d] += h;
            robot.clamp_to_limits(&mut plus.0);
            let mut minus = traj.keyframes[i].clone();
            minus.0[d] -= h;
            robot.clamp_to_limits(&mut minus.0);
            let span = plus.0[d] - minus.0[d];
            if span.abs() < 1e-12 {
                continue; // pinned against both limits
            }
            let pp = keyframe_probability(robot, &plus, belief, settings.method)?;
            let pm = keyframe_probability(robot, &minus, belief, settings.method)?;
            grad[i][d] += settings.chance_weight * (pp - pm) / span;
        }
    }
    Ok(grad)
}

/// Cholesky factor of the pinned-endpoint second-difference metric over the
/// free keyframes; solving against it turns the raw gradient into a smooth
/// covariant step.
fn precondition_factor(free: usize) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if free == 0 {
        return None;
    }
    let mut m = DMatrix::zeros(free, free);
    for i in 0..free {
        m[(i, i)] = 2.0;
        if i + 1 < free {
            m[(i, i + 1)] = -1.0;
            m[(i + 1, i)] = -1.0;
        }
    }
    m.cholesky()
}

/// Diagnostics from one optimize call.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Total cost after each accepted descent step, starting at the initial
    /// cost; non-increasing by construction of the backtracking line search.
    pub cost_trace: Vec<f64>,
    /// Per window keyframe: (index, probability, feasible).
    pub window: Vec<(usize, f64, bool)>,
}

/// Preconditioned gradient descent with backtracking over the free keyframes
/// (frozen prefix and final goal pinned). Monotone non-increasing in the
/// total cost; returns the best trajectory found.
pub fn optimize(
    traj: &Trajectory,
    beliefs: &[BeliefState],
    world: &StaticWorld,
    robot: &RobotModel,
    settings: &PlannerSettings,
) -> Result<(Trajectory, OptimizeReport)> {
    let started = Instant::now();
    let mut current = traj.clone();
    let n = current.len();
    let window = chance_window(&current, settings.steps_per_plan);
    let first_free = current.frozen.max(1);
    let free = n.saturating_sub(first_free + 1);

    let mut eval = total_cost(&current, beliefs, world, robot, settings, window)?;
    let initial_cost = eval.total;
    let mut cost_trace = vec![initial_cost];
    let mut iterations = 0;

    if let Some(chol) = precondition_factor(free) {
        let dof = current.keyframes[0].dof();
        for _ in 0..settings.max_iterations {
            if let Some(budget) = settings.time_budget {
                if started.elapsed().as_secs_f64() > budget {
                    break;
                }
            }
            let grad = total_gradient(&current, beliefs, world, robot, settings, window)?;
            let grad_norm: f64 = grad[first_free..first_free + free]
                .iter()
                .map(|g| g.norm_squared())
                .sum::<f64>()
                .sqrt();
            if grad_norm < settings.grad_tolerance {
                break;
            }
            // Precondition each joint's time series independently.
            let mut step = vec![DVector::zeros(dof); free];
            for d in 0..dof {
                let rhs = DVector::from_fn(free, |i, _| grad[first_free + i][d]);
                let z = chol.solve(&rhs);
                for i in 0..free {
                    step[i][d] = z[i];
                }
            }

            let mut alpha = settings.step_size;
            let mut accepted = false;
            for _ in 0..25 {
                let mut candidate = current.clone();
                for i in 0..free {
                    let q = &mut candidate.keyframes[first_free + i];
                    q.0 -= alpha * &step[i];
                    robot.clamp_to_limits(&mut q.0);
                }
                let cand_eval = total_cost(&candidate, beliefs, world, robot, settings, window)?;
                if cand_eval.total < eval.total - 1e-15 {
                    current = candidate;
                    eval = cand_eval;
                    cost_trace.push(eval.total);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
        }
    }

    let window_report = eval
        .chance
        .keyframes
        .iter()
        .map(|&(i, p, f)| (i, p, f))
        .collect();
    Ok((
        current,
        OptimizeReport {
            iterations,
            initial_cost,
            final_cost: eval.total,
            cost_trace,
            window: window_report,
        },
    ))
}

/// Inserts one keyframe before index `j` by resampling the approach segment
/// (from the first free keyframe through `j`) onto one more uniform time; a
/// pure time-stretch that keeps the joint-space path on the same polyline
/// and leaves the goal untouched.
pub fn extend_duration(traj: &Trajectory, j: usize) -> Result<Trajectory> {
    let i = traj.frozen.max(1) - 1;
    if j <= i || j >= traj.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot extend at keyframe {j} (approach starts at {i})"
        )));
    }
    let span: Vec<&DVector<f64>> = traj.keyframes[i..=j].iter().map(|q| &q.0).collect();
    let segs = span.len() - 1;
    let new_count = span.len() + 1;
    let resampled: Vec<Configuration> = (0..new_count)
        .map(|k| {
            let s = k as f64 * segs as f64 / (new_count - 1) as f64;
            let idx = (s.floor() as usize).min(segs - 1);
            let frac = s - idx as f64;
            Configuration(span[idx] * (1.0 - frac) + span[idx + 1] * frac)
        })
        .collect();
    let mut keyframes = Vec::with_capacity(traj.len() + 1);
    keyframes.extend_from_slice(&traj.keyframes[..i]);
    keyframes.extend(resampled);
    keyframes.extend_from_slice(&traj.keyframes[j + 1..]);
    Ok(Trajectory {
        keyframes,
        t0: traj.t0,
        dt: traj.dt,
        frozen: traj.frozen,
    })
}

/// Diagnostics from one planning step.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub feasible: bool,
    pub extensions: usize,
    pub iterations: usize,
    pub max_window_probability: f64,
    /// (keyframe index, probability) over the final window.
    pub window_probabilities: Vec<(usize, f64)>,
}

/// One replanning step: assimilate the new cloud into the tracker, predict
/// beliefs over the active window, optimize, and time-stretch the approach
/// while any window keyframe stays infeasible (up to the extension budget).
pub fn plan_step(
    robot: &RobotModel,
    traj: &Trajectory,
    tracker: &mut ObstacleTracker,
    cloud: Option<&PointCloud>,
    world: &StaticWorld,
    settings: &PlannerSettings,
    t: f64,
) -> Result<(Trajectory, StepDiagnostics)> {
    if let Some(cloud) = cloud {
        tracker.step(cloud, t, settings.fit_epsilon)?;
    }
    let mut current = traj.clone();
    let mut extensions = 0;
    let mut iterations = 0;
    loop {
        let window = chance_window(&current, settings.steps_per_plan);
        // Belief horizon covers the whole window relative to now.
        let steps_needed = ((current.time_of(window.1) - t) / current.dt).ceil() as isize;
        let beliefs = if tracker.tracks.iter().all(|g| g.is_empty()) {
            // No obstacles: empty beliefs on the keyframe time grid.
            (window.0..=window.1.min(current.len() - 1))
                .map(|i| BeliefState {
                    time: current.time_of(i),
                    spheres: Vec::new(),
                })
                .collect()
        } else {
            tracker.predict_belief(current.dt, steps_needed.max(1) as usize + 1)?
        };
        let (optimized, report) = optimize(&current, &beliefs, world, robot, settings)?;
        iterations += report.iterations;
        current = optimized;

        let violating = report
            .window
            .iter()
            .filter(|&&(_, _, feasible)| !feasible)
            .map(|&(i, _, _)| i)
            .next();
        match violating {
            None => {
                let max_p = report
                    .window
                    .iter()
                    .map(|&(_, p, _)| p)
                    .fold(0.0f64, f64::max);
                return Ok((
                    current,
                    StepDiagnostics {
                        feasible: true,
                        extensions,
                        iterations,
                        max_window_probability: max_p,
                        window_probabilities: report
                            .window
                            .iter()
                            .map(|&(i, p, _)| (i, p))
                            .collect(),
                    },
                ));
            }
            Some(j) => {
                // A violation inside the committed prefix cannot be repaired
                // by stretching time; report it instead of failing.
                let extendable = j > traj.frozen.max(1) - 1;
                if extensions >= settings.max_extensions || !extendable {
                    let max_p = report
                        .window
                        .iter()
                        .map(|&(_, p, _)| p)
                        .fold(0.0f64, f64::max);
                    return Ok((
                        current,
                        StepDiagnostics {
                            feasible: false,
                            extensions,
                            iterations,
                            max_window_probability: max_p,
                            window_probabilities: report
                                .window
                                .iter()
                                .map(|&(i, p, _)| (i, p))
                                .collect(),
                        },
                    ));
                }
                current = extend_duration(&current, j)?;
                extensions += 1;
            }
        }
    }
}
