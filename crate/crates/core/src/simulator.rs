//! Closed-loop simulation and benchmark driver.
//!
//! A scenario file describes the robot, static geometry, scripted moving
//! obstacles (piecewise-linear waypoint motion per bounding sphere), the
//! synthetic depth sensor, and the planner settings. A trial runs the
//! replanning loop against synthesized noisy point clouds while an
//! independent ground-truth audit checks actual sphere overlaps; the
//! benchmark runner sweeps scenarios x methods x seeds and writes CSV.

use std::collections::BTreeMap;
use std::fmt::Write as FmtWrite;
use std::path::Path;

use nalgebra::Isometry3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collision::CollisionMethod;
use crate::error::{Error, Result};
use crate::estimation::{ObstacleShape, ObstacleTracker, PointCloud, ShapeModel, ShapeSphere};
use crate::gaussian::Vec3;
use crate::planner::{
    initialize_trajectory, plan_step, PlannerSettings, StaticShape, StaticWorld,
};
use crate::robot::{Configuration, JointSpec, LinkSpec, RobotModel};

/// Raw scenario file contents.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Scripted-motion duration, seconds; also scales the simulation cap.
    pub duration: f64,
    pub robot: RobotConfig,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Segments of the initial trajectory.
    pub segments: usize,
    #[serde(default)]
    pub planner: PlannerConfig,
    pub sensor: SensorConfig,
    #[serde(default)]
    pub static_shapes: Vec<StaticShapeConfig>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleConfig>,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
pub struct RobotConfig {
    /// One of "planar2", "arm6", "arm7"; alternative to inline joints/links.
    pub builtin: Option<String>,
    pub joints: Option<Vec<JointConfig>>,
    pub links: Option<Vec<LinkConfig>>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct JointConfig {
    pub axis: [f64; 3],
    /// Translation from the parent joint frame.
    pub origin: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct LinkConfig {
    pub length: f64,
    pub sphere_count: usize,
    pub sphere_radius: f64,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub delta_cl: Option<f64>,
    pub keyframe_dt: Option<f64>,
    pub steps_per_plan: Option<usize>,
    pub max_iterations: Option<usize>,
    pub step_size: Option<f64>,
    pub clearance: Option<f64>,
    pub static_weight: Option<f64>,
    pub chance_weight: Option<f64>,
    pub max_extensions: Option<usize>,
    pub fit_epsilon: Option<f64>,
}

impl PlannerConfig {
    pub fn to_settings(&self, method: CollisionMethod) -> PlannerSettings {
        let d = PlannerSettings::default();
        PlannerSettings {
            delta_cl: self.delta_cl.unwrap_or(d.delta_cl),
            keyframe_dt: self.keyframe_dt.unwrap_or(d.keyframe_dt),
            steps_per_plan: self.steps_per_plan.unwrap_or(d.steps_per_plan),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            step_size: self.step_size.unwrap_or(d.step_size),
            clearance: self.clearance.unwrap_or(d.clearance),
            static_weight: self.static_weight.unwrap_or(d.static_weight),
            chance_weight: self.chance_weight.unwrap_or(d.chance_weight),
            max_extensions: self.max_extensions.unwrap_or(d.max_extensions),
            fit_epsilon: self.fit_epsilon.unwrap_or(d.fit_epsilon),
            method,
            ..d
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct SensorConfig {
    pub sigma: f64,
    pub points_per_frame: usize,
    #[serde(default)]
    pub hemisphere: bool,
    /// Sensor position, required in hemisphere mode.
    pub position: Option<[f64; 3]>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct StaticShapeConfig {
    pub kind: String,
    pub center: Option<[f64; 3]>,
    pub radius: Option<f64>,
    pub min: Option<[f64; 3]>,
    pub max: Option<[f64; 3]>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ObstacleConfig {
    pub name: String,
    /// Per-trial isotropic jitter of the whole motion, meters std.
    #[serde(default)]
    pub jitter: f64,
    pub spheres: Vec<ShapeSphere>,
    pub waypoints: Vec<WaypointConfig>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct WaypointConfig {
    pub t: f64,
    /// One position per sphere, in shape-model order.
    pub positions: Vec<[f64; 3]>,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// One scripted obstacle: its shape and waypoint motion.
#[derive(Debug, Clone)]
pub struct ScriptedObstacle {
    pub shape: ObstacleShape,
    pub jitter: f64,
    /// (time, per-sphere positions), strictly increasing times.
    pub waypoints: Vec<(f64, Vec<Vec3>)>,
}

impl ScriptedObstacle {
    /// Ground-truth sphere centers at `t` (piecewise linear, clamped ends),
    /// shifted by the per-trial jitter `offset`.
    pub fn positions(&self, t: f64, offset: &Vec3) -> Vec<Vec3> {
        let first = &self.waypoints[0];
        let last = self.waypoints.last().unwrap();
        let interpolated: Vec<Vec3> = if t <= first.0 {
            first.1.clone()
        } else if t >= last.0 {
            last.1.clone()
        } else {
            let seg = self
                .waypoints
                .windows(2)
                .find(|w| t <= w[1].0)
                .expect("t within waypoint span");
            let frac = (t - seg[0].0) / (seg[1].0 - seg[0].0);
            seg[0]
                .1
                .iter()
                .zip(&seg[1].1)
                .map(|(a, b)| a + (b - a) * frac)
                .collect()
        };
        interpolated.iter().map(|p| p + offset).collect()
    }
}

/// Validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub robot: RobotModel,
    pub start: Configuration,
    pub goal: Configuration,
    pub segments: usize,
    pub planner: PlannerConfig,
    pub sensor: SensorConfig,
    pub world: StaticWorld,
    pub obstacles: Vec<ScriptedObstacle>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        Self::from_config(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let robot = build_robot(&cfg.robot)?;
        if cfg.start.len() != robot.dof() || cfg.goal.len() != robot.dof() {
            return Err(Error::Config(format!(
                "start/goal must have {} joints",
                robot.dof()
            )));
        }
        if cfg.segments < 2 {
            return Err(Error::Config("segments must be >= 2".into()));
        }
        if !(cfg.sensor.sigma >= 0.0) || cfg.sensor.points_per_frame == 0 {
            return Err(Error::Config("sensor needs sigma >= 0 and points > 0".into()));
        }
        if cfg.sensor.hemisphere && cfg.sensor.position.is_none() {
            return Err(Error::Config("hemisphere mode needs a sensor position".into()));
        }

        let mut shapes = Vec::new();
        for (i, s) in cfg.static_shapes.iter().enumerate() {
            let shape = match s.kind.as_str() {
                "sphere" => StaticShape::Sphere {
                    center: vec3(s.center.ok_or_else(|| {
                        Error::Config(format!("static shape {i}: sphere needs center"))
                    })?),
                    radius: s.radius.ok_or_else(|| {
                        Error::Config(format!("static shape {i}: sphere needs radius"))
                    })?,
                },
                "aabb" => StaticShape::Aabb {
                    min: vec3(s.min.ok_or_else(|| {
                        Error::Config(format!("static shape {i}: aabb needs min"))
                    })?),
                    max: vec3(s.max.ok_or_else(|| {
                        Error::Config(format!("static shape {i}: aabb needs max"))
                    })?),
                },
                other => {
                    return Err(Error::Config(format!(
                        "static shape {i}: unknown kind {other:?}"
                    )))
                }
            };
            shapes.push(shape);
        }

        let fit_epsilon = cfg.planner.fit_epsilon.unwrap_or(0.05);
        let mut obstacles = Vec::new();
        for (oi, o) in cfg.obstacles.iter().enumerate() {
            if o.spheres.is_empty() || o.waypoints.is_empty() {
                return Err(Error::Config(format!(
                    "obstacle {oi}: needs spheres and waypoints"
                )));
            }
            let shape = ObstacleShape {
                name: o.name.clone(),
                spheres: o.spheres.clone(),
            };
            let mut waypoints = Vec::new();
            let mut prev_t = f64::NEG_INFINITY;
            for (wi, w) in o.waypoints.iter().enumerate() {
                if w.positions.len() != o.spheres.len() {
                    return Err(Error::Config(format!(
                        "obstacle {oi} waypoint {wi}: expected {} positions, got {}",
                        o.spheres.len(),
                        w.positions.len()
                    )));
                }
                if w.t <= prev_t {
                    return Err(Error::Config(format!(
                        "obstacle {oi} waypoint {wi}: times must increase"
                    )));
                }
                prev_t = w.t;
                let positions: Vec<Vec3> = w.positions.iter().copied().map(vec3).collect();
                // Scripted motion must respect the rest distances within the
                // fit band.
                for j in 0..positions.len() {
                    for h in j + 1..positions.len() {
                        let rest = shape.rest_distance(j, h);
                        if rest < 1e-9 {
                            continue;
                        }
                        let ratio = (positions[j] - positions[h]).norm() / rest;
                        if !(1.0 - fit_epsilon..=1.0 + fit_epsilon).contains(&ratio) {
                            return Err(Error::Config(format!(
                                "obstacle {oi} waypoint {wi}: spheres {j},{h} at \
                                 {ratio:.3}x rest distance (band {fit_epsilon})"
                            )));
                        }
                    }
                }
                waypoints.push((w.t, positions));
            }
            obstacles.push(ScriptedObstacle {
                shape,
                jitter: o.jitter,
                waypoints,
            });
        }

        Ok(Scenario {
            name: cfg.name,
            seed: cfg.seed,
            duration: cfg.duration,
            robot,
            start: Configuration::from_vec(cfg.start),
            goal: Configuration::from_vec(cfg.goal),
            segments: cfg.segments,
            planner: cfg.planner,
            sensor: cfg.sensor,
            world: StaticWorld { shapes },
            obstacles,
        })
    }

    pub fn shape_model(&self) -> ShapeModel {
        ShapeModel {
            obstacles: self.obstacles.iter().map(|o| o.shape.clone()).collect(),
        }
    }
}

fn build_robot(cfg: &RobotConfig) -> Result<RobotModel> {
    if let Some(name) = &cfg.builtin {
        return match name.as_str() {
            "planar2" => Ok(crate::robot::planar_two_link()),
            "arm6" => Ok(RobotModel::example_6dof()),
            "arm7" => Ok(RobotModel::example_7dof()),
            other => Err(Error::Config(format!("unknown builtin robot {other:?}"))),
        };
    }
    let (joints, links) = match (&cfg.joints, &cfg.links) {
        (Some(j), Some(l)) => (j, l),
        _ => {
            return Err(Error::Config(
                "robot needs either a builtin name or joints + links".into(),
            ))
        }
    };
    let joints = joints
        .iter()
        .map(|j| {
            JointSpec::new(
                vec3(j.axis),
                Isometry3::translation(j.origin[0], j.origin[1], j.origin[2]),
                (j.limits[0], j.limits[1]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let links = links
        .iter()
        .map(|l| LinkSpec::new(l.length, l.sphere_count, l.sphere_radius))
        .collect::<Result<Vec<_>>>()?;
    RobotModel::new(joints, links, Isometry3::identity())
}

/// Eight-sphere humanoid upper-body shape model at desk scale.
pub fn human_shape_model() -> ObstacleShape {
    let s = |radius: f64, p: [f64; 3]| ShapeSphere {
        radius,
        rest_position: p,
    };
    ObstacleShape {
        name: "human".into(),
        spheres: vec![
            s(0.11, [0.0, 0.0, 0.65]),   // head
            s(0.15, [0.0, 0.0, 0.40]),   // upper torso
            s(0.15, [0.0, 0.0, 0.15]),   // lower torso
            s(0.07, [-0.25, 0.0, 0.45]), // left upper arm
            s(0.06, [-0.45, 0.0, 0.30]), // left lower arm
            s(0.07, [0.25, 0.0, 0.45]),  // right upper arm
            s(0.06, [0.45, 0.0, 0.30]),  // right lower arm
            s(0.05, [0.55, 0.0, 0.15]),  // right hand
        ],
    }
}

/// Samples a synthetic sensor frame from the ground-truth sphere surfaces at
/// time `t`; deterministic per (scenario seed, t, trial seed).
pub fn synthesize_cloud(
    scenario: &Scenario,
    truth: &[Vec<Vec3>],
    t: f64,
    seed: u64,
) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.to_bits() ^ scenario.seed.rotate_left(17));
    let sensor = scenario.sensor.position.map(vec3);
    let total_spheres: usize = truth.iter().map(|g| g.len()).sum();
    let mut points = Vec::with_capacity(scenario.sensor.points_per_frame);
    if total_spheres == 0 {
        return PointCloud {
            points,
            sensor_sigma: scenario.sensor.sigma.max(1e-6),
        };
    }
    let per_sphere = (scenario.sensor.points_per_frame / total_spheres).max(1);
    for (obstacle, centers) in scenario.obstacles.iter().zip(truth) {
        for (sphere, center) in obstacle.shape.spheres.iter().zip(centers) {
            for _ in 0..per_sphere {
                let dir = loop {
                    let v = Vec3::from_fn(|_, _| rng.random_range(-1.0f64..1.0));
                    let norm = v.norm();
                    if norm < 1e-6 || norm > 1.0 {
                        continue;
                    }
                    let dir = v / norm;
                    match (scenario.sensor.hemisphere, &sensor) {
                        (true, Some(s)) => {
                            if dir.dot(&(s - center)) >= 0.0 {
                                break dir;
                            }
                        }
                        _ => break dir,
                    }
                };
                let noise: Vec3 = Vec3::from_fn(|_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * scenario.sensor.sigma
                });
                points.push(center + dir * sphere.radius + noise);
            }
        }
    }
    PointCloud {
        points,
        // Zero sensor noise still needs a positive scale for the fit.
        sensor_sigma: scenario.sensor.sigma.max(1e-6),
    }
}

/// One planning-step record of a trial.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub feasible: bool,
    pub extensions: usize,
    pub max_window_probability: f64,
    pub collisions_so_far: usize,
    /// Wall-clock planning time, seconds (excluded from deterministic CSV).
    pub plan_seconds: f64,
}

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct TrialReport {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    /// Ground-truth contact events (entering contact) with dynamic obstacles.
    pub collisions: usize,
    /// Executed duration, seconds (>= initialized duration).
    pub duration: f64,
    /// Workspace length of the executed end-effector polyline.
    pub path_length: f64,
    pub goal_reached: bool,
    pub plan_steps: usize,
    pub extensions: usize,
    pub infeasible_steps: usize,
    /// Keyframes that were chance-checked feasible and then executed.
    pub checked_keyframes: usize,
    /// Of those, how many were in ground-truth collision when executed.
    pub violated_keyframes: usize,
    pub steps: Vec<StepRecord>,
}

pub fn method_name(method: CollisionMethod) -> &'static str {
    match method {
        CollisionMethod::Bound => "bound",
        CollisionMethod::Center => "center",
        CollisionMethod::Enlarged { .. } => "enlarged",
    }
}

/// Parses a CLI method name into a collision method, using the scenario's
/// confidence level for the enlarged check.
pub fn parse_method(name: &str, delta_cl: f64) -> Result<CollisionMethod> {
    match name {
        "bound" => Ok(CollisionMethod::Bound),
        "center" => Ok(CollisionMethod::Center),
        "enlarged" => Ok(CollisionMethod::Enlarged { delta_cl }),
        other => Err(Error::Config(format!(
            "unknown method {other:?} (expected bound|center|enlarged)"
        ))),
    }
}

/// Runs one closed-loop trial: replan each planning step from synthetic
/// clouds, execute the committed block, and audit ground-truth overlaps.
pub fn run_trial(scenario: &Scenario, method: CollisionMethod, seed: u64) -> Result<TrialReport> {
    let settings = scenario.planner.to_settings(method);
    let dt = settings.keyframe_dt;
    let m = settings.steps_per_plan;
    let robot = &scenario.robot;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ scenario.seed);
    let offsets: Vec<Vec3> = scenario
        .obstacles
        .iter()
        .map(|o| {
            Vec3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal) * o.jitter)
        })
        .collect();
    let truth_at = |t: f64| -> Vec<Vec<Vec3>> {
        scenario
            .obstacles
            .iter()
            .zip(&offsets)
            .map(|(o, off)| o.positions(t, off))
            .collect()
    };

    let mut traj = initialize_trajectory(&scenario.start, &scenario.goal, scenario.segments, dt, 0.0)?;
    let mut tracker =
        ObstacleTracker::new(scenario.shape_model(), &truth_at(0.0), 0.0, 1e-4)?;

    // Chance-check status per keyframe index (stable across extensions: all
    // insertions happen at or beyond the currently planned window start).
    let mut checked: Vec<Option<f64>> = vec![None; traj.len()];

    let mut report = TrialReport {
        scenario: scenario.name.clone(),
        method: method_name(method).to_string(),
        seed,
        collisions: 0,
        duration: 0.0,
        path_length: 0.0,
        goal_reached: false,
        plan_steps: 0,
        extensions: 0,
        infeasible_steps: 0,
        checked_keyframes: 0,
        violated_keyframes: 0,
        steps: Vec::new(),
    };

    let max_time = (scenario.duration.max(traj.duration()) * 5.0).max(10.0);
    let mut k = 0usize; // last executed keyframe index
    let mut in_contact = false;
    let mut prev_ee = robot.end_effector(&scenario.start)?;

    loop {
        let t = k as f64 * dt;
        if t > max_time {
            break;
        }

        // Plan for the window beyond the block we are about to execute;
        // once the whole remainder is committed there is nothing to plan.
        traj.frozen = (k + m + 1).min(traj.len());
        let diag = if traj.frozen < traj.len() {
            // Sensor frames for intermediate keyframes are fed to the tracker
            // during execution below; the planner only needs a fresh frame at
            // the very first step, before anything has been executed.
            let cloud = if scenario.obstacles.is_empty() || k > 0 {
                None
            } else {
                Some(synthesize_cloud(scenario, &truth_at(t), t, seed))
            };
            let started = std::time::Instant::now();
            let (new_traj, diag) = plan_step(
                robot,
                &traj,
                &mut tracker,
                cloud.as_ref(),
                &scenario.world,
                &settings,
                t,
            )?;
            let plan_seconds = started.elapsed().as_secs_f64();
            traj = new_traj;
            checked.resize(traj.len(), None);
            for &(i, p) in &diag.window_probabilities {
                if i < checked.len() {
                    checked[i] = Some(p);
                }
            }
            report.plan_steps += 1;
            report.extensions += diag.extensions;
            if !diag.feasible {
                report.infeasible_steps += 1;
            }
            Some((diag, plan_seconds))
        } else {
            None
        };

        // Execute the committed block and audit against ground truth.
        let mut finished = false;
        for sub in 1..=m {
            let idx = k + sub;
            if idx >= traj.len() {
                finished = true;
                break;
            }
            let tau = traj.time_of(idx);
            let q = &traj.keyframes[idx];
            let spheres = robot.link_spheres(q)?;
            let truth = truth_at(tau);
            // One sensor frame per executed keyframe keeps the tracker at the
            // keyframe rate rather than the (slower) replanning rate.
            if !scenario.obstacles.is_empty() {
                let cloud = synthesize_cloud(scenario, &truth, tau, seed);
                tracker.step(&cloud, tau, settings.fit_epsilon)?;
            }
            let mut colliding = false;
            'audit: for link in &spheres {
                for b in link {
                    for (obstacle, centers) in scenario.obstacles.iter().zip(&truth) {
                        for (s, c) in obstacle.shape.spheres.iter().zip(centers) {
                            if (b.center - c).norm() < b.radius + s.radius {
                                colliding = true;
                                break 'audit;
                            }
                        }
                    }
                }
            }
            if colliding && !in_contact {
                report.collisions += 1;
            }
            in_contact = colliding;
            if let Some(p) = checked[idx] {
                let budget = 1.0 - settings.delta_cl;
                if p < budget {
                    report.checked_keyframes += 1;
                    if colliding {
                        report.violated_keyframes += 1;
                    }
                }
            }
            let ee = robot.end_effector(q)?;
            report.path_length += (ee - prev_ee).norm();
            prev_ee = ee;
            report.duration = tau;
            if idx == traj.len() - 1 {
                finished = true;
                break;
            }
        }
        if let Some((diag, plan_seconds)) = diag {
            report.steps.push(StepRecord {
                step: report.plan_steps - 1,
                time: t,
                feasible: diag.feasible,
                extensions: diag.extensions,
                max_window_probability: diag.max_window_probability,
                collisions_so_far: report.collisions,
                plan_seconds,
            });
        }
        if finished {
            report.goal_reached = true;
            break;
        }
        k += m;
    }
    Ok(report)
}

/// Per-step CSV for one trial (deterministic fields only; wall-clock timing
/// stays in the in-memory report).
pub fn trial_steps_csv(report: &TrialReport) -> String {
    let mut out = String::from(
        "scenario,method,seed,step,time,feasible,extensions,max_window_probability,collisions_so_far\n",
    );
    for s in &report.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{},{},{:.9},{}",
            report.scenario,
            report.method,
            report.seed,
            s.step,
            s.time,
            s.feasible as u8,
            s.extensions,
            s.max_window_probability,
            s.collisions_so_far
        );
    }
    let _ = writeln!(
        out,
        "# summary collisions={} duration={:.6} path_length={:.6} goal_reached={} extensions={} infeasible_steps={}",
        report.collisions,
        report.duration,
        report.path_length,
        report.goal_reached as u8,
        report.extensions,
        report.infeasible_steps
    );
    out
}

/// Benchmark configuration: a matrix of scenario files x methods x seeds.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<BenchScenario>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct BenchScenario {
    pub file: String,
    pub methods: Vec<String>,
    pub seed_start: u64,
    pub trials: u64,
}

/// Aggregate row of the benchmark summary.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub trials: usize,
    pub mean_collisions: f64,
    pub mean_duration: f64,
    pub mean_path_length: f64,
    pub goal_rate: f64,
    pub checked_keyframes: usize,
    pub violated_keyframes: usize,
}

/// Outcome of a benchmark run: per-trial CSV, summary CSV, and rows.
pub struct BenchOutcome {
    pub trials_csv: String,
    pub summary_csv: String,
    pub rows: Vec<SummaryRow>,
    pub reports: Vec<TrialReport>,
}

/// Runs the full trial matrix. Trials execute in parallel; results are
/// aggregated in (scenario, method, seed) order so output is deterministic.
pub fn run_benchmark(config: &BenchConfig, base_dir: &Path) -> Result<BenchOutcome> {
    let mut jobs = Vec::new();
    for bs in &config.scenarios {
        let scenario = Scenario::from_file(&base_dir.join(&bs.file))?;
        for method_name_ in &bs.methods {
            let delta_cl = scenario.planner.delta_cl.unwrap_or(0.99);
            let method = parse_method(method_name_, delta_cl)?;
            for seed in bs.seed_start..bs.seed_start + bs.trials {
                jobs.push((scenario.clone(), method, seed));
            }
        }
    }
    jobs.sort_by(|a, b| {
        (a.0.name.as_str(), method_name(a.1), a.2).cmp(&(b.0.name.as_str(), method_name(b.1), b.2))
    });

    use rayon::prelude::*;
    let reports: Vec<TrialReport> = jobs
        .par_iter()
        .map(|(scenario, method, seed)| run_trial(scenario, *method, *seed))
        .collect::<Result<_>>()?;

    let mut trials_csv = String::from(
        "scenario,method,seed,collisions,duration,path_length,goal_reached,plan_steps,extensions,infeasible_steps,checked_keyframes,violated_keyframes\n",
    );
    for r in &reports {
        let _ = writeln!(
            trials_csv,
            "{},{},{},{},{:.6},{:.6},{},{},{},{},{},{}",
            r.scenario,
            r.method,
            r.seed,
            r.collisions,
            r.duration,
            r.path_length,
            r.goal_reached as u8,
            r.plan_steps,
            r.extensions,
            r.infeasible_steps,
            r.checked_keyframes,
            r.violated_keyframes
        );
    }

    let mut groups: BTreeMap<(String, String), Vec<&TrialReport>> = BTreeMap::new();
    for r in &reports {
        groups
            .entry((r.scenario.clone(), r.method.clone()))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::new();
    let mut summary_csv = String::from(
        "scenario,method,trials,mean_collisions,mean_duration,mean_path_length,goal_rate,checked_keyframes,violated_keyframes\n",
    );
    for ((scenario, method), group) in groups {
        let n = group.len() as f64;
        let row = SummaryRow {
            scenario,
            method,
            trials: group.len(),
            mean_collisions: group.iter().map(|r| r.collisions as f64).sum::<f64>() / n,
            mean_duration: group.iter().map(|r| r.duration).sum::<f64>() / n,
            mean_path_length: group.iter().map(|r| r.path_length).sum::<f64>() / n,
            goal_rate: group.iter().filter(|r| r.goal_reached).count() as f64 / n,
            checked_keyframes: group.iter().map(|r| r.checked_keyframes).sum(),
            violated_keyframes: group.iter().map(|r| r.violated_keyframes).sum(),
        };
        let _ = writeln!(
            summary_csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
            row.scenario,
            row.method,
            row.trials,
            row.mean_collisions,
            row.mean_duration,
            row.mean_path_length,
            row.goal_rate,
            row.checked_keyframes,
            row.violated_keyframes
        );
        rows.push(row);
    }
    Ok(BenchOutcome {
        trials_csv,
        summary_csv,
        rows,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn empty_scenario_toml() -> &'static str {
        r#"
name = "empty"
seed = 7
duration = 2.0
segments = 10
start = [-0.5, 0.2]
goal = [0.5, 0.2]

[robot]
builtin = "planar2"

[sensor]
sigma = 0.01
points_per_frame = 50
"#
    }

    fn crossing_scenario_toml() -> String {
        r#"
name = "crossing"
seed = 11
duration = 4.0
segments = 20
start = [-0.8, 0.3]
goal = [0.8, 0.3]

[robot]
builtin = "planar2"

[planner]
max_iterations = 40
max_extensions = 4

[sensor]
sigma = 0.01
points_per_frame = 120

[[obstacles]]
name = "ball"
jitter = 0.0
[[obstacles.spheres]]
radius = 0.15
rest_position = [0.0, 0.0, 0.0]
[[obstacles.waypoints]]
t = 0.0
positions = [[1.2, 1.5, 0.0]]
[[obstacles.waypoints]]
t = 1.0
positions = [[1.2, 0.8, 0.0]]
[[obstacles.waypoints]]
t = 3.0
positions = [[1.2, -0.8, 0.0]]
[[obstacles.waypoints]]
t = 4.0
positions = [[1.2, -1.5, 0.0]]
"#
        .to_string()
    }

    #[test]
    fn scenario_parsing_and_validation() {
        let s = Scenario::from_toml_str(empty_scenario_toml()).unwrap();
        assert_eq!(s.robot.dof(), 2);
        assert!(s.obstacles.is_empty());

        // Bad method name and bad config errors carry diagnostics.
        assert!(parse_method("fancy", 0.99).is_err());
        assert!(Scenario::from_toml_str("name = 3").is_err());

        // Waypoint violating rest distances is rejected.
        let bad = r#"
name = "bad"
seed = 1
duration = 1.0
segments = 4
start = [0.0, 0.0]
goal = [0.1, 0.0]
[robot]
builtin = "planar2"
[sensor]
sigma = 0.01
points_per_frame = 10
[[obstacles]]
name = "pair"
[[obstacles.spheres]]
radius = 0.1
rest_position = [0.0, 0.0, 0.0]
[[obstacles.spheres]]
radius = 0.1
rest_position = [0.4, 0.0, 0.0]
[[obstacles.waypoints]]
t = 0.0
positions = [[0.0, 0.0, 0.0], [0.8, 0.0, 0.0]]
"#;
        assert!(matches!(
            Scenario::from_toml_str(bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scripted_positions_interpolate_and_clamp() {
        let s = Scenario::from_toml_str(&crossing_scenario_toml()).unwrap();
        let o = &s.obstacles[0];
        let zero = Vec3::zeros();
        assert!((o.positions(-1.0, &zero)[0] - Vec3::new(1.2, 1.5, 0.0)).norm() < 1e-12);
        assert!((o.positions(9.0, &zero)[0] - Vec3::new(1.2, -1.5, 0.0)).norm() < 1e-12);
        let mid = o.positions(2.0, &zero)[0];
        assert_relative_eq!(mid.y, 0.0, epsilon = 1e-12);
        let off = Vec3::new(0.1, 0.0, 0.0);
        assert_relative_eq!(o.positions(2.0, &off)[0].x, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn cloud_surface_noise_and_hemisphere() {
        let mut s = Scenario::from_toml_str(&crossing_scenario_toml()).unwrap();
        s.sensor.points_per_frame = 10_000;
        s.sensor.sigma = 0.0;
        let truth = vec![s.obstacles[0].positions(0.0, &Vec3::zeros())];
        let cloud = synthesize_cloud(&s, &truth, 0.0, 1);
        let center = truth[0][0];
        for p in &cloud.points {
            assert_relative_eq!((p - center).norm(), 0.15, epsilon = 1e-12);
        }

        // Noise moment check at sigma = 0.02.
        s.sensor.sigma = 0.02;
        let cloud = synthesize_cloud(&s, &truth, 0.0, 2);
        let n = cloud.points.len() as f64;
        let var = cloud
            .points
            .iter()
            .map(|p| {
                let r = (p - center).norm() - 0.15;
                r * r
            })
            .sum::<f64>()
            / n;
        assert_relative_eq!(var.sqrt(), 0.02, max_relative = 0.1);

        // Hemisphere visibility predicate with zero noise.
        s.sensor.sigma = 0.0;
        s.sensor.hemisphere = true;
        s.sensor.position = Some([5.0, 0.0, 0.0]);
        let cloud = synthesize_cloud(&s, &truth, 0.0, 3);
        let sensor = Vec3::new(5.0, 0.0, 0.0);
        for p in &cloud.points {
            assert!((p - center).dot(&(sensor - center)) >= -1e-9);
        }
    }

    #[test]
    fn cloud_is_deterministic_per_seed() {
        let s = Scenario::from_toml_str(&crossing_scenario_toml()).unwrap();
        let truth = vec![s.obstacles[0].positions(0.5, &Vec3::zeros())];
        let a = synthesize_cloud(&s, &truth, 0.5, 9);
        let b = synthesize_cloud(&s, &truth, 0.5, 9);
        let c = synthesize_cloud(&s, &truth, 0.5, 10);
        assert_eq!(a.points.len(), b.points.len());
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa, pb);
        }
        assert!(a.points.iter().zip(&c.points).any(|(pa, pc)| pa != pc));
    }

    #[test]
    fn empty_environment_trial_is_clean() {
        let s = Scenario::from_toml_str(empty_scenario_toml()).unwrap();
        let report = run_trial(&s, CollisionMethod::Bound, 1).unwrap();
        assert_eq!(report.collisions, 0);
        assert!(report.goal_reached);
        assert_eq!(report.extensions, 0);
        assert_relative_eq!(report.duration, 1.0, epsilon = 1e-12); // 10 segments x 0.1 s

        // Straight joint-space interpolation: compare executed length to the
        // same interpolation evaluated directly.
        let traj = initialize_trajectory(&s.start, &s.goal, s.segments, 0.1, 0.0).unwrap();
        let expected = traj.workspace_length(&s.robot).unwrap();
        assert_relative_eq!(report.path_length, expected, max_relative = 1e-9);
    }

    #[test]
    fn crossing_trial_reports_waiting_or_detour_for_bound() {
        let s = Scenario::from_toml_str(&crossing_scenario_toml()).unwrap();
        let report = run_trial(&s, CollisionMethod::Bound, 3).unwrap();
        assert!(report.goal_reached);
        // The obstacle crosses the arm's sweep: the planner must react
        // (waiting or detouring), so the trial takes longer than the
        // unobstructed schedule or bends the path.
        let traj = initialize_trajectory(&s.start, &s.goal, s.segments, 0.1, 0.0).unwrap();
        let straight = traj.workspace_length(&s.robot).unwrap();
        assert!(
            report.extensions > 0 || report.path_length > straight * 1.02,
            "no reaction: extensions={} length={} straight={}",
            report.extensions,
            report.path_length,
            straight
        );
    }

    #[test]
    fn benchmark_csv_is_deterministic() {
        let dir = std::env::temp_dir().join("probcol-bench-test");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("empty.toml"), empty_scenario_toml()).unwrap();
        let config = BenchConfig {
            scenarios: vec![BenchScenario {
                file: "empty.toml".into(),
                methods: vec!["bound".into(), "center".into()],
                seed_start: 1,
                trials: 2,
            }],
        };
        let a = run_benchmark(&config, &dir).unwrap();
        let b = run_benchmark(&config, &dir).unwrap();
        assert_eq!(a.trials_csv, b.trials_csv);
        assert_eq!(a.summary_csv, b.summary_csv);
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.reports.len(), 4);
    }
}
