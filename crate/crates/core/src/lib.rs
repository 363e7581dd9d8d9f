//! Probabilistic collision detection, Gaussian belief estimation, and
//! chance-constrained trajectory optimization for articulated robots moving
//! among uncertain dynamic obstacles.
//!
//! The crate is organized around a pipeline:
//! sensor point clouds -> shape-model fit ([`estimation`]) -> Kalman belief
//! states -> bounded collision probabilities ([`collision`]) -> space-time
//! trajectory optimization ([`planner`]) -> closed-loop trials and benchmarks
//! ([`simulator`]).

pub mod collision;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod planner;
pub mod robot;
pub mod simulator;
pub mod stats;

pub use collision::{
    collision_enlarged_bv, collision_probability_bound, collision_probability_center,
    collision_probability_mc, configuration_collision_probability, max_probability_point,
    CollisionMethod, CollisionQueryResult, GaussianSphere, RigidSphere,
};
pub use error::{Error, Result};
pub use estimation::{
    fit_environment_state, kf_predict, kf_update, observation_covariance, predict_belief,
    BeliefState, ObstacleShape, ObstacleTracker, PointCloud, ShapeModel, ShapeSphere, TrackState,
};
pub use gaussian::{Gaussian3, SpdMatrix3, Vec3};
pub use planner::{
    extend_duration, initialize_trajectory, optimize, plan_step, PlannerSettings, StaticShape,
    StaticWorld, Trajectory,
};
pub use robot::{Configuration, JointSpec, LinkSpec, RobotModel};
pub use simulator::{
    run_benchmark, run_trial, synthesize_cloud, BenchConfig, Scenario, TrialReport,
};
