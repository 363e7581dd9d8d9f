//! Shared fixtures for the criterion benchmarks: seeded random sphere pairs
//! and a small planning scene, kept here so every benchmark measures the same
//! deterministic inputs.

use nalgebra::Matrix3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use probcol::robot::planar_two_link;
use probcol::{
    initialize_trajectory, BeliefState, Configuration, Gaussian3, GaussianSphere, PlannerSettings,
    RigidSphere, RobotModel, SpdMatrix3, StaticWorld, Trajectory, Vec3,
};

/// One random (rigid, Gaussian) sphere pair in the oracle parameter ranges:
/// radii 0.05-0.5 m, covariance eigenvalues 1e-4-1 m^2, mean offset 0-3 m.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (RigidSphere, GaussianSphere) {
    let r1 = rng.random_range(0.05..0.5);
    let r2 = rng.random_range(0.05..0.5);
    let center = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let dir = {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0f64..1.0));
        if v.norm() < 1e-9 {
            Vec3::x()
        } else {
            v.normalize()
        }
    };
    let mean = center + dir * rng.random_range(0.0..3.0);
    let rot = nalgebra::Rotation3::from_euler_angles(
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let eig = Matrix3::from_diagonal(&Vec3::from_fn(|_, _| rng.random_range(1e-4..1.0)));
    let cov = rot.matrix() * eig * rot.matrix().transpose();
    let g = Gaussian3::new(mean, SpdMatrix3::new(cov).expect("random covariance is SPD"))
        .expect("valid gaussian");
    (
        RigidSphere::new(center, r1).expect("valid rigid sphere"),
        GaussianSphere::new(g, r2).expect("valid gaussian sphere"),
    )
}

/// A small planar planning scene: two-link arm sweeping past one uncertain
/// obstacle hovering near the mid-sweep workspace.
pub fn planning_fixture() -> (
    RobotModel,
    Trajectory,
    Vec<BeliefState>,
    StaticWorld,
    PlannerSettings,
) {
    let robot = planar_two_link();
    let start = Configuration::from_vec(vec![-0.8, 0.3]);
    let goal = Configuration::from_vec(vec![0.8, 0.3]);
    let settings = PlannerSettings::default();
    let traj = initialize_trajectory(&start, &goal, 20, settings.keyframe_dt, 0.0)
        .expect("valid trajectory");
    let beliefs: Vec<BeliefState> = (0..traj.len())
        .map(|i| {
            let g = Gaussian3::isotropic(Vec3::new(0.75, 0.3, 0.0), 0.02 * 0.02)
                .expect("valid gaussian");
            BeliefState {
                time: traj.time_of(i),
                spheres: vec![vec![
                    GaussianSphere::new(g, 0.08).expect("valid gaussian sphere"),
                ]],
            }
        })
        .collect();
    (robot, traj, beliefs, StaticWorld::default(), settings)
}
