//! Serial-chain articulated robot with per-link bounding spheres.
//!
//! Link `j` is rigidly attached to the frame after joint `j`; its geometry is
//! a capsule along the local x axis covered by `K` spheres placed uniformly
//! on the central segment.

use nalgebra::{DVector, Isometry3, Matrix3xX, Unit, UnitQuaternion};

use crate::collision::RigidSphere;
use crate::error::{Error, Result};
use crate::gaussian::Vec3;

/// One revolute joint: rigid offset from the parent frame, then a rotation
/// about `axis` by the joint value.
#[derive(Debug, Clone)]
pub struct JointSpec {
    pub axis: Unit<Vec3>,
    pub origin_offset: Isometry3<f64>,
    pub limits: (f64, f64),
}

impl JointSpec {
    pub fn new(axis: Vec3, origin_offset: Isometry3<f64>, limits: (f64, f64)) -> Result<Self> {
        if limits.0 >= limits.1 {
            return Err(Error::InvalidParameter(format!(
                "joint limits must satisfy lo < hi, got [{}, {}]",
                limits.0, limits.1
            )));
        }
        Ok(Self {
            axis: Unit::new_normalize(axis),
            origin_offset,
            limits,
        })
    }
}

/// Capsule link covered by `sphere_count` spheres along its central segment.
#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub length: f64,
    pub sphere_count: usize,
    pub sphere_radius: f64,
}

impl LinkSpec {
    pub fn new(length: f64, sphere_count: usize, sphere_radius: f64) -> Result<Self> {
        if sphere_count == 0 {
            return Err(Error::InvalidParameter("sphere_count must be >= 1".into()));
        }
        // Consecutive spheres must overlap so the union covers the segment.
        if sphere_radius < length / (2.0 * sphere_count as f64) {
            return Err(Error::InvalidParameter(format!(
                "sphere_radius {} < length/(2K) = {}",
                sphere_radius,
                length / (2.0 * sphere_count as f64)
            )));
        }
        Ok(Self {
            length,
            sphere_count,
            sphere_radius,
        })
    }
}

/// Joint-value vector, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration(pub DVector<f64>);

impl Configuration {
    pub fn from_vec(q: Vec<f64>) -> Self {
        Self(DVector::from_vec(q))
    }

    pub fn dof(&self) -> usize {
        self.0.len()
    }
}

/// Serial kinematic chain; `links.len() <= joints.len()`.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub joints: Vec<JointSpec>,
    pub links: Vec<LinkSpec>,
    pub base: Isometry3<f64>,
}

impl RobotModel {
    pub fn new(joints: Vec<JointSpec>, links: Vec<LinkSpec>, base: Isometry3<f64>) -> Result<Self> {
        if links.len() > joints.len() {
            return Err(Error::InvalidParameter(format!(
                "links ({}) must not outnumber joints ({})",
                links.len(),
                joints.len()
            )));
        }
        Ok(Self { joints, links, base })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    fn check_configuration(&self, q: &Configuration) -> Result<()> {
        if q.dof() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: q.dof(),
            });
        }
        for (i, (joint, &v)) in self.joints.iter().zip(q.0.iter()).enumerate() {
            if v < joint.limits.0 - 1e-12 || v > joint.limits.1 + 1e-12 {
                return Err(Error::JointLimit {
                    joint: i,
                    value: v,
                    lo: joint.limits.0,
                    hi: joint.limits.1,
                });
            }
        }
        Ok(())
    }

    /// Clamps each joint value into its limits.
    pub fn clamp_to_limits(&self, q: &mut DVector<f64>) {
        for (joint, v) in self.joints.iter().zip(q.iter_mut()) {
            *v = v.clamp(joint.limits.0, joint.limits.1);
        }
    }

    /// One frame per joint, in order; link `j` lives in frame `j`.
    pub fn forward_kinematics(&self, q: &Configuration) -> Result<Vec<Isometry3<f64>>> {
        self.check_configuration(q)?;
        let mut frames = Vec::with_capacity(self.joints.len());
        let mut current = self.base;
        for (joint, &value) in self.joints.iter().zip(q.0.iter()) {
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, value);
            current = current * joint.origin_offset * Isometry3::from_parts(Default::default(), rot);
            frames.push(current);
        }
        Ok(frames)
    }

    /// Bounding spheres grouped by link: centers at `(k - 1/2)/K` along each
    /// link segment, transformed by FK.
    pub fn link_spheres(&self, q: &Configuration) -> Result<Vec<Vec<RigidSphere>>> {
        let frames = self.forward_kinematics(q)?;
        let mut out = Vec::with_capacity(self.links.len());
        for (link, frame) in self.links.iter().zip(frames.iter()) {
            let mut spheres = Vec::with_capacity(link.sphere_count);
            for k in 1..=link.sphere_count {
                let s = (k as f64 - 0.5) / link.sphere_count as f64 * link.length;
                let center = frame.transform_point(&nalgebra::Point3::new(s, 0.0, 0.0));
                spheres.push(RigidSphere::new(center.coords, link.sphere_radius)?);
            }
            out.push(spheres);
        }
        Ok(out)
    }

    /// Sphere centers plus their 3xD Jacobians with respect to the joint
    /// values, grouped by link. Used for analytic static-cost gradients.
    pub fn link_sphere_jacobians(
        &self,
        q: &Configuration,
    ) -> Result<(Vec<Vec<RigidSphere>>, Vec<Vec<Matrix3xX<f64>>>)> {
        let frames = self.forward_kinematics(q)?;
        let spheres = self.link_spheres(q)?;
        let dof = self.dof();
        // World axis and origin of each joint; rotation about the axis leaves
        // the axis itself fixed, so frame rotation applies directly.
        let axes: Vec<Vec3> = frames
            .iter()
            .zip(self.joints.iter())
            .map(|(f, j)| f.rotation * j.axis.into_inner())
            .collect();
        let origins: Vec<Vec3> = frames.iter().map(|f| f.translation.vector).collect();

        let mut jacobians = Vec::with_capacity(spheres.len());
        for (j, link_spheres) in spheres.iter().enumerate() {
            let mut per_link = Vec::with_capacity(link_spheres.len());
            for sphere in link_spheres {
                let mut jac = Matrix3xX::zeros(dof);
                for i in 0..=j {
                    let col = axes[i].cross(&(sphere.center - origins[i]));
                    jac.set_column(i, &col);
                }
                per_link.push(jac);
            }
            jacobians.push(per_link);
        }
        Ok((spheres, jacobians))
    }

    /// Tip of the last link; used as the workspace path-length reference.
    pub fn end_effector(&self, q: &Configuration) -> Result<Vec3> {
        let frames = self.forward_kinematics(q)?;
        let j = self.links.len() - 1;
        let tip = nalgebra::Point3::new(self.links[j].length, 0.0, 0.0);
        Ok(frames[j].transform_point(&tip).coords)
    }

    /// Tabletop-scale 6-joint chain standing in for a small industrial arm.
    pub fn example_6dof() -> Self {
        let z = Vec3::z();
        let y = Vec3::y();
        let x_off = |d: f64| Isometry3::translation(d, 0.0, 0.0);
        let lim = (-std::f64::consts::PI, std::f64::consts::PI);
        let joints = vec![
            JointSpec::new(z, Isometry3::translation(0.0, 0.0, 0.1), lim).unwrap(),
            JointSpec::new(y, Isometry3::identity(), lim).unwrap(),
            JointSpec::new(y, x_off(0.35), lim).unwrap(),
            JointSpec::new(x_off(0.0).rotation * Vec3::x(), x_off(0.3), lim).unwrap(),
            JointSpec::new(y, x_off(0.15), lim).unwrap(),
            JointSpec::new(Vec3::x(), x_off(0.1), lim).unwrap(),
        ];
        let links = vec![
            LinkSpec::new(0.1, 1, 0.08).unwrap(),
            LinkSpec::new(0.35, 3, 0.07).unwrap(),
            LinkSpec::new(0.3, 3, 0.06).unwrap(),
            LinkSpec::new(0.15, 2, 0.05).unwrap(),
            LinkSpec::new(0.1, 1, 0.05).unwrap(),
            LinkSpec::new(0.1, 1, 0.05).unwrap(),
        ];
        Self::new(joints, links, Isometry3::identity()).unwrap()
    }

    /// Tabletop-scale 7-joint chain standing in for a redundant arm.
    pub fn example_7dof() -> Self {
        let z = Vec3::z();
        let y = Vec3::y();
        let x = Vec3::x();
        let x_off = |d: f64| Isometry3::translation(d, 0.0, 0.0);
        let lim = (-std::f64::consts::PI, std::f64::consts::PI);
        let joints = vec![
            JointSpec::new(z, Isometry3::translation(0.0, 0.0, 0.15), lim).unwrap(),
            JointSpec::new(y, Isometry3::identity(), lim).unwrap(),
            JointSpec::new(x, x_off(0.2), lim).unwrap(),
            JointSpec::new(y, x_off(0.2), lim).unwrap(),
            JointSpec::new(x, x_off(0.2), lim).unwrap(),
            JointSpec::new(y, x_off(0.2), lim).unwrap(),
            JointSpec::new(x, x_off(0.1), lim).unwrap(),
        ];
        let links = vec![
            LinkSpec::new(0.15, 1, 0.09).unwrap(),
            LinkSpec::new(0.2, 2, 0.07).unwrap(),
            LinkSpec::new(0.2, 2, 0.07).unwrap(),
            LinkSpec::new(0.2, 2, 0.06).unwrap(),
            LinkSpec::new(0.2, 2, 0.06).unwrap(),
            LinkSpec::new(0.1, 1, 0.05).unwrap(),
            LinkSpec::new(0.1, 1, 0.05).unwrap(),
        ];
        Self::new(joints, links, Isometry3::identity()).unwrap()
    }
}

/// Planar two-link chain with unit links, used across tests.
pub fn planar_two_link() -> RobotModel {
    let lim = (-std::f64::consts::PI, std::f64::consts::PI);
    let joints = vec![
        JointSpec::new(Vec3::z(), Isometry3::identity(), lim).unwrap(),
        JointSpec::new(Vec3::z(), Isometry3::translation(1.0, 0.0, 0.0), lim).unwrap(),
    ];
    let links = vec![
        LinkSpec::new(1.0, 4, 0.3).unwrap(),
        LinkSpec::new(1.0, 4, 0.3).unwrap(),
    ];
    RobotModel::new(joints, links, Isometry3::identity()).unwrap()
}
