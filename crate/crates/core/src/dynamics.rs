//! Serial-chain kinematics and the object's tool wrench along a path.
//!
//! The tool wrench is the wrench the gripper must apply to the held object,
//! expressed at the tool origin in tool axes. Along a path it is affine in
//! `(s̈, ṡ²)`: `F_t = b″ s̈ + b′ ṡ² + b`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Wrench};
use crate::spline::PathSpec;

pub const STANDARD_GRAVITY: f64 = 9.8;

/// Revolute joint rotating about `axis` through `origin`, both in the frame
/// reached after `parent_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    pub axis: Vector3<f64>,
    pub origin: Vector3<f64>,
    pub parent_offset: RigidTransform,
}

impl RevoluteJoint {
    pub fn new(axis: Vector3<f64>, origin: Vector3<f64>, parent_offset: RigidTransform) -> Result<Self> {
        let n = axis.norm();
        if !(n > 1e-12 && n.is_finite()) || origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("joint axis must be a finite non-zero vector".into()));
        }
        Ok(Self { axis: axis / n, origin, parent_offset })
    }

    fn motion(&self, q: f64) -> RigidTransform {
        let r = RigidTransform::from_axis_angle(&self.axis, q, Vector3::zeros());
        let p = self.origin - r.rotation() * self.origin;
        RigidTransform::from_axis_angle(&self.axis, q, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<RevoluteJoint>,
    tool_offset: RigidTransform,
    gravity: Vector3<f64>,
}

impl KinematicChain {
    pub fn new(joints: Vec<RevoluteJoint>, tool_offset: RigidTransform) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidInput("a chain needs at least one joint".into()));
        }
        Ok(Self {
            joints,
            tool_offset,
            gravity: Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
        })
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[RevoluteJoint] {
        &self.joints
    }

    pub fn tool_offset(&self) -> &RigidTransform {
        &self.tool_offset
    }

    /// World-frame gravity acceleration.
    pub fn gravity(&self) -> &Vector3<f64> {
        &self.gravity
    }

    fn check(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), actual: q.len() });
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<RigidTransform> {
        self.check(q)?;
        let mut t = RigidTransform::identity();
        for (joint, qi) in self.joints.iter().zip(q.iter()) {
            t = t.compose(&joint.parent_offset).compose(&joint.motion(*qi));
        }
        Ok(t.compose(&self.tool_offset))
    }

    /// Tool pose and `6 × n` Jacobian mapping `q̇` to the tool's angular and
    /// linear velocity, both in tool axes.
    pub fn pose_and_jacobian(&self, q: &DVector<f64>) -> Result<(RigidTransform, DMatrix<f64>)> {
        self.check(q)?;
        let mut t = RigidTransform::identity();
        let mut axes = Vec::with_capacity(self.dof());
        for (joint, qi) in self.joints.iter().zip(q.iter()) {
            t = t.compose(&joint.parent_offset);
            axes.push((t.transform_vector(&joint.axis), t.transform_point(&joint.origin)));
            t = t.compose(&joint.motion(*qi));
        }
        let tool = t.compose(&self.tool_offset);
        let rt = tool.rotation().transpose();
        let mut jac = DMatrix::zeros(6, self.dof());
        for (i, (w, o)) in axes.iter().enumerate() {
            let v = w.cross(&(tool.translation() - o));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&(rt * w));
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&(rt * v));
        }
        Ok((tool, jac))
    }

    pub fn body_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.pose_and_jacobian(q)?.1)
    }
}

/// Finite-difference step for the Jacobian's path derivative.
pub fn path_derivative_step(cell_width: f64) -> f64 {
    (1e-5 * cell_width).clamp(1e-7, 1e-4)
}

/// `d J(q(s)) / ds` by central differences.
pub fn jacobian_path_derivative(chain: &KinematicChain, path: &PathSpec, s: f64, h: f64) -> Result<DMatrix<f64>> {
    // The end cubics extend past the grid, so the stencil stays central at the ends.
    let jac = |s: f64| chain.body_jacobian(&path.q(s));
    Ok((jac(s + h)? - jac(s - h)?) / (2.0 * h))
}

/// A rigid object held at a fixed offset, axes aligned with the tool.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    mass: f64,
    inertia: Matrix3<f64>,
    com_offset: Vector3<f64>,
}

impl ObjectModel {
    pub fn new(mass: f64, inertia: Matrix3<f64>, com_offset: Vector3<f64>) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidInput(format!("object mass must be positive, got {mass}")));
        }
        if (inertia - inertia.transpose()).amax() > 1e-12 * (1.0 + inertia.amax()) {
            return Err(Error::InvalidInput("object inertia must be symmetric".into()));
        }
        if inertia.cholesky().is_none() || com_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("object inertia must be positive definite".into()));
        }
        Ok(Self { mass, inertia, com_offset })
    }

    /// Uniform box with edge lengths `dims` along tool x, y and z.
    pub fn uniform_box(mass: f64, dims: Vector3<f64>, com_offset: Vector3<f64>) -> Result<Self> {
        Self::new(mass, box_inertia(mass, &dims), com_offset)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn com_offset(&self) -> &Vector3<f64> {
        &self.com_offset
    }

    /// Same shape and density distribution at a different mass.
    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        Self::new(mass, self.inertia * (mass / self.mass), self.com_offset)
    }
}

pub fn box_inertia(mass: f64, dims: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, c) = (dims.x, dims.y, dims.z);
    Matrix3::from_diagonal(&Vector3::new(b * b + c * c, c * c + a * a, a * a + b * b)) * (mass / 12.0)
}

/// Tool motion in tool axes: `a_t` is the acceleration of the tool origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ToolMotion {
    pub gravity_in_tool: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
    pub linear_acceleration: Vector3<f64>,
}

/// Wrench the gripper applies to the object to produce `motion`.
pub fn newton_euler_tool_wrench(motion: &ToolMotion, obj: &ObjectModel) -> Wrench {
    let p = obj.com_offset;
    let (w, alpha) = (motion.angular_velocity, motion.angular_acceleration);
    let a_com = motion.linear_acceleration + alpha.cross(&p) + w.cross(&w.cross(&p));
    let force = (a_com - motion.gravity_in_tool) * obj.mass;
    let moment = obj.inertia * alpha + w.cross(&(obj.inertia * w)) + p.cross(&force);
    Wrench::new(moment, force)
}

/// `F_t = b_ddot s̈ + b_dot ṡ² + b_const`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchAffineForm {
    pub b_ddot: Vector6<f64>,
    pub b_dot: Vector6<f64>,
    pub b_const: Vector6<f64>,
}

impl WrenchAffineForm {
    pub fn evaluate(&self, sdot_sq: f64, sddot: f64) -> Wrench {
        Wrench::from_vector(&(self.b_ddot * sddot + self.b_dot * sdot_sq + self.b_const))
    }

    /// Same form for a scaled object mass with inertia scaled alike.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            b_ddot: self.b_ddot * factor,
            b_dot: self.b_dot * factor,
            b_const: self.b_const * factor,
        }
    }
}

/// Tool motion coefficients at one path point: each quantity is
/// `x_ddot * s̈ + x_dot * ṡ²` (angular velocity is `omega * ṡ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionCoefficients {
    pub gravity_in_tool: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub alpha_ddot: Vector3<f64>,
    pub alpha_dot: Vector3<f64>,
    pub accel_ddot: Vector3<f64>,
    pub accel_dot: Vector3<f64>,
}

impl MotionCoefficients {
    pub fn at(chain: &KinematicChain, path: &PathSpec, s: f64, h: f64) -> Result<Self> {
        let pt = path.sample(s);
        let (pose, jac) = chain.pose_and_jacobian(&pt.q)?;
        let djac = jacobian_path_derivative(chain, path, s, h)?;
        let jw = jac.rows(0, 3);
        let jv = jac.rows(3, 3);
        let v3 = |m: DVector<f64>| Vector3::new(m[0], m[1], m[2]);
        let omega = v3(&jw * &pt.dq);
        let vel = v3(&jv * &pt.dq);
        Ok(Self {
            gravity_in_tool: pose.rotation().transpose() * chain.gravity,
            omega,
            alpha_ddot: omega,
            alpha_dot: v3(&jw * &pt.ddq + djac.rows(0, 3) * &pt.dq),
            accel_ddot: vel,
            accel_dot: v3(&jv * &pt.ddq + djac.rows(3, 3) * &pt.dq) + omega.cross(&vel),
        })
    }

    pub fn motion(&self, sdot: f64, sddot: f64) -> ToolMotion {
        let sq = sdot * sdot;
        ToolMotion {
            gravity_in_tool: self.gravity_in_tool,
            angular_velocity: self.omega * sdot,
            angular_acceleration: self.alpha_ddot * sddot + self.alpha_dot * sq,
            linear_acceleration: self.accel_ddot * sddot + self.accel_dot * sq,
        }
    }

    pub fn wrench_form(&self, obj: &ObjectModel) -> WrenchAffineForm {
        let no_gravity = |w, alpha, a| {
            newton_euler_tool_wrench(
                &ToolMotion {
                    gravity_in_tool: Vector3::zeros(),
                    angular_velocity: w,
                    angular_acceleration: alpha,
                    linear_acceleration: a,
                },
                obj,
            )
            .to_vector()
        };
        let statics = ToolMotion {
            gravity_in_tool: self.gravity_in_tool,
            ..ToolMotion::default()
        };
        WrenchAffineForm {
            b_ddot: no_gravity(Vector3::zeros(), self.alpha_ddot, self.accel_ddot),
            b_dot: no_gravity(self.omega, self.alpha_dot, self.accel_dot),
            b_const: newton_euler_tool_wrench(&statics, obj).to_vector(),
        }
    }
}

/// Affine tool-wrench form at path parameter `s`.
pub fn parameterize_wrench(
    chain: &KinematicChain,
    path: &PathSpec,
    obj: &ObjectModel,
    s: f64,
    h: f64,
) -> Result<WrenchAffineForm> {
    Ok(MotionCoefficients::at(chain, path, s, h)?.wrench_form(obj))
}
