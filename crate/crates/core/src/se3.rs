//! Rigid transforms, twists and wrenches.
//!
//! Six-vectors are always stacked rotational part first: wrenches as
//! `(moment, force)` and twists as `(angular, linear)`. A transform `T_a^b`
//! is the pose of frame `{b}` expressed in `{a}`, so `p_a = T_a^b p_b`.
//!
//! The adjoint of `T = (R, p)` is
//!
//! ```text
//! Ad_T = | R      0 |
//!        | [p]x R R |
//! ```
//!
//! and maps twists `V_a = Ad(T_a^b) V_b`. Wrenches move with the transpose of
//! the inverse map, `F_a = Ad(T_b^a)^T F_b`.

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, Unit, Vector3, Vector6};

use crate::error::{Error, Result};

/// Orthonormality drift tolerated after construction.
const ORTHO_TOL: f64 = 1e-10;
/// Drift beyond which the input is rejected instead of re-orthonormalized.
const REJECT_TOL: f64 = 1e-3;

/// Skew-symmetric cross-product matrix, `skew(v) * w == v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn orthonormal_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// An element of SE(3) stored as a rotation matrix and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, projecting a slightly drifted rotation back onto
    /// SO(3) with a polar decomposition.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let drift = orthonormal_drift(&rotation);
        if drift > REJECT_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (drift {drift:.3e})"
            )));
        }
        let rotation = if drift > 1e-12 {
            let svd = rotation.svd(true, true);
            let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            u * v_t
        } else {
            rotation
        };
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized here) followed by
    /// a translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() > 0.0 {
            Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner()
        } else {
            Matrix3::identity()
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut ad = Matrix6::zeros();
        let pr = skew(&self.translation) * self.rotation;
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&pr);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        ad
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Free-function form of [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

/// Free-function form of [`RigidTransform::adjoint`].
pub fn adjoint(t: &RigidTransform) -> Matrix6<f64> {
    t.adjoint()
}

/// Moment and force acting at a frame origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub moment: Vector3<f64>,
    pub force: Vector3<f64>,
}

impl Wrench {
    pub fn new(moment: Vector3<f64>, force: Vector3<f64>) -> Self {
        Self { moment, force }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            moment: v.fixed_rows::<3>(0).into_owned(),
            force: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 6 {
            return Err(Error::DimensionMismatch {
                expected: 6,
                actual: v.len(),
            });
        }
        Ok(Self::from_vector(&Vector6::from_column_slice(v)))
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.moment);
        v.fixed_rows_mut::<3>(3).copy_from(&self.force);
        v
    }

    /// Re-expresses a wrench given in frame `{b}` in frame `{a}`, where
    /// `pose` is `T_a^b`. Equivalent to `Ad(T_b^a)^T F_b`.
    pub fn expressed_in_parent(&self, pose: &RigidTransform) -> Wrench {
        let force = pose.rotation() * self.force;
        let moment = pose.rotation() * self.moment + pose.translation().cross(&force);
        Wrench { moment, force }
    }

    /// Instantaneous power `<F, V>`.
    pub fn power(&self, twist: &Twist) -> f64 {
        self.moment.dot(&twist.angular) + self.force.dot(&twist.linear)
    }

    pub fn is_finite(&self) -> bool {
        self.moment.iter().chain(self.force.iter()).all(|v| v.is_finite())
    }
}

/// Angular and linear velocity of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

impl Twist {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            angular: v.fixed_rows::<3>(0).into_owned(),
            linear: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.angular);
        v.fixed_rows_mut::<3>(3).copy_from(&self.linear);
        v
    }
}
