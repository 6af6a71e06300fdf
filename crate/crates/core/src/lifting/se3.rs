//! SE(3) poses with closed-form exponential and logarithm maps.
//!
//! Twists are ordered `[omega; rho]`: rotation vector first, then the
//! translational part.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Twist = Vector6<f64>;

const SMALL_ANGLE: f64 = 1e-3;
const BRANCH_MARGIN: f64 = 1e-6;

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `yaw` radians about the z axis, then translation `t`.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: t,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Checks `R^T R = I` and `det R = 1` to within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        ortho < tol && (self.rotation.determinant() - 1.0).abs() < tol
    }

    /// Largest absolute entry difference of the two 3x4 matrices.
    pub fn max_abs_diff(&self, other: &Pose3) -> f64 {
        (self.rotation - other.rotation)
            .abs()
            .max()
            .max((self.translation - other.translation).abs().max())
    }
}

impl Mul for Pose3 {
    type Output = Pose3;

    fn mul(self, rhs: Pose3) -> Pose3 {
        Pose3 {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Coefficients `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

pub fn se3_exp(xi: &Twist) -> Pose3 {
    let omega = Vector3::new(xi[0], xi[1], xi[2]);
    let rho = Vector3::new(xi[3], xi[4], xi[5]);
    let theta = omega.norm();
    let k = hat(&omega);
    let k2 = k * k;
    let (a, b, c) = rodrigues_coefficients(theta);
    let rotation = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    Pose3 {
        rotation,
        translation: v * rho,
    }
}

/// Rotation vector of `r` on the principal branch.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    // w = sin(theta) * axis
    let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let cos_theta = (r.trace() - 1.0) * 0.5;
    let sin_theta = w.norm();
    let theta = sin_theta.atan2(cos_theta);
    if theta >= PI - BRANCH_MARGIN {
        return Err(Error::BranchAmbiguity { angle: theta });
    }
    let scale = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / sin_theta
    };
    Ok(w * scale)
}

pub fn se3_log(pose: &Pose3) -> Result<Twist> {
    let omega = so3_log(&pose.rotation)?;
    let theta = omega.norm();
    let k = hat(&omega);
    let coeff = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * coeff;
    let rho = v_inv * pose.translation;
    Ok(Twist::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z))
}

/// Geodesic `T1 exp(omega log(T1^-1 T2))`.
pub fn interpolate_se3(t1: &Pose3, t2: &Pose3, omega: f64) -> Result<Pose3> {
    let delta = se3_log(&(t1.inverse() * *t2))?;
    Ok(*t1 * se3_exp(&(delta * omega)))
}
