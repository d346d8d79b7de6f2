//! SO(3)/SE(3) primitives: exponential and logarithm maps, geodesic
//! interpolation and distance, intrinsic-XYZ Euler parametrization, and
//! re-orthonormalization.
//!
//! Rotations are stored as 3x3 orthonormal matrices with determinant +1.
//! Tangent vectors use the axis-angle form: direction is the rotation axis,
//! magnitude the angle in radians. The logarithm is canonical with angle in
//! `[0, pi]`; near the cut locus (angle > pi - 1e-3) the axis is recovered
//! from the symmetric part of the matrix, where the skew part degenerates.

use crate::{Error, Mat3, Result, Scalar, Vec3};

/// Axis-angle tangent vector (radians times unit axis).
pub type AxisAngleVec<S> = Vec3<S>;

/// Orthonormality tolerance accepted by [`log_so3`] and friends.
pub const ORTHONORMAL_TOL: f64 = 1e-6;
/// Gimbal-lock exclusion band around |pitch| = pi/2 for Euler extraction.
pub const GIMBAL_BAND: f64 = 1e-3;

/// Element of SO(3): a 3x3 orthonormal matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<S: Scalar>(Mat3<S>);

impl<S: Scalar> Rotation<S> {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix that is already known to satisfy the SO(3) invariants.
    pub fn from_matrix_unchecked(m: Mat3<S>) -> Self {
        Rotation(m)
    }

    /// Validates orthonormality and determinant before wrapping.
    pub fn from_matrix(m: Mat3<S>) -> Result<Self> {
        let err = orthonormality_error(&m);
        if err > S::from_f64_lossy(ORTHONORMAL_TOL) {
            return Err(Error::invalid(format!(
                "matrix is not a rotation: orthonormality error {err}"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Mat3<S> {
        &self.0
    }

    pub fn into_matrix(self) -> Mat3<S> {
        self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Group composition: `self` applied after `other` (matrix product).
    pub fn compose(&self, other: &Self) -> Self {
        Rotation(self.0 * other.0)
    }

    /// Rotates a vector.
    pub fn apply(&self, v: &Vec3<S>) -> Vec3<S> {
        self.0 * v
    }

    pub fn rot_x(angle: S) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let o = S::zero();
        let l = S::one();
        Rotation(Mat3::new(l, o, o, o, c, -s, o, s, c))
    }

    pub fn rot_y(angle: S) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let o = S::zero();
        let l = S::one();
        Rotation(Mat3::new(c, o, s, o, l, o, -s, o, c))
    }

    pub fn rot_z(angle: S) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let o = S::zero();
        let l = S::one();
        Rotation(Mat3::new(c, -s, o, s, c, o, o, o, l))
    }

    /// Max deviation from the SO(3) invariants (orthonormality, det = +1).
    pub fn invariant_error(&self) -> S {
        orthonormality_error(&self.0)
    }
}

/// Max-entry error of `m^T m - I` combined with `|det(m) - 1|`.
pub fn orthonormality_error<S: Scalar>(m: &Mat3<S>) -> S {
    let gram = m.transpose() * m;
    let mut err = (m.determinant() - S::one()).abs();
    for r in 0..3 {
        for c in 0..3 {
            let target = if r == c { S::one() } else { S::zero() };
            err = err.max((gram[(r, c)] - target).abs());
        }
    }
    err
}

fn skew<S: Scalar>(v: &Vec3<S>) -> Mat3<S> {
    let o = S::zero();
    Mat3::new(o, -v.z, v.y, v.z, o, -v.x, -v.y, v.x, o)
}

/// Exponential map so(3) -> SO(3) via the Rodrigues formula.
///
/// Uses the Taylor expansions of `sin(t)/t` and `(1-cos(t))/t^2` below
/// `t = 1e-4` where the direct quotients lose precision.
pub fn exp_so3<S: Scalar>(v: &AxisAngleVec<S>) -> Result<Rotation<S>> {
    if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
        return Err(Error::invalid("exp_so3: non-finite tangent vector"));
    }
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < S::from_f64_lossy(1e-4) {
        // sin t / t = 1 - t^2/6 + t^4/120; (1 - cos t)/t^2 = 1/2 - t^2/24
        let half = S::from_f64_lossy(0.5);
        (
            S::one() - theta2 / S::from_f64_lossy(6.0),
            half - theta2 / S::from_f64_lossy(24.0),
        )
    } else {
        (theta.sin() / theta, (S::one() - theta.cos()) / theta2)
    };
    let k = skew(v);
    let m = Mat3::identity() + k * a + k * k * b;
    Ok(Rotation::from_matrix_unchecked(m))
}

/// Logarithm map SO(3) -> so(3), canonical with angle in `[0, pi]`.
///
/// Rejects matrices whose orthonormality error exceeds [`ORTHONORMAL_TOL`].
pub fn log_so3<S: Scalar>(r: &Rotation<S>) -> Result<AxisAngleVec<S>> {
    let err = orthonormality_error(r.matrix());
    if err > S::from_f64_lossy(ORTHONORMAL_TOL) {
        return Err(Error::invalid(format!(
            "log_so3: orthonormality error {err} exceeds {ORTHONORMAL_TOL:e}"
        )));
    }
    let m = r.matrix();
    let half = S::from_f64_lossy(0.5);
    let sin_vec = Vec3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    );
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let cos_theta = ((trace - S::one()) * half).clamp(-S::one(), S::one());
    // atan2 form stays first-order accurate at both ends, unlike acos.
    let theta = sin_vec.norm().atan2(cos_theta);

    if theta < S::from_f64_lossy(1e-7) {
        // sin(t)/t deviates from 1 by t^2/6 < 1e-14 here.
        return Ok(sin_vec);
    }

    if theta > S::pi() - S::from_f64_lossy(GIMBAL_BAND) {
        // Near the cut locus sin(theta) degenerates; take the axis from the
        // symmetric part: (R + R^T)/2 = cos(t) I + (1 - cos(t)) a a^T.
        let one_minus = S::one() - cos_theta;
        let sym = (m + m.transpose()) * half;
        let axx = ((sym[(0, 0)] - cos_theta) / one_minus).max(S::zero());
        let ayy = ((sym[(1, 1)] - cos_theta) / one_minus).max(S::zero());
        let azz = ((sym[(2, 2)] - cos_theta) / one_minus).max(S::zero());
        let mut axis = if axx >= ayy && axx >= azz {
            let ax = axx.sqrt();
            Vec3::new(ax, sym[(0, 1)] / (one_minus * ax), sym[(0, 2)] / (one_minus * ax))
        } else if ayy >= azz {
            let ay = ayy.sqrt();
            Vec3::new(sym[(0, 1)] / (one_minus * ay), ay, sym[(1, 2)] / (one_minus * ay))
        } else {
            let az = azz.sqrt();
            Vec3::new(sym[(0, 2)] / (one_minus * az), sym[(1, 2)] / (one_minus * az), az)
        };
        axis /= axis.norm();
        // Orient along the skew part when it still carries a sign.
        if axis.dot(&sin_vec) < S::zero() {
            axis = -axis;
        }
        return Ok(axis * theta);
    }

    Ok(sin_vec * (theta / theta.sin()))
}

/// Geodesic interpolation from the identity: `Exp(gamma * Log(r))`.
///
/// `gamma` in `[0, 1]` traverses from the identity to `r`; values outside
/// that range extrapolate along the same geodesic (used by the x0
/// reconstruction in the sampler, where `gamma = 1/sqrt(alpha_bar) > 1`).
pub fn geodesic_interp<S: Scalar>(gamma: S, r: &Rotation<S>) -> Result<Rotation<S>> {
    if !gamma.is_finite() {
        return Err(Error::invalid("geodesic_interp: non-finite gamma"));
    }
    exp_so3(&(log_so3(r)? * gamma))
}

/// Geodesic (angular) distance `|Log(r1^T r2)|` in `[0, pi]`.
pub fn geodesic_distance<S: Scalar>(r1: &Rotation<S>, r2: &Rotation<S>) -> S {
    let rel = r1.inverse().compose(r2);
    let m = rel.matrix();
    let half = S::from_f64_lossy(0.5);
    let sin_norm = Vec3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    )
    .norm();
    let cos_theta = ((m[(0, 0)] + m[(1, 1)] + m[(2, 2)] - S::one()) * half)
        .clamp(-S::one(), S::one());
    sin_norm.atan2(cos_theta)
}

/// Projects a near-rotation matrix onto SO(3) (polar projection via SVD).
///
/// Idempotent on valid rotations; fails if the projection cannot reach a
/// positive determinant (rank-deficient input).
pub fn project_to_so3<S: Scalar>(m: &Mat3<S>) -> Result<Rotation<S>> {
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("svd failed".into()))?;
    let mut r = u * v_t;
    if r.determinant() < S::zero() {
        // Flip the weakest singular direction.
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    let rot = Rotation::from_matrix_unchecked(r);
    if rot.invariant_error() > S::from_f64_lossy(ORTHONORMAL_TOL) || r.determinant() <= S::zero() {
        return Err(Error::invalid(
            "project_to_so3: projection did not reach SO(3)",
        ));
    }
    Ok(rot)
}

/// Rigid grasp pose: translation in meters plus a rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose<S: Scalar> {
    pub translation: Vec3<S>,
    pub rotation: Rotation<S>,
}

impl<S: Scalar> GraspPose<S> {
    pub fn identity() -> Self {
        GraspPose {
            translation: Vec3::zeros(),
            rotation: Rotation::identity(),
        }
    }

    pub fn new(translation: Vec3<S>, rotation: Rotation<S>) -> Self {
        GraspPose {
            translation,
            rotation,
        }
    }

    /// Applies the rigid transform to a point.
    pub fn apply(&self, p: &Vec3<S>) -> Vec3<S> {
        self.rotation.apply(p) + self.translation
    }

    /// Composition `self * other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        GraspPose {
            translation: self.rotation.apply(&other.translation) + self.translation,
            rotation: self.rotation.compose(&other.rotation),
        }
    }

    pub fn inverse(&self) -> Self {
        let rinv = self.rotation.inverse();
        GraspPose {
            translation: -rinv.apply(&self.translation),
            rotation: rinv,
        }
    }
}

/// Gripper joint configuration: 3 prismatic (translation, meters) plus
/// 3 revolute joints as intrinsic-XYZ Euler angles (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperJointConfig<S: Scalar> {
    pub position: Vec3<S>,
    pub euler: Vec3<S>,
}

/// Rotation from intrinsic-XYZ Euler angles: `R = Rx(e0) Ry(e1) Rz(e2)`.
pub fn rotation_from_euler_xyz<S: Scalar>(e: &Vec3<S>) -> Rotation<S> {
    Rotation::rot_x(e.x)
        .compose(&Rotation::rot_y(e.y))
        .compose(&Rotation::rot_z(e.z))
}

/// Intrinsic-XYZ Euler angles of a rotation.
///
/// Errors with [`Error::DegenerateParametrization`] when the pitch is within
/// [`GIMBAL_BAND`] of `pi/2`.
pub fn euler_xyz_from_rotation<S: Scalar>(r: &Rotation<S>) -> Result<Vec3<S>> {
    let m = r.matrix();
    let sy = m[(0, 2)].clamp(-S::one(), S::one());
    let pitch = sy.asin();
    if pitch.abs() > S::frac_pi_2() - S::from_f64_lossy(GIMBAL_BAND) {
        return Err(Error::DegenerateParametrization {
            pitch: pitch.to_f64_lossy(),
            band: GIMBAL_BAND,
        });
    }
    Ok(Vec3::new(
        (-m[(1, 2)]).atan2(m[(2, 2)]),
        pitch,
        (-m[(0, 1)]).atan2(m[(0, 0)]),
    ))
}

/// Euler extraction that never fails: inside the gimbal band it pins roll
/// to zero and resolves yaw from the remaining degree of freedom. Intended
/// for guidance steps that must make progress at any orientation.
pub fn euler_xyz_from_rotation_lenient<S: Scalar>(r: &Rotation<S>) -> Vec3<S> {
    match euler_xyz_from_rotation(r) {
        Ok(e) => e,
        Err(_) => {
            let m = r.matrix();
            let sy = m[(0, 2)].clamp(-S::one(), S::one());
            let pitch = sy.asin();
            // With roll = 0: R[1][0] = sin(yaw)cos... solve yaw from the
            // second row: m10 = cos(pitch) missing; use atan2(m10, m11).
            Vec3::new(S::zero(), pitch, m[(1, 0)].atan2(m[(1, 1)]))
        }
    }
}

/// Grasp pose from a joint configuration.
pub fn pose_from_joints<S: Scalar>(q: &GripperJointConfig<S>) -> GraspPose<S> {
    GraspPose {
        translation: q.position,
        rotation: rotation_from_euler_xyz(&q.euler),
    }
}

/// Joint configuration of a grasp pose; fails near gimbal lock.
pub fn joints_from_pose<S: Scalar>(g: &GraspPose<S>) -> Result<GripperJointConfig<S>> {
    Ok(GripperJointConfig {
        position: g.translation,
        euler: euler_xyz_from_rotation(&g.rotation)?,
    })
}
