//! Grasp diffusion network core: denoising diffusion models on SO(3) x R^3
//! for conditional 6-DoF grasp-pose generation from partial point clouds.
//!
//! The crate is organized around the sampling pipeline:
//!
//! * [`geometry`] — SO(3)/SE(3) primitives (exp/log maps, geodesics, Euler
//!   parametrization, re-orthonormalization).
//! * [`igso3`] — the isotropic Gaussian distribution on SO(3): angle density,
//!   inverse-transform sampling, tangent-space approximation.
//! * [`schedule`] — cosine noise schedules and DDIM index subsequences.
//! * [`model`] — the conditional residual denoiser with a point-cloud encoder,
//!   explicit reverse-mode gradients, and Adam.
//! * [`diffusion`] — forward noising and DDPM/DDIM reverse sampling with
//!   low-temperature scaling and an optional guidance hook.
//! * [`guidance`] — sphere-based collision cost and gradient-guided posterior
//!   shifting.
//! * [`scene`] — synthetic primitive-object scenes: analytic rendering,
//!   antipodal grasp generation, and a grasp-success oracle.
//! * [`metrics`] — earth mover's distance, collision rate, success rate.
//! * [`io`] — configuration, dataset, checkpoint, and gripper-model files.
//!
//! All core math is generic over the scalar type via the [`Scalar`] trait
//! (`f32` or `f64`); concrete `f64` aliases live at the crate root.

pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod guidance;
pub mod igso3;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scene;
pub mod schedule;
pub mod stats;

pub use error::{Error, Result};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar for the core math: `f32` or `f64`.
pub trait Scalar:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + std::fmt::Display
{
    /// Conversion from `f64` with `as`-cast semantics.
    fn from_f64_lossy(v: f64) -> Self;
    /// Conversion to `f64` with `as`-cast semantics.
    fn to_f64_lossy(self) -> f64;
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_f64_lossy(v as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// 3-vector over the generic scalar.
pub type Vec3<S> = nalgebra::Vector3<S>;
/// 3x3 matrix over the generic scalar.
pub type Mat3<S> = nalgebra::Matrix3<S>;
/// 6-vector (translation part then rotation part) over the generic scalar.
pub type Vec6<S> = nalgebra::Vector6<S>;

/// Concrete double-precision aliases used by the CLI and most callers.
pub type Rotation64 = geometry::Rotation<f64>;
pub type GraspPose64 = geometry::GraspPose<f64>;
pub type JointConfig64 = geometry::GripperJointConfig<f64>;
pub type NoiseSchedule64 = schedule::NoiseSchedule<f64>;
pub type DenoiserParams64 = model::DenoiserParams<f64>;
pub type SceneRecord64 = scene::SceneRecord<f64>;
