//! Load distribution and grasp-constrained time-optimal path parameterization
//! for multi-suction-cup grippers.

pub mod calib;
pub mod config;
pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod gripper;
pub mod load_dist;
pub mod lp;
pub mod par;
pub mod presets;
pub mod se3;
pub mod spline;
pub mod totp;

pub use error::{Error, Result};
pub use se3::{adjoint, compose, skew, RigidTransform, Twist, Wrench};
pub use gripper::{GripperModel, StiffnessWeights, SuctionCup, ThresholdDirection};
