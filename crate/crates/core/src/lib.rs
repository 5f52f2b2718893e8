//! Kinematics engine for general 6-UPS Stewart platforms.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`geometry`] turns a [`MachineConfig`] into a [`JointLayout`].
//! 2. [`ik`] sweeps a pose grid, keeping poses whose legs stay within stroke
//!    and whose force Jacobian is non-singular.
//! 3. [`fk`] recovers, for each stored pose, the modified-DH joint variables
//!    of every leg chain by a deterministic coarse-to-fine angle search.
//! 4. [`sensitivity`] perturbs the recovered DH variables by tolerance bands
//!    and measures how far the grip center moves.
//!
//! [`store`] persists workspace and DH databases as CSV with JSON sidecars.

pub mod dh;
pub mod error;
pub mod fk;
pub mod geometry;
pub mod ik;
pub mod kinematics;
pub mod sensitivity;
pub mod store;

pub use error::{Error, Result};
pub use geometry::{build_joint_layout, load_machine_config, validate_geometry, JointLayout, MachineConfig};
pub use kinematics::{Pose, Rotation, Transform};
