//! Inverse kinematics, singularity screening and workspace enumeration.
//!
//! Poses are grip-center poses in the world frame. The platform center is
//! recovered by stepping back `grip_offset` along the platform z-axis, and
//! the world-to-base offset `base_center_height` is removed before the leg
//! vectors `h + R·pᵢ − bᵢ` are formed in the base frame.

use nalgebra::{Matrix6, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{JointLayout, MachineConfig};
use crate::kinematics::{combined_rotation, Pose, Rotation};

pub const DEFAULT_SINGULARITY_THRESHOLD: f64 = 1e-6;
const DEGENERATE_LEG_MM: f64 = 1e-9;

/// Motion ranges as offsets from the home pose: mm for translations, degrees for rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionLimits {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub roll_range: (f64, f64),
    pub pitch_range: (f64, f64),
    pub yaw_range: (f64, f64),
}

impl MotionLimits {
    /// Tiger 66.1 limits. x/y and roll/pitch share their ranges; z sweeps
    /// upward from home.
    pub fn tiger() -> Self {
        MotionLimits {
            x_range: (-158.0, 158.0),
            y_range: (-158.0, 158.0),
            z_range: (0.0, 50.0),
            roll_range: (-30.0, 30.0),
            pitch_range: (-30.0, 30.0),
            yaw_range: (-55.0, 55.0),
        }
    }

    /// Every range collapsed onto the home pose.
    pub fn home_only() -> Self {
        MotionLimits {
            x_range: (0.0, 0.0),
            y_range: (0.0, 0.0),
            z_range: (0.0, 0.0),
            roll_range: (0.0, 0.0),
            pitch_range: (0.0, 0.0),
            yaw_range: (0.0, 0.0),
        }
    }

    pub fn ranges(&self) -> [(f64, f64); 6] {
        [
            self.x_range,
            self.y_range,
            self.z_range,
            self.roll_range,
            self.pitch_range,
            self.yaw_range,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.ranges().into_iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Validation {
                    check: format!("motion_limits:range_{i}"),
                    residual: lo - hi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSteps {
    pub step_xy: f64,
    pub step_z: f64,
    pub step_rot: f64,
}

impl GridSteps {
    pub fn tiger() -> Self {
        GridSteps {
            step_xy: 15.0,
            step_z: 10.0,
            step_rot: 10.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        GridSteps {
            step_xy: self.step_xy * factor,
            step_z: self.step_z * factor,
            step_rot: self.step_rot * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("step_xy", self.step_xy),
            ("step_z", self.step_z),
            ("step_rot", self.step_rot),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    check: format!("grid_steps:{name}"),
                    residual: v,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceRecord {
    /// Grid enumeration index.
    pub pose_id: u64,
    pub pose: Pose,
    pub leg_lengths: [f64; 6],
    pub jacobian_det: f64,
}

/// Platform orientation and platform-center position in the base frame.
pub fn platform_center(pose: &Pose, config: &MachineConfig) -> (Rotation, Vector3<f64>) {
    let rot = combined_rotation(pose);
    let platform_z = rot.matrix().column(2).into_owned();
    let mut h = pose.position() - platform_z * config.grip_offset;
    h.z -= config.base_center_height;
    (rot, h)
}

/// Leg vectors `h + R·pᵢ − bᵢ` in the base frame.
pub fn leg_vectors(pose: &Pose, layout: &JointLayout, config: &MachineConfig) -> [Vector3<f64>; 6] {
    let (rot, h) = platform_center(pose, config);
    std::array::from_fn(|leg| h + rot.rotate(layout.platform_joint(leg)) - layout.base_joint(leg))
}

pub fn leg_lengths(pose: &Pose, layout: &JointLayout, config: &MachineConfig) -> [f64; 6] {
    leg_vectors(pose, layout, config).map(|v| v.norm())
}

/// Platform joint positions in the world frame.
pub fn platform_joints_world(
    pose: &Pose,
    layout: &JointLayout,
    config: &MachineConfig,
) -> [Vector3<f64>; 6] {
    let (rot, h) = platform_center(pose, config);
    let lift = Vector3::new(0.0, 0.0, config.base_center_height);
    std::array::from_fn(|leg| h + rot.rotate(layout.platform_joint(leg)) + lift)
}

fn jacobian_from_vectors(
    rot: &Rotation,
    vectors: &[Vector3<f64>; 6],
    layout: &JointLayout,
    config: &MachineConfig,
) -> Result<Matrix6<f64>> {
    let mut j = Matrix6::zeros();
    for (leg, v) in vectors.iter().enumerate() {
        let length = v.norm();
        if length < DEGENERATE_LEG_MM {
            return Err(Error::DegenerateLeg { leg: leg + 1, length });
        }
        let s = v / length;
        let moment = rot.rotate(layout.platform_joint(leg)).cross(&s) / config.base_joint_radius;
        for k in 0..3 {
            j[(leg, k)] = s[k];
            j[(leg, k + 3)] = moment[k];
        }
    }
    Ok(j)
}

/// Force Jacobian with moment columns scaled by `1 / base_joint_radius`.
pub fn force_jacobian(pose: &Pose, layout: &JointLayout, config: &MachineConfig) -> Result<Matrix6<f64>> {
    let (rot, _) = platform_center(pose, config);
    jacobian_from_vectors(&rot, &leg_vectors(pose, layout, config), layout, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InvalidReason {
    /// 1-based leg index and the offending length.
    StrokeViolation { leg: usize, length: f64 },
    Singular { det: f64 },
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidReason::StrokeViolation { leg, .. } => write!(f, "StrokeViolation(leg {leg})"),
            InvalidReason::Singular { .. } => write!(f, "Singular"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validity {
    Valid(WorkspaceRecord),
    Invalid(InvalidReason),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityOptions {
    pub threshold: f64,
    pub check_stroke: bool,
}

impl ValidityOptions {
    pub fn new(threshold: f64) -> Self {
        ValidityOptions {
            threshold,
            check_stroke: true,
        }
    }
}

pub fn pose_valid(pose: &Pose, layout: &JointLayout, config: &MachineConfig, threshold: f64) -> Validity {
    pose_valid_with(pose, 0, layout, config, &ValidityOptions::new(threshold))
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn pose_valid_with(
    pose: &Pose,
    pose_id: u64,
    layout: &JointLayout,
    config: &MachineConfig,
    options: &ValidityOptions,
) -> Validity {
    let (rot, h) = platform_center(pose, config);
    let vectors: [Vector3<f64>; 6] =
        std::array::from_fn(|leg| h + rot.rotate(layout.platform_joint(leg)) - layout.base_joint(leg));
    let lengths = vectors.map(|v| v.norm());
    if options.check_stroke {
        if let Some(leg) = lengths.iter().position(|&l| !config.length_in_limits(l)) {
            return Validity::Invalid(InvalidReason::StrokeViolation {
                leg: leg + 1,
                length: lengths[leg],
            });
        }
    }
    let det = match jacobian_from_vectors(&rot, &vectors, layout, config) {
        Ok(j) => j.determinant(),
        Err(_) => 0.0,
    };
    if !(det.abs() > options.threshold) {
        return Validity::Invalid(InvalidReason::Singular { det });
    }
    Validity::Valid(WorkspaceRecord {
        pose_id,
        pose: *pose,
        leg_lengths: lengths,
        jacobian_det: det,
    })
}

/// Values `min, min + step, …` not exceeding `max`; no endpoint snapping.
pub fn axis_samples(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| min + k as f64 * step).collect()
}

/// Full Cartesian grid over the six pose coordinates, yaw varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGrid {
    axes: [Vec<f64>; 6],
}

impl PoseGrid {
    pub fn new(config: &MachineConfig, limits: &MotionLimits, steps: &GridSteps) -> Result<Self> {
        limits.validate()?;
        steps.validate()?;
        let home = config.home_pose().to_array();
        let step = [
            steps.step_xy,
            steps.step_xy,
            steps.step_z,
            steps.step_rot,
            steps.step_rot,
            steps.step_rot,
        ];
        let ranges = limits.ranges();
        let axes = std::array::from_fn(|k| {
            axis_samples(ranges[k].0, ranges[k].1, step[k])
                .into_iter()
                .map(|offset| home[k] + offset)
                .collect()
        });
        Ok(PoseGrid { axes })
    }

    pub fn axis_len(&self, k: usize) -> usize {
        self.axes[k].len()
    }

    pub fn len(&self) -> u64 {
        self.axes.iter().map(|a| a.len() as u64).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pose(&self, index: u64) -> Pose {
        let mut rem = index;
        let mut coords = [0.0; 6];
        for k in (0..6).rev() {
            let n = self.axes[k].len() as u64;
            coords[k] = self.axes[k][(rem % n) as usize];
            rem /= n;
        }
        Pose::from_array(coords)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceStats {
    pub total: u64,
    pub valid: u64,
    pub stroke_rejected: u64,
    pub singular_rejected: u64,
}

impl WorkspaceStats {
    pub fn valid_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.valid as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceRun {
    /// Valid records ordered by `pose_id`.
    pub records: Vec<WorkspaceRecord>,
    pub stats: WorkspaceStats,
}

/// Sweeps the grid and keeps the valid poses. Runs on the current rayon
/// pool; the result does not depend on its size.
pub fn generate_workspace(
    layout: &JointLayout,
    config: &MachineConfig,
    limits: &MotionLimits,
    steps: &GridSteps,
    threshold: f64,
) -> Result<WorkspaceRun> {
    let grid = PoseGrid::new(config, limits, steps)?;
    let options = ValidityOptions::new(threshold);
    let outcomes: Vec<Validity> = (0..grid.len())
        .into_par_iter()
        .map(|id| pose_valid_with(&grid.pose(id), id, layout, config, &options))
        .collect();
    let mut stats = WorkspaceStats {
        total: grid.len(),
        ..Default::default()
    };
    let mut records = Vec::new();
    for outcome in outcomes {
        match outcome {
            Validity::Valid(r) => records.push(r),
            Validity::Invalid(InvalidReason::StrokeViolation { .. }) => stats.stroke_rejected += 1,
            Validity::Invalid(InvalidReason::Singular { .. }) => stats.singular_rejected += 1,
        }
    }
    stats.valid = records.len() as u64;
    Ok(WorkspaceRun { records, stats })
}
