//! Modified Denavit-Hartenberg chains, one per leg, from the world frame {0}
//! to the grip-center frame {8}.
//!
//! Frame layout per leg:
//!
//! | frame | a_{i-1} | α_{i-1} | r_i  | θ_i  |
//! |-------|---------|---------|------|------|
//! | 1     | 0       | 0       | a    | θ₁   |
//! | 2     | b       | 90°     | 0    | θ₂   |
//! | 3     | 0       | 90°     | 0    | θ₃   |
//! | 4     | 0       | 90°     | 0    | −90° |
//! | 5     | 0       | 0       | d₄   | θ₅   |
//! | 6     | 0       | 90°     | 0    | θ₆   |
//! | 7     | 0       | 90°     | 0    | θ₇   |
//! | 8     | c       | 0       | d    | 0    |
//!
//! `a` is the base center height, `b` and `c` the base and platform joint
//! radii, `d` the grip offset. θ₁ is the leg's base joint angle; frames 2–3
//! form the universal joint, d₄ is the actuator length and frames 5–7 the
//! spherical joint.

use nalgebra::{Matrix3x6, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{JointLayout, MachineConfig};
use crate::kinematics::Transform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    /// Link length a_{i-1}, mm.
    pub a_prev: f64,
    /// Link twist α_{i-1}, degrees.
    pub alpha_prev: f64,
    /// Link offset r_i, mm.
    pub r: f64,
    /// Joint angle θ_i, degrees.
    pub theta: f64,
}

impl DhRow {
    pub const fn new(a_prev: f64, alpha_prev: f64, r: f64, theta: f64) -> Self {
        DhRow {
            a_prev,
            alpha_prev,
            r,
            theta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a_prev.is_finite() && self.alpha_prev.is_finite() && self.r.is_finite() && self.theta.is_finite()
    }
}

/// `Rx(α_{i-1}) · Tx(a_{i-1}) · Rz(θ_i) · Tz(r_i)` written out entrywise.
pub fn dh_transform(row: &DhRow) -> Transform {
    let (st, ct) = row.theta.to_radians().sin_cos();
    let (sa, ca) = row.alpha_prev.to_radians().sin_cos();
    #[rustfmt::skip]
    let m = Matrix4::new(
        ct,      -st,      0.0, row.a_prev,
        st * ca, ct * ca, -sa,  -row.r * sa,
        st * sa, ct * sa,  ca,   row.r * ca,
        0.0,     0.0,      0.0,  1.0,
    );
    Transform::from_matrix_unchecked(m)
}

/// Joint variables of one leg chain. Angles in degrees, `d4` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegSolution {
    /// 1-based leg index.
    pub leg_index: usize,
    pub theta2: f64,
    pub theta3: f64,
    pub d4: f64,
    pub theta5: f64,
    pub theta6: f64,
    pub theta7: f64,
}

impl LegSolution {
    pub fn zero(leg_index: usize) -> Self {
        LegSolution {
            leg_index,
            theta2: 0.0,
            theta3: 0.0,
            d4: 0.0,
            theta5: 0.0,
            theta6: 0.0,
            theta7: 0.0,
        }
    }

    /// Variables in perturbation order: θ₂, θ₃, d₄, θ₅, θ₆, θ₇.
    pub fn variables(&self) -> [f64; 6] {
        [self.theta2, self.theta3, self.d4, self.theta5, self.theta6, self.theta7]
    }

    pub fn with_variables(leg_index: usize, v: [f64; 6]) -> Self {
        LegSolution {
            leg_index,
            theta2: v[0],
            theta3: v[1],
            d4: v[2],
            theta5: v[3],
            theta6: v[4],
            theta7: v[5],
        }
    }
}

/// Constant parameters shared by every leg chain of one machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhConstants {
    pub base_center_height: f64,
    pub base_joint_radius: f64,
    pub platform_joint_radius: f64,
    pub grip_offset: f64,
    /// θ₁ per leg, degrees in `[0, 360)`.
    pub theta1: [f64; 6],
}

impl DhConstants {
    /// θ₁ is taken from the constructed base joints so that every chain
    /// starts exactly at its leg's universal joint.
    pub fn new(config: &MachineConfig, layout: &JointLayout) -> Self {
        DhConstants {
            base_center_height: config.base_center_height,
            base_joint_radius: config.base_joint_radius,
            platform_joint_radius: config.platform_joint_radius,
            grip_offset: config.grip_offset,
            theta1: layout.base_angles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegDhTable {
    /// 1-based leg index.
    pub leg_index: usize,
    pub rows: [DhRow; 8],
}

pub fn build_leg_table(leg_index: usize, solution: &LegSolution, constants: &DhConstants) -> LegDhTable {
    assert!((1..=6).contains(&leg_index), "leg index {leg_index} out of 1..=6");
    let c = constants;
    let s = solution;
    LegDhTable {
        leg_index,
        rows: [
            DhRow::new(0.0, 0.0, c.base_center_height, c.theta1[leg_index - 1]),
            DhRow::new(c.base_joint_radius, 90.0, 0.0, s.theta2),
            DhRow::new(0.0, 90.0, 0.0, s.theta3),
            DhRow::new(0.0, 90.0, 0.0, -90.0),
            DhRow::new(0.0, 0.0, s.d4, s.theta5),
            DhRow::new(0.0, 90.0, 0.0, s.theta6),
            DhRow::new(0.0, 90.0, 0.0, s.theta7),
            DhRow::new(c.platform_joint_radius, 0.0, c.grip_offset, 0.0),
        ],
    }
}

/// Product of the first `n` row transforms.
pub fn chain_prefix(table: &LegDhTable, n: usize) -> Transform {
    table.rows[..n]
        .iter()
        .fold(Transform::identity(), |acc, row| acc.then(&dh_transform(row)))
}

/// Frame {8} (grip center) expressed in frame {0}.
pub fn chain_pose(table: &LegDhTable) -> Transform {
    chain_prefix(table, 8)
}

/// Top of the actuator (origin of frame {5}) in frame {0}.
pub fn leg_joint_position(table: &LegDhTable) -> Vector3<f64> {
    chain_prefix(table, 5).translation()
}

/// Universal joint center (origin of frame {2}) in frame {0}.
pub fn leg_base_position(table: &LegDhTable) -> Vector3<f64> {
    chain_prefix(table, 2).translation()
}

/// Derivative of the grip-center position with respect to
/// (θ₂, θ₃, d₄, θ₅, θ₆, θ₇): mm per degree for the angles, mm per mm for d₄.
///
/// A revolute row turns about the z-axis of its own frame, so its column is
/// `zᵢ × (p − oᵢ)`; the prismatic offset of row 5 moves along `z₅`.
pub fn chain_jacobian(table: &LegDhTable) -> Matrix3x6<f64> {
    let mut frames = [crate::kinematics::Transform::identity(); 8];
    let mut acc = crate::kinematics::Transform::identity();
    for (i, row) in table.rows.iter().enumerate() {
        acc = acc.then(&dh_transform(row));
        frames[i] = acc;
    }
    let grip = frames[7].translation();
    let per_deg = std::f64::consts::PI / 180.0;
    let mut j = Matrix3x6::zeros();
    // rows 2, 3, 5, 6, 7 are revolute; row 5 also carries d₄
    for (col, row) in [(0, 1), (1, 2), (3, 4), (4, 5), (5, 6)] {
        let z = frames[row].matrix().fixed_view::<3, 1>(0, 2).into_owned();
        let o = frames[row].translation();
        j.set_column(col, &(z.cross(&(grip - o)) * per_deg));
    }
    j.set_column(2, &frames[4].matrix().fixed_view::<3, 1>(0, 2).into_owned());
    j
}
