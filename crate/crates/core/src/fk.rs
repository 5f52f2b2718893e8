//! Iterative forward kinematics over the leg DH chains.
//!
//! For a stored pose and its actuator lengths, each leg's joint variables
//! are found by scanning angle grids:
//!
//! * θ₂, θ₃ (universal joint) with d₄ fixed to the leg length, until the top
//!   of the actuator lands on the platform joint the pose demands;
//! * θ₅, θ₆, θ₇ (spherical joint), until the chain's grip center lands within
//!   `error_limit` of the target grip center.
//!
//! Every scan is a coarse grid over the angle bounds followed by a fine grid
//! around the best coarse point and then local refinements that halve the
//! step. Points are visited in ascending lexicographic order and the first
//! one meeting the stage tolerance is accepted, so a given input always
//! yields the same solution.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dh::{build_leg_table, chain_pose, chain_prefix, leg_joint_position, DhConstants, LegSolution};
use crate::error::{Error, Result};
use crate::geometry::{JointLayout, MachineConfig};
use crate::ik::{axis_samples, leg_vectors, platform_joints_world, WorkspaceRecord};
use crate::kinematics::{axis_rotation, combined_rotation, Axis, Pose, Rotation};
use crate::store::{nearest_by_lengths, LookupHit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBounds {
    pub theta2: (f64, f64),
    pub theta3: (f64, f64),
    pub theta5: (f64, f64),
    pub theta6: (f64, f64),
    pub theta7: (f64, f64),
}

impl AngleBounds {
    /// Envelopes observed on the Tiger 66.1 frame.
    pub fn tiger_observed() -> Self {
        AngleBounds {
            theta2: (-83.2, -38.0),
            theta3: (-118.8, -63.4),
            theta5: (90.0, 270.0),
            theta6: (92.0, 231.0),
            theta7: (-90.0, 90.0),
        }
    }

    pub fn padded(&self, pad: f64) -> Self {
        let p = |(lo, hi): (f64, f64)| (lo - pad, hi + pad);
        AngleBounds {
            theta2: p(self.theta2),
            theta3: p(self.theta3),
            theta5: p(self.theta5),
            theta6: p(self.theta6),
            theta7: p(self.theta7),
        }
    }

    pub fn contains(&self, s: &LegSolution) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo - 1e-9 && v <= hi + 1e-9;
        inside(s.theta2, self.theta2)
            && inside(s.theta3, self.theta3)
            && inside(s.theta5, self.theta5)
            && inside(s.theta6, self.theta6)
            && inside(s.theta7, self.theta7)
    }
}

impl Default for AngleBounds {
    fn default() -> Self {
        AngleBounds::tiger_observed().padded(20.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Grid step of the first scan over the full bounds, degrees.
    pub coarse_step: f64,
    /// Grid step of the scan around the best coarse point, degrees.
    pub fine_step: f64,
    /// Accepted grip-center error, mm.
    pub error_limit: f64,
    pub angle_bounds: AngleBounds,
    /// Scan levels allowed after the coarse one.
    pub max_refinements: u32,
    /// Accepted actuator-top error of the universal-joint stage, mm.
    pub joint_tolerance: f64,
    /// Start the universal-joint stage from [`seed_angles`] instead of a full grid.
    pub warm_start: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            coarse_step: 1.0,
            fine_step: 0.1,
            error_limit: 1.0,
            angle_bounds: AngleBounds::default(),
            max_refinements: 40,
            joint_tolerance: 1e-5,
            warm_start: false,
        }
    }
}

impl SearchParams {
    // written so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |check: &str, residual: f64| {
            Err(Error::Validation {
                check: format!("search_params:{check}"),
                residual,
            })
        };
        if !(self.fine_step > 0.0) {
            return bad("fine_step_positive", self.fine_step);
        }
        if !(self.fine_step <= self.coarse_step) {
            return bad("fine_not_above_coarse", self.fine_step - self.coarse_step);
        }
        if !(self.error_limit > 0.0) {
            return bad("error_limit_positive", self.error_limit);
        }
        if !(self.joint_tolerance > 0.0) {
            return bad("joint_tolerance_positive", self.joint_tolerance);
        }
        Ok(())
    }
}

/// Outcome of one leg's search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegFit {
    pub solution: LegSolution,
    /// Grip-center distance from the target, evaluated on the full chain, mm.
    pub residual_mm: f64,
    /// Rotation between chain frame {8} and the platform frame at this leg's
    /// joint, degrees. Reported only.
    pub orientation_deg: f64,
    /// Actuator-top distance from the target platform joint, mm.
    pub joint_error_mm: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LegOutcome {
    Solved(LegFit),
    /// Best attempt, or `None` when the leg length is outside the actuator limits.
    Unsolved(Option<LegFit>),
}

impl LegOutcome {
    pub fn is_solved(&self) -> bool {
        matches!(self, LegOutcome::Solved(_))
    }

    pub fn fit(&self) -> Option<&LegFit> {
        match self {
            LegOutcome::Solved(f) => Some(f),
            LegOutcome::Unsolved(f) => f.as_ref(),
        }
    }

    pub fn solution(&self) -> Option<&LegSolution> {
        match self {
            LegOutcome::Solved(f) => Some(&f.solution),
            LegOutcome::Unsolved(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkResult {
    pub pose_id: u64,
    pub legs: [LegOutcome; 6],
    /// Objective evaluations over all six legs.
    pub iterations: u64,
}

impl FkResult {
    pub fn is_solved(&self) -> bool {
        self.legs.iter().all(LegOutcome::is_solved)
    }

    pub fn solutions(&self) -> Option<[LegSolution; 6]> {
        if !self.is_solved() {
            return None;
        }
        Some(std::array::from_fn(|i| *self.legs[i].solution().expect("solved")))
    }

    pub fn residuals(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.legs[i].fit().map_or(f64::NAN, |f| f.residual_mm))
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }
}

/// Closed-form universal-joint angles pointing the leg at its platform joint.
pub fn seed_angles(
    target: &Pose,
    leg_index: usize,
    layout: &JointLayout,
    config: &MachineConfig,
) -> Result<(f64, f64)> {
    let v = leg_vectors(target, layout, config)[leg_index - 1];
    let length = v.norm();
    if length < 1e-9 {
        return Err(Error::DegenerateLeg { leg: leg_index, length });
    }
    Ok(universal_angles(&(v / length), layout.base_angles[leg_index - 1]))
}

/// Leg direction in frame {1} is `(cos θ₂ sin θ₃, cos θ₃, sin θ₂ sin θ₃)`; the
/// branch with `sin θ₃ ≤ 0` is returned.
pub fn universal_angles(direction: &Vector3<f64>, theta1_deg: f64) -> (f64, f64) {
    let (s1, c1) = theta1_deg.to_radians().sin_cos();
    let ux = c1 * direction.x + s1 * direction.y;
    let uy = -s1 * direction.x + c1 * direction.y;
    let uz = direction.z;
    let theta3 = -uy.clamp(-1.0, 1.0).acos();
    let theta2 = (-uz).atan2(-ux);
    (theta2.to_degrees(), theta3.to_degrees())
}

struct LevelResult<const N: usize> {
    best: Option<([f64; N], f64)>,
    hit: bool,
    evaluations: u64,
}

struct SearchOutcome<const N: usize> {
    best: Option<([f64; N], f64)>,
    met: bool,
    evaluations: u64,
}

fn window(center: f64, half: f64, step: f64, bounds: (f64, f64)) -> Vec<f64> {
    let k = (half / step).round() as i64;
    (-k..=k)
        .map(|i| center + i as f64 * step)
        .filter(|v| *v >= bounds.0 - 1e-12 && *v <= bounds.1 + 1e-12)
        .collect()
}

/// Coarse grid, then a fine window, then halving refinements.
fn grid_search<const N: usize>(
    bounds: &[(f64, f64); N],
    params: &SearchParams,
    start: Option<[f64; N]>,
    mut scan_level: impl FnMut(&[Vec<f64>; N]) -> LevelResult<N>,
) -> SearchOutcome<N> {
    let mut out = SearchOutcome {
        best: None,
        met: false,
        evaluations: 0,
    };
    let absorb = |out: &mut SearchOutcome<N>, level: LevelResult<N>| {
        out.evaluations += level.evaluations;
        if let Some((p, e)) = level.best {
            if level.hit || out.best.is_none_or(|(_, b)| e < b) {
                out.best = Some((p, e));
            }
        }
        out.met = level.hit;
        level.hit
    };

    let (mut center, mut step, mut half, refinements_left) = match start {
        None => {
            let axes = std::array::from_fn(|k| axis_samples(bounds[k].0, bounds[k].1, params.coarse_step));
            if absorb(&mut out, scan_level(&axes)) {
                return out;
            }
            match out.best {
                Some((p, _)) => (p, params.fine_step, params.coarse_step, params.max_refinements),
                None => return out,
            }
        }
        Some(seed) => (seed, params.fine_step, params.coarse_step, params.max_refinements + 1),
    };

    for _ in 0..refinements_left {
        let axes = std::array::from_fn(|k| window(center[k], half, step, bounds[k]));
        if absorb(&mut out, scan_level(&axes)) {
            return out;
        }
        if let Some((p, _)) = out.best {
            center = p;
        }
        half = step;
        step *= 0.5;
    }
    out
}

/// Per-leg quantities fixed for the duration of one search.
struct LegProblem {
    leg_index: usize,
    d4: f64,
    constants: DhConstants,
    target_joint: Vector3<f64>,
    target_grip: Vector3<f64>,
    target_frame: Rotation,
}

impl LegProblem {
    fn table(&self, v: [f64; 6]) -> crate::dh::LegDhTable {
        build_leg_table(self.leg_index, &LegSolution::with_variables(self.leg_index, v), &self.constants)
    }

    fn universal_stage(&self, params: &SearchParams, seed: Option<[f64; 2]>) -> SearchOutcome<2> {
        let b = &params.angle_bounds;
        let accept = params.joint_tolerance;
        grid_search(&[b.theta2, b.theta3], params, seed, |axes| {
            let mut level = LevelResult {
                best: None,
                hit: false,
                evaluations: 0,
            };
            for &t2 in &axes[0] {
                for &t3 in &axes[1] {
                    let p = leg_joint_position(&self.table([t2, t3, self.d4, 0.0, 0.0, 0.0]));
                    let err = (p - self.target_joint).norm();
                    level.evaluations += 1;
                    if level.best.is_none_or(|(_, e)| err < e) {
                        level.best = Some(([t2, t3], err));
                    }
                    if err <= accept {
                        level.best = Some(([t2, t3], err));
                        level.hit = true;
                        return level;
                    }
                }
            }
            level
        })
    }

    /// Grip error over (θ₅, θ₆, θ₇) with θ₂, θ₃, d₄ fixed.
    ///
    /// With frame {4} fixed, the grip center is
    /// `O₅ + R₄·Rz(θ₅)·N(θ₆)·(c·cos θ₇, c·sin θ₇, d)` where
    /// `N(θ₆) = Rx(90°)·Rz(θ₆)·Rx(90°)`. The error is evaluated in the
    /// rotated frame `(R₄·Rz(θ₅))ᵀ`, which leaves distances unchanged.
    fn spherical_stage(&self, params: &SearchParams, universal: [f64; 2]) -> SearchOutcome<3> {
        let b = &params.angle_bounds;
        let accept = params.error_limit;
        let frame4 = chain_prefix(&self.table([universal[0], universal[1], self.d4, 0.0, 0.0, 0.0]), 5);
        let r4: Matrix3<f64> = *frame4.rotation().matrix();
        let to_target = self.target_grip - frame4.translation();
        let c = self.constants.platform_joint_radius;
        let d = self.constants.grip_offset;

        grid_search(&[b.theta5, b.theta6, b.theta7], params, None, |axes| {
            let mut level = LevelResult {
                best: None,
                hit: false,
                evaluations: 0,
            };
            let trig6: Vec<(f64, f64)> = axes[1].iter().map(|t| t.to_radians().sin_cos()).collect();
            let arm7: Vec<(f64, f64)> = axes[2]
                .iter()
                .map(|t| {
                    let (s, co) = t.to_radians().sin_cos();
                    (c * co, c * s)
                })
                .collect();
            let accept_sq = accept * accept;
            let mut best_sq = f64::INFINITY;
            let mut best = [0.0; 3];
            for &t5 in &axes[0] {
                let rz5 = axis_rotation(Axis::Z, t5);
                let q = (r4 * rz5.matrix()).transpose() * to_target;
                for (j6, &(s6, c6)) in trig6.iter().enumerate() {
                    for (j7, &(x, y)) in arm7.iter().enumerate() {
                        let e0 = c6 * x + s6 * d - q.x;
                        let e1 = -y - q.y;
                        let e2 = s6 * x - c6 * d - q.z;
                        let err_sq = e0 * e0 + e1 * e1 + e2 * e2;
                        level.evaluations += 1;
                        if err_sq < best_sq {
                            best_sq = err_sq;
                            best = [t5, axes[1][j6], axes[2][j7]];
                        }
                        if err_sq <= accept_sq {
                            level.best = Some(([t5, axes[1][j6], axes[2][j7]], err_sq.sqrt()));
                            level.hit = true;
                            return level;
                        }
                    }
                }
            }
            if best_sq.is_finite() {
                level.best = Some((best, best_sq.sqrt()));
            }
            level
        })
    }

    fn fit(&self, v: [f64; 6], evaluations: u64) -> LegFit {
        let table = self.table(v);
        let grip = chain_pose(&table);
        LegFit {
            solution: LegSolution::with_variables(self.leg_index, v),
            residual_mm: (grip.translation() - self.target_grip).norm(),
            orientation_deg: grip.rotation().angle_to(&self.target_frame),
            joint_error_mm: (leg_joint_position(&table) - self.target_joint).norm(),
            evaluations,
        }
    }
}

/// Searches the joint variables of one leg chain reaching `target`'s grip
/// center with the given actuator length.
pub fn recover_leg(
    target: &Pose,
    leg_index: usize,
    leg_length: f64,
    layout: &JointLayout,
    config: &MachineConfig,
    params: &SearchParams,
) -> LegOutcome {
    assert!((1..=6).contains(&leg_index), "leg index {leg_index} out of 1..=6");
    if !config.length_in_limits(leg_length) {
        return LegOutcome::Unsolved(None);
    }
    let leg = leg_index - 1;
    let rot = combined_rotation(target);
    let problem = LegProblem {
        leg_index,
        d4: leg_length,
        constants: DhConstants::new(config, layout),
        target_joint: platform_joints_world(target, layout, config)[leg],
        target_grip: target.position(),
        target_frame: rot.mul(&axis_rotation(Axis::Z, layout.platform_angle(leg) + 180.0)),
    };

    let seed = if params.warm_start {
        seed_angles(target, leg_index, layout, config)
            .ok()
            .map(|(a, b)| [a, b])
    } else {
        None
    };
    let universal = problem.universal_stage(params, seed);
    let Some((angles_u, _)) = universal.best else {
        return LegOutcome::Unsolved(None);
    };
    let spherical = problem.spherical_stage(params, angles_u);
    let evaluations = universal.evaluations + spherical.evaluations;
    let Some((angles_s, _)) = spherical.best else {
        return LegOutcome::Unsolved(None);
    };
    let fit = problem.fit(
        [angles_u[0], angles_u[1], leg_length, angles_s[0], angles_s[1], angles_s[2]],
        evaluations,
    );
    if spherical.met && fit.residual_mm <= params.error_limit {
        LegOutcome::Solved(fit)
    } else {
        LegOutcome::Unsolved(Some(fit))
    }
}

/// Runs [`recover_leg`] for all six legs of a stored pose.
pub fn recover_pose(
    record: &WorkspaceRecord,
    layout: &JointLayout,
    config: &MachineConfig,
    params: &SearchParams,
) -> FkResult {
    let legs: [LegOutcome; 6] = std::array::from_fn(|leg| {
        recover_leg(&record.pose, leg + 1, record.leg_lengths[leg], layout, config, params)
    });
    let iterations = legs.iter().filter_map(|l| l.fit()).map(|f| f.evaluations).sum();
    FkResult {
        pose_id: record.pose_id,
        legs,
        iterations,
    }
}

/// Grip-center position each leg chain predicts.
pub fn chain_grip_positions(solutions: &[LegSolution; 6], constants: &DhConstants) -> [Vector3<f64>; 6] {
    std::array::from_fn(|i| {
        let s = &solutions[i];
        chain_pose(&build_leg_table(s.leg_index, s, constants)).translation()
    })
}

/// Platform pose implied by the six actuator-top positions of the leg
/// chains: the rigid motion best mapping the platform joints onto them.
pub fn implied_pose(
    solutions: &[LegSolution; 6],
    layout: &JointLayout,
    config: &MachineConfig,
) -> Pose {
    let constants = DhConstants::new(config, layout);
    let world: [Vector3<f64>; 6] = std::array::from_fn(|i| {
        let s = &solutions[i];
        leg_joint_position(&build_leg_table(s.leg_index, s, &constants))
    });
    let local: [Vector3<f64>; 6] = std::array::from_fn(|i| *layout.platform_joint(solutions[i].leg_index - 1));

    let mean = |pts: &[Vector3<f64>; 6]| pts.iter().fold(Vector3::zeros(), |a, p| a + p) / 6.0;
    let (cw, cl) = (mean(&world), mean(&local));
    let mut cov = Matrix3::zeros();
    for (w, l) in world.iter().zip(local.iter()) {
        cov += (w - cw) * (l - cl).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut fix = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rot = u * fix * vt;
    let center = cw - rot * cl;
    let grip = center + rot.column(2) * config.grip_offset;

    let beta = (-rot[(2, 0)]).clamp(-1.0, 1.0).asin();
    let alpha = rot[(2, 1)].atan2(rot[(2, 2)]);
    let gamma = rot[(1, 0)].atan2(rot[(0, 0)]);
    Pose::new(
        grip.x,
        grip.y,
        grip.z,
        alpha.to_degrees(),
        beta.to_degrees(),
        gamma.to_degrees(),
    )
}

/// The `k` stored poses whose leg lengths are closest to `lengths`.
pub fn fk_lookup(lengths: &[f64; 6], records: &[WorkspaceRecord], k: usize) -> Result<Vec<LookupHit>> {
    nearest_by_lengths(records, lengths, k)
}
