//! Machine description and joint layout construction.
//!
//! Both plates are semi-symmetric hexagons: three joint pairs sit
//! symmetrically about pair axes 120° apart. The pair axes and the order of
//! the base joints come from the construction angles `theta1_values`; the
//! angular half-separation of each pair comes from the side lengths via
//! `asin(side / 2R)`. The platform pattern is the same construction rotated
//! by `platform_start_angle`, and each base joint is paired with the platform
//! joint nearest to it in angle.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinematics::{normalize_angle, normalize_angle_positive, Pose};

/// Allowed deviation of `3·(A_small + A_large)` from 360°.
pub const CLOSURE_TOLERANCE_DEG: f64 = 0.5;
/// Allowed deviation between a construction angle and the constructed base joint.
pub const THETA1_TOLERANCE_DEG: f64 = 0.5;
pub const ON_CIRCLE_TOLERANCE_MM: f64 = 1e-9;
pub const CHORD_TOLERANCE_MM: f64 = 1e-6;

const BUNDLED_TIGER: &str = include_str!("../data/tiger66_1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    pub base_joint_radius: f64,
    pub base_small_side: f64,
    pub base_large_side: f64,
    pub platform_joint_radius: f64,
    pub platform_small_side: f64,
    pub platform_large_side: f64,
    pub actuator_min_length: f64,
    pub actuator_stroke: f64,
    /// World origin to base center, along z.
    pub base_center_height: f64,
    /// Platform center to grip center, along the platform z-axis.
    pub grip_offset: f64,
    /// Base center to platform center in the home pose.
    pub home_height: f64,
    /// Angular position of each leg's base joint, degrees. Fixed by construction.
    pub theta1_values: [f64; 6],
    pub platform_start_angle: f64,
}

impl MachineConfig {
    /// The bundled Tiger 66.1 test frame.
    pub fn tiger() -> Self {
        serde_json::from_str(BUNDLED_TIGER).expect("bundled tiger66_1.json is valid")
    }

    pub fn actuator_max_length(&self) -> f64 {
        self.actuator_min_length + self.actuator_stroke
    }

    pub fn length_in_limits(&self, length: f64) -> bool {
        length >= self.actuator_min_length && length <= self.actuator_max_length()
    }

    /// World-frame height of the grip center in the home pose.
    pub fn home_grip_height(&self) -> f64 {
        self.base_center_height + self.home_height + self.grip_offset
    }

    pub fn home_pose(&self) -> Pose {
        Pose::new(0.0, 0.0, self.home_grip_height(), 0.0, 0.0, 0.0)
    }

    /// Hex-encoded SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_machine_config(text: &str, origin: &Path) -> Result<MachineConfig> {
    let config: MachineConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let report = validate_geometry(&config);
    if let Some(check) = report.first_failure() {
        return Err(Error::Validation {
            check: check.name.clone(),
            residual: check.residual,
        });
    }
    Ok(config)
}

pub fn load_machine_config(path: impl AsRef<Path>) -> Result<MachineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_machine_config(&text, path)
}

/// Joint positions of both plates plus the leg pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLayout {
    /// Base joints in the base frame (z = 0), ordered by leg.
    pub base_joints: [Vector3<f64>; 6],
    /// Platform joints in the platform frame (z = 0), in pattern order.
    pub platform_joints: [Vector3<f64>; 6],
    /// `pairing[leg]` is the platform joint index driven by that leg.
    pub pairing: [usize; 6],
    /// Angular position of each base joint in `[0, 360)`, degrees.
    pub base_angles: [f64; 6],
    /// Angular position of each platform joint in `[0, 360)`, degrees.
    pub platform_angles: [f64; 6],
}

impl JointLayout {
    pub fn base_joint(&self, leg: usize) -> &Vector3<f64> {
        &self.base_joints[leg]
    }

    pub fn platform_joint(&self, leg: usize) -> &Vector3<f64> {
        &self.platform_joints[self.pairing[leg]]
    }

    pub fn platform_angle(&self, leg: usize) -> f64 {
        self.platform_angles[self.pairing[leg]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryCheck {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeometryReport {
    pub checks: Vec<GeometryCheck>,
}

impl GeometryReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GeometryCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn first_failure(&self) -> Option<&GeometryCheck> {
        self.failures().next()
    }

    pub fn get(&self, name: &str) -> Option<&GeometryCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, residual: f64) {
        self.checks.push(GeometryCheck {
            name: name.into(),
            passed,
            residual,
        });
    }
}

/// Central angle in degrees subtended by a chord, `2·asin(chord / 2R)`.
pub fn chord_angle(chord: f64, radius: f64) -> f64 {
    2.0 * (chord / (2.0 * radius)).asin().to_degrees()
}

pub fn chord_length(angle_deg: f64, radius: f64) -> f64 {
    2.0 * radius * (angle_deg.to_radians() * 0.5).sin()
}

/// `3·(A_small + A_large)` in degrees.
pub fn closure_sum(small: f64, large: f64, radius: f64) -> f64 {
    3.0 * (chord_angle(small, radius) + chord_angle(large, radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairSide {
    Small,
    Large,
}

/// Pair axes and the side lying inside each pair, read off the construction angles.
struct PairPattern {
    axes: [f64; 3],
    /// +1 when the second joint of a pair lies counter-clockwise of the first.
    orientation: [f64; 3],
    inner: PairSide,
}

fn pair_pattern(config: &MachineConfig) -> PairPattern {
    let t = config.theta1_values;
    let mut axes = [0.0; 3];
    let mut orientation = [1.0; 3];
    let mut separation = 0.0;
    for k in 0..3 {
        let delta = normalize_angle(t[2 * k + 1] - t[2 * k]);
        axes[k] = normalize_angle_positive(t[2 * k] + delta * 0.5);
        orientation[k] = if delta >= 0.0 { 1.0 } else { -1.0 };
        separation += delta.abs() / 3.0;
    }
    let r = config.base_joint_radius;
    let small = chord_angle(config.base_small_side, r);
    let large = chord_angle(config.base_large_side, r);
    let inner = if (separation - small).abs() <= (separation - large).abs() {
        PairSide::Small
    } else {
        PairSide::Large
    };
    PairPattern {
        axes,
        orientation,
        inner,
    }
}

fn plate_angles(pattern: &PairPattern, inner_angle: f64, offset: f64) -> [f64; 6] {
    let mut out = [0.0; 6];
    for k in 0..3 {
        let half = 0.5 * inner_angle * pattern.orientation[k];
        out[2 * k] = normalize_angle_positive(pattern.axes[k] + offset - half);
        out[2 * k + 1] = normalize_angle_positive(pattern.axes[k] + offset + half);
    }
    out
}

fn on_circle(angle_deg: f64, radius: f64) -> Vector3<f64> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    Vector3::new(radius * c, radius * s, 0.0)
}

fn nearest_pairing(base: &[f64; 6], platform: &[f64; 6]) -> Option<[usize; 6]> {
    let mut pairing = [0usize; 6];
    for (leg, b) in base.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (j, p) in platform.iter().enumerate() {
            let gap = normalize_angle(p - b).abs();
            if gap < best.0 {
                best = (gap, j);
            }
        }
        pairing[leg] = best.1;
    }
    let mut seen = [false; 6];
    for &j in &pairing {
        if seen[j] {
            return None;
        }
        seen[j] = true;
    }
    Some(pairing)
}

fn construct(config: &MachineConfig) -> std::result::Result<JointLayout, String> {
    let pattern = pair_pattern(config);
    let (rb, rp) = (config.base_joint_radius, config.platform_joint_radius);
    let (base_inner, platform_inner) = match pattern.inner {
        PairSide::Small => (
            chord_angle(config.base_small_side, rb),
            chord_angle(config.platform_small_side, rp),
        ),
        PairSide::Large => (
            chord_angle(config.base_large_side, rb),
            chord_angle(config.platform_large_side, rp),
        ),
    };
    let base_angles = plate_angles(&pattern, base_inner, 0.0);
    let platform_angles = plate_angles(&pattern, platform_inner, config.platform_start_angle);
    let pairing = nearest_pairing(&base_angles, &platform_angles)
        .ok_or_else(|| "nearest-angle leg pairing is not one-to-one".to_string())?;
    Ok(JointLayout {
        base_joints: base_angles.map(|a| on_circle(a, rb)),
        platform_joints: platform_angles.map(|a| on_circle(a, rp)),
        pairing,
        base_angles,
        platform_angles,
    })
}

fn check_plate(
    report: &mut GeometryReport,
    plate: &str,
    joints: &[Vector3<f64>; 6],
    radius: f64,
    small: f64,
    large: f64,
    inner: PairSide,
) {
    let radial = joints
        .iter()
        .map(|j| (j.norm() - radius).abs())
        .fold(0.0, f64::max);
    report.push(format!("{plate}:on_circle"), radial <= ON_CIRCLE_TOLERANCE_MM, radial);

    let (inner_side, outer_side) = match inner {
        PairSide::Small => (small, large),
        PairSide::Large => (large, small),
    };
    // Between-pair chords absorb the closure residual, so they get the
    // chord-length equivalent of the closure tolerance shared over three gaps.
    let outer_tol = radius * (CLOSURE_TOLERANCE_DEG / 3.0).to_radians() + CHORD_TOLERANCE_MM;
    let mut inner_err: f64 = 0.0;
    let mut outer_err: f64 = 0.0;
    for k in 0..6 {
        let chord = (joints[(k + 1) % 6] - joints[k]).norm();
        if k % 2 == 0 {
            inner_err = inner_err.max((chord - inner_side).abs());
        } else {
            outer_err = outer_err.max((chord - outer_side).abs());
        }
    }
    report.push(
        format!("{plate}:pair_chord"),
        inner_err <= CHORD_TOLERANCE_MM,
        inner_err,
    );
    report.push(format!("{plate}:gap_chord"), outer_err <= outer_tol, outer_err);
}

/// Runs every configuration and layout invariant. Failures are data.
pub fn validate_geometry(config: &MachineConfig) -> GeometryReport {
    let mut report = GeometryReport::default();
    let lengths = [
        ("base_joint_radius", config.base_joint_radius),
        ("base_small_side", config.base_small_side),
        ("base_large_side", config.base_large_side),
        ("platform_joint_radius", config.platform_joint_radius),
        ("platform_small_side", config.platform_small_side),
        ("platform_large_side", config.platform_large_side),
        ("actuator_min_length", config.actuator_min_length),
        ("actuator_stroke", config.actuator_stroke),
        ("base_center_height", config.base_center_height),
        ("grip_offset", config.grip_offset),
        ("home_height", config.home_height),
    ];
    for (name, value) in lengths {
        report.push(format!("positive:{name}"), value.is_finite() && value > 0.0, value);
    }
    let angles_finite = config.theta1_values.iter().all(|a| a.is_finite())
        && config.platform_start_angle.is_finite();
    report.push("finite:angles", angles_finite, 0.0);
    if !report.is_valid() {
        return report;
    }

    let plates = [
        ("base", config.base_joint_radius, config.base_small_side, config.base_large_side),
        (
            "platform",
            config.platform_joint_radius,
            config.platform_small_side,
            config.platform_large_side,
        ),
    ];
    for (plate, r, small, large) in plates {
        report.push(format!("{plate}:small_chord_fits"), small < 2.0 * r, small - 2.0 * r);
        report.push(format!("{plate}:large_chord_fits"), large < 2.0 * r, large - 2.0 * r);
    }
    if !report.is_valid() {
        return report;
    }
    for (plate, r, small, large) in plates {
        let residual = (closure_sum(small, large, r) - 360.0).abs();
        report.push(format!("{plate}:closure"), residual <= CLOSURE_TOLERANCE_DEG, residual);
    }
    if !report.is_valid() {
        return report;
    }

    let layout = match construct(config) {
        Ok(layout) => layout,
        Err(_) => {
            report.push("pairing:one_to_one", false, 0.0);
            return report;
        }
    };
    report.push("pairing:one_to_one", true, 0.0);

    let theta1_err = config
        .theta1_values
        .iter()
        .zip(layout.base_angles.iter())
        .map(|(t, b)| normalize_angle(t - b).abs())
        .fold(0.0, f64::max);
    report.push("base:theta1_agreement", theta1_err <= THETA1_TOLERANCE_DEG, theta1_err);

    let inner = pair_pattern(config).inner;
    check_plate(
        &mut report,
        "base",
        &layout.base_joints,
        config.base_joint_radius,
        config.base_small_side,
        config.base_large_side,
        inner,
    );
    check_plate(
        &mut report,
        "platform",
        &layout.platform_joints,
        config.platform_joint_radius,
        config.platform_small_side,
        config.platform_large_side,
        inner,
    );
    report
}

pub fn build_joint_layout(config: &MachineConfig) -> Result<JointLayout> {
    let report = validate_geometry(config);
    if let Some(failed) = report.first_failure() {
        let closure_or_pattern = failed.name.ends_with(":closure")
            || failed.name.starts_with("pairing:")
            || failed.name.ends_with("_chord");
        return Err(if closure_or_pattern {
            Error::GeometryInconsistent {
                detail: format!("{} (residual {:.6})", failed.name, failed.residual),
            }
        } else {
            Error::Validation {
                check: failed.name.clone(),
                residual: failed.residual,
            }
        });
    }
    construct(config).map_err(|detail| Error::GeometryInconsistent { detail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn regular(radius: f64) -> MachineConfig {
        MachineConfig {
            base_joint_radius: radius,
            base_small_side: radius,
            base_large_side: radius,
            platform_joint_radius: radius * 0.5,
            platform_small_side: radius * 0.5,
            platform_large_side: radius * 0.5,
            actuator_min_length: 100.0,
            actuator_stroke: 50.0,
            base_center_height: 10.0,
            grip_offset: 20.0,
            home_height: 120.0,
            theta1_values: [0.0, 60.0, 120.0, 180.0, 240.0, 300.0],
            platform_start_angle: 10.0,
        }
    }

    #[test]
    fn tiger_chord_angles_and_closure() {
        // asin oracle, evaluated independently of the layout code
        let half_small = (377.9f64 / (2.0 * 477.4)).asin().to_degrees();
        let half_large = (570.4f64 / (2.0 * 477.4)).asin().to_degrees();
        assert_abs_diff_eq!(half_small, 23.32, epsilon = 0.005);
        assert_abs_diff_eq!(half_large, 36.68, epsilon = 0.005);
        let cfg = MachineConfig::tiger();
        let sum = closure_sum(cfg.base_small_side, cfg.base_large_side, cfg.base_joint_radius);
        assert_abs_diff_eq!(sum, 6.0 * (half_small + half_large), epsilon = 1e-12);
        assert_abs_diff_eq!(sum, 360.0, epsilon = 0.1);
    }

    #[test]
    fn tiger_platform_closure_within_tolerance() {
        let small = 2.0 * (178.8f64 / 450.2).asin().to_degrees();
        let large = 2.0 * (268.7f64 / 450.2).asin().to_degrees();
        assert_abs_diff_eq!(small, 46.80, epsilon = 0.01);
        assert_abs_diff_eq!(large, 73.29, epsilon = 0.01);
        let cfg = MachineConfig::tiger();
        let sum = closure_sum(
            cfg.platform_small_side,
            cfg.platform_large_side,
            cfg.platform_joint_radius,
        );
        assert_abs_diff_eq!(sum, 3.0 * (small + large), epsilon = 1e-12);
        assert_abs_diff_eq!(sum, 360.27, epsilon = 0.01);
        let report = validate_geometry(&cfg);
        assert!(report.get("platform:closure").unwrap().passed);
    }

    #[test]
    fn tiger_validates() {
        let report = validate_geometry(&MachineConfig::tiger());
        assert!(report.is_valid(), "{:?}", report.failures().collect::<Vec<_>>());
        assert!(build_joint_layout(&MachineConfig::tiger()).is_ok());
    }

    #[test]
    fn tiger_bundled_values() {
        let cfg = MachineConfig::tiger();
        assert_eq!(cfg.actuator_stroke, 203.0);
        assert_eq!(cfg.base_joint_radius, 477.4);
        assert_eq!(cfg.home_height, 495.46);
        assert_eq!(cfg.theta1_values[5], 366.6);
    }

    #[test]
    fn widened_large_side_breaks_closure() {
        let mut cfg = MachineConfig::tiger();
        cfg.base_large_side = 580.4;
        let expected = 6.0 * ((377.9f64 / 954.8).asin() + (580.4f64 / 954.8).asin()).to_degrees();
        let report = validate_geometry(&cfg);
        let check = report.get("base:closure").unwrap();
        assert!(!check.passed);
        assert_abs_diff_eq!(check.residual, expected - 360.0, epsilon = 1e-9);
        assert!(matches!(
            build_joint_layout(&cfg),
            Err(Error::GeometryInconsistent { .. })
        ));
    }

    #[test]
    fn zero_radius_fails_positivity() {
        let mut cfg = MachineConfig::tiger();
        cfg.base_joint_radius = 0.0;
        let report = validate_geometry(&cfg);
        assert!(!report.get("positive:base_joint_radius").unwrap().passed);
        assert!(matches!(build_joint_layout(&cfg), Err(Error::Validation { .. })));
    }

    #[test]
    fn chord_longer_than_diameter_is_rejected() {
        let mut cfg = MachineConfig::tiger();
        cfg.base_small_side = 1000.0;
        let report = validate_geometry(&cfg);
        assert!(!report.get("base:small_chord_fits").unwrap().passed);
    }

    #[test]
    fn regular_hexagon_has_sixty_degree_spacing() {
        let layout = build_joint_layout(&regular(300.0)).unwrap();
        for k in 0..6 {
            let gap = normalize_angle_positive(layout.base_angles[(k + 1) % 6] - layout.base_angles[k]);
            assert_abs_diff_eq!(gap, 60.0, epsilon = 1e-9);
            let chord = (layout.base_joints[(k + 1) % 6] - layout.base_joints[k]).norm();
            assert_abs_diff_eq!(chord, 300.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn tiger_layout_places_joints_on_circles() {
        let cfg = MachineConfig::tiger();
        let layout = build_joint_layout(&cfg).unwrap();
        for j in &layout.base_joints {
            assert_abs_diff_eq!(j.norm(), cfg.base_joint_radius, epsilon = 1e-9);
            assert_eq!(j.z, 0.0);
        }
        for j in &layout.platform_joints {
            assert_abs_diff_eq!(j.norm(), cfg.platform_joint_radius, epsilon = 1e-9);
        }
        // leg 6 base joint sits near the normalized 6.6°, not 366.6°
        assert_abs_diff_eq!(layout.base_angles[5], 6.6, epsilon = THETA1_TOLERANCE_DEG);
        for (t, b) in cfg.theta1_values.iter().zip(layout.base_angles) {
            assert!(normalize_angle(t - b).abs() < 0.1);
        }
    }

    #[test]
    fn tiger_pairing_is_a_permutation() {
        let layout = build_joint_layout(&MachineConfig::tiger()).unwrap();
        let mut sorted = layout.pairing;
        sorted.sort_unstable();
        assert_eq!(sorted, [0, 1, 2, 3, 4, 5]);
        for leg in 0..6 {
            let gap = normalize_angle(layout.platform_angle(leg) - layout.base_angles[leg]).abs();
            assert!(gap < 30.0, "leg {leg} gap {gap}");
        }
    }

    #[test]
    fn layout_is_deterministic() {
        let cfg = MachineConfig::tiger();
        assert_eq!(build_joint_layout(&cfg).unwrap(), build_joint_layout(&cfg).unwrap());
    }

    #[test]
    fn missing_field_names_the_field() {
        let mut value: serde_json::Value = serde_json::from_str(BUNDLED_TIGER).unwrap();
        value.as_object_mut().unwrap().remove("grip_offset");
        let err = parse_machine_config(&value.to_string(), Path::new("x.json")).unwrap_err();
        match err {
            Error::Parse { message, .. } => assert!(message.contains("grip_offset"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let mut value: serde_json::Value = serde_json::from_str(BUNDLED_TIGER).unwrap();
        value
            .as_object_mut()
            .unwrap()
            .insert("extra".into(), serde_json::json!(1.0));
        assert!(matches!(
            parse_machine_config(&value.to_string(), Path::new("x.json")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn impossible_chord_in_file_is_a_validation_error() {
        let mut value: serde_json::Value = serde_json::from_str(BUNDLED_TIGER).unwrap();
        value["base_small_side"] = serde_json::json!(1000.0);
        match parse_machine_config(&value.to_string(), Path::new("x.json")) {
            Err(Error::Validation { check, .. }) => assert_eq!(check, "base:small_chord_fits"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = MachineConfig::tiger();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.grip_offset += 1.0;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }
}
