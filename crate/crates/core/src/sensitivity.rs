//! Grip-center deviation caused by tolerances on the leg joint variables.
//!
//! A band of magnitude `t` shifts each joint angle by up to ±t degrees and
//! the actuator length by up to ±t mm. Two direction families are swept:
//!
//! * corners: 64 sign patterns over (θ₂, θ₃, d₄, θ₅, θ₆, θ₇), the same
//!   pattern on all six legs;
//! * random: components drawn uniformly from [−1, 1], independently per leg,
//!   from a seeded generator.
//!
//! The perturbed grip center is the centroid of the six legs' chain grip
//! positions. [`GripAggregate::WorstLeg`] instead reports the single leg
//! chain whose grip prediction moved furthest.

use std::fmt;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dh::{build_leg_table, chain_pose, DhConstants, LegSolution};
use crate::error::{Error, Result};
use crate::ik::WorkspaceRecord;
use crate::kinematics::Pose;

pub const CORNER_COUNT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ToleranceBand(f64);

impl ToleranceBand {
    pub fn new(magnitude: f64) -> Result<Self> {
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::Validation {
                check: "tolerance_band:non_negative".into(),
                residual: magnitude,
            });
        }
        Ok(ToleranceBand(magnitude))
    }

    pub fn magnitude(&self) -> f64 {
        self.0
    }
}

impl fmt::Display for ToleranceBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GripAggregate {
    #[default]
    Centroid,
    WorstLeg,
}

impl fmt::Display for GripAggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GripAggregate::Centroid => "centroid",
            GripAggregate::WorstLeg => "worst-leg",
        })
    }
}

impl std::str::FromStr for GripAggregate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "centroid" => Ok(GripAggregate::Centroid),
            "worst-leg" => Ok(GripAggregate::WorstLeg),
            other => Err(format!("unknown aggregate `{other}` (expected centroid or worst-leg)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    Corner(usize),
    Random(usize),
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleKind::Corner(i) => write!(f, "corner:{i}"),
            SampleKind::Random(i) => write!(f, "random:{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRecord {
    pub pose_id: u64,
    pub dev_x: f64,
    pub dev_y: f64,
    pub dev_z: f64,
    pub dev_dist: f64,
    pub band: ToleranceBand,
    pub sample_kind: SampleKind,
}

impl DeviationRecord {
    fn component(&self, axis: usize) -> f64 {
        [self.dev_x, self.dev_y, self.dev_z][axis]
    }
}

/// Shifts every variable by `band · direction[k]`.
pub fn perturb(solution: &LegSolution, band: ToleranceBand, direction: &[f64; 6]) -> LegSolution {
    debug_assert!(direction.iter().all(|d| d.abs() <= 1.0));
    let v = solution.variables();
    LegSolution::with_variables(solution.leg_index, std::array::from_fn(|k| v[k] + band.0 * direction[k]))
}

/// Centroid of the six chain grip positions.
pub fn grip_centroid(solutions: &[LegSolution; 6], constants: &DhConstants) -> Vector3<f64> {
    solutions
        .iter()
        .map(|s| chain_pose(&build_leg_table(s.leg_index, s, constants)).translation())
        .fold(Vector3::zeros(), |a, p| a + p)
        / 6.0
}

pub fn deviation(
    pose_id: u64,
    nominal: &Pose,
    perturbed: &[LegSolution; 6],
    constants: &DhConstants,
    band: ToleranceBand,
    sample_kind: SampleKind,
) -> DeviationRecord {
    deviation_with(pose_id, nominal, perturbed, constants, band, sample_kind, GripAggregate::Centroid)
}

pub fn deviation_with(
    pose_id: u64,
    nominal: &Pose,
    perturbed: &[LegSolution; 6],
    constants: &DhConstants,
    band: ToleranceBand,
    sample_kind: SampleKind,
    aggregate: GripAggregate,
) -> DeviationRecord {
    let target = nominal.position();
    let d = match aggregate {
        GripAggregate::Centroid => grip_centroid(perturbed, constants) - target,
        GripAggregate::WorstLeg => perturbed
            .iter()
            .map(|s| chain_pose(&build_leg_table(s.leg_index, s, constants)).translation() - target)
            .fold(Vector3::zeros(), |worst: Vector3<f64>, d| if d.norm() > worst.norm() { d } else { worst }),
    };
    let (dev_x, dev_y, dev_z) = (d.x.abs(), d.y.abs(), d.z.abs());
    DeviationRecord {
        pose_id,
        dev_x,
        dev_y,
        dev_z,
        dev_dist: (dev_x * dev_x + dev_y * dev_y + dev_z * dev_z).sqrt(),
        band,
        sample_kind,
    }
}

/// Bit `k` of the index set means variable `k` is shifted negatively.
pub fn corner_direction(index: usize) -> [f64; 6] {
    assert!(index < CORNER_COUNT);
    std::array::from_fn(|k| if index >> k & 1 == 1 { -1.0 } else { 1.0 })
}

/// One direction per leg.
pub type LegDirections = [[f64; 6]; 6];

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub directions: Vec<(SampleKind, LegDirections)>,
}

impl DirectionSet {
    pub fn new(n_random: usize, seed: u64) -> Self {
        let mut directions: Vec<(SampleKind, LegDirections)> = (0..CORNER_COUNT)
            .map(|i| (SampleKind::Corner(i), [corner_direction(i); 6]))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n_random {
            let dirs: LegDirections = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..=1.0)));
            directions.push((SampleKind::Random(i), dirs));
        }
        DirectionSet { directions }
    }
}

pub const STATS: [&str; 6] = ["x-max", "x-min", "y-max", "y-min", "z-max", "z-min"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub stat: &'static str,
    pub record: DeviationRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandSummary {
    pub band: f64,
    pub kind: &'static str,
    pub n: usize,
    pub max: [f64; 4],
    pub mean: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub aggregate: GripAggregate,
    pub bands: Vec<ToleranceBand>,
    /// Six rows per band, in band order.
    pub rows: Vec<ReportRow>,
    /// `all`, `corner` and `random` rows per band.
    pub summary: Vec<BandSummary>,
}

impl SweepReport {
    pub fn band_summary(&self, band: f64, kind: &str) -> Option<&BandSummary> {
        self.summary.iter().find(|s| s.band == band && s.kind == kind)
    }

    /// Max grip-center deviation at `hi` over max at `lo`, if both were swept.
    pub fn linearity_ratio(&self, hi: f64, lo: f64, kind: &str) -> Option<f64> {
        let h = self.band_summary(hi, kind)?.max[3];
        let l = self.band_summary(lo, kind)?.max[3];
        Some(h / l)
    }

    pub fn report_csv(&self) -> String {
        let mut out = String::from("band,stat,at,dev_x,dev_y,dev_z,dev_dist,pose_id\n");
        for row in &self.rows {
            let r = &row.record;
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.band, row.stat, r.sample_kind, r.dev_x, r.dev_y, r.dev_z, r.dev_dist, r.pose_id
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "band,kind,n,max_dev_x,max_dev_y,max_dev_z,max_dev_dist,mean_dev_x,mean_dev_y,mean_dev_z,mean_dev_dist\n",
        );
        for s in &self.summary {
            out.push_str(&format!("{},{},{}", s.band, s.kind, s.n));
            for v in s.max.iter().chain(s.mean.iter()) {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

fn summarize(band: ToleranceBand, kind: &'static str, recs: &[&DeviationRecord]) -> BandSummary {
    let mut max = [0.0f64; 4];
    let mut sum = [0.0f64; 4];
    for r in recs {
        let v = [r.dev_x, r.dev_y, r.dev_z, r.dev_dist];
        for k in 0..4 {
            max[k] = max[k].max(v[k]);
            sum[k] += v[k];
        }
    }
    let n = recs.len();
    BandSummary {
        band: band.0,
        kind,
        n,
        max,
        mean: sum.map(|s| if n == 0 { 0.0 } else { s / n as f64 }),
    }
}

/// Table-shaped rows: for each axis, the record with the largest and the
/// smallest deviation along it. Ties keep the earliest record.
fn extreme_rows(records: &[DeviationRecord]) -> Vec<ReportRow> {
    let mut rows = Vec::with_capacity(6);
    for axis in 0..3 {
        let mut hi = &records[0];
        let mut lo = &records[0];
        for r in &records[1..] {
            if r.component(axis) > hi.component(axis) {
                hi = r;
            }
            if r.component(axis) < lo.component(axis) {
                lo = r;
            }
        }
        rows.push(ReportRow {
            stat: STATS[2 * axis],
            record: *hi,
        });
        rows.push(ReportRow {
            stat: STATS[2 * axis + 1],
            record: *lo,
        });
    }
    rows
}

/// Evaluates every band × pose × direction combination.
///
/// `poses` should be sorted by pose_id; records are produced in that order,
/// then direction order, independent of the thread count.
pub fn sweep(
    poses: &[(WorkspaceRecord, [LegSolution; 6])],
    bands: &[ToleranceBand],
    n_random: usize,
    seed: u64,
    constants: &DhConstants,
    aggregate: GripAggregate,
) -> Result<SweepReport> {
    if poses.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let dirs = DirectionSet::new(n_random, seed);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &band in bands {
        let records: Vec<DeviationRecord> = poses
            .par_iter()
            .flat_map_iter(|(rec, sols)| {
                dirs.directions.iter().map(move |(kind, d)| {
                    let perturbed: [LegSolution; 6] = std::array::from_fn(|i| perturb(&sols[i], band, &d[i]));
                    deviation_with(rec.pose_id, &rec.pose, &perturbed, constants, band, *kind, aggregate)
                })
            })
            .collect();
        rows.extend(extreme_rows(&records));
        let all: Vec<&DeviationRecord> = records.iter().collect();
        let corner: Vec<&DeviationRecord> =
            records.iter().filter(|r| matches!(r.sample_kind, SampleKind::Corner(_))).collect();
        let random: Vec<&DeviationRecord> =
            records.iter().filter(|r| matches!(r.sample_kind, SampleKind::Random(_))).collect();
        summary.push(summarize(band, "all", &all));
        summary.push(summarize(band, "corner", &corner));
        summary.push(summarize(band, "random", &random));
    }
    Ok(SweepReport {
        aggregate,
        bands: bands.to_vec(),
        rows,
        summary,
    })
}
