//! CSV workspace and DH databases with JSON sidecar metadata.
//!
//! A database `name.csv` is accompanied by `name.meta.json`. Numbers are
//! written with six decimals; the Jacobian determinant uses six-decimal
//! scientific notation because its magnitude spans many decades.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dh::LegSolution;
use crate::error::{Error, Result};
use crate::fk::{FkResult, SearchParams};
use crate::ik::{GridSteps, MotionLimits, WorkspaceRecord, WorkspaceStats};
use crate::kinematics::Pose;

pub const WORKSPACE_COLUMNS: [&str; 14] = [
    "pose_id", "dx", "dy", "dz", "alpha", "beta", "gamma", "l1", "l2", "l3", "l4", "l5", "l6", "jdet",
];

pub const DH_COLUMNS: [&str; 10] = [
    "pose_id",
    "leg",
    "theta2",
    "theta3",
    "d4",
    "theta5",
    "theta6",
    "theta7",
    "residual_mm",
    "solved",
];

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub limits: Option<MotionLimits>,
    pub steps: Option<GridSteps>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub created_utc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<WorkspaceStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchParams>,
    /// Workspace database a DH database was derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
}

impl Metadata {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Metadata {
            config_hash: config_hash.into(),
            limits: None,
            steps: None,
            seed: None,
            tool_version: TOOL_VERSION.to_string(),
            created_utc: String::new(),
            threshold: None,
            stats: None,
            search: None,
            source: None,
        }
    }

    pub fn check_hash(&self, supplied: &str) -> Result<()> {
        if self.config_hash != supplied {
            return Err(Error::ConfigHashMismatch {
                stored: self.config_hash.clone(),
                supplied: supplied.to_string(),
            });
        }
        Ok(())
    }
}

/// One row of a DH database. Unsolved legs without a best attempt carry NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRecord {
    pub pose_id: u64,
    pub solution: LegSolution,
    pub residual_mm: f64,
    pub solved: bool,
}

pub fn dh_records(result: &FkResult) -> [DhRecord; 6] {
    std::array::from_fn(|i| {
        let leg = i + 1;
        let outcome = &result.legs[i];
        match outcome.fit() {
            Some(fit) => DhRecord {
                pose_id: result.pose_id,
                solution: fit.solution,
                residual_mm: fit.residual_mm,
                solved: outcome.is_solved(),
            },
            None => DhRecord {
                pose_id: result.pose_id,
                solution: LegSolution::with_variables(leg, [f64::NAN; 6]),
                residual_mm: f64::NAN,
                solved: false,
            },
        }
    })
}

/// `name.csv` → `name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_metadata(path: &Path, meta: &Metadata) -> Result<()> {
    let mp = meta_path(path);
    let mut text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    text.push('\n');
    std::fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: mp,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Writes records in the given order plus the sidecar.
pub fn write_workspace(path: &Path, records: &[WorkspaceRecord], meta: &Metadata) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(WORKSPACE_COLUMNS).map_err(|e| Error::csv(path, e))?;
    let mut row: Vec<String> = Vec::with_capacity(14);
    for r in records {
        row.clear();
        row.push(r.pose_id.to_string());
        row.extend(r.pose.to_array().iter().map(|v| f6(*v)));
        row.extend(r.leg_lengths.iter().map(|v| f6(*v)));
        row.push(format!("{:.6e}", r.jacobian_det));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)?;
    write_metadata(path, meta)
}

pub fn write_dh(path: &Path, records: &[DhRecord], meta: &Metadata) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(DH_COLUMNS).map_err(|e| Error::csv(path, e))?;
    let mut row: Vec<String> = Vec::with_capacity(10);
    for r in records {
        row.clear();
        row.push(r.pose_id.to_string());
        row.push(r.solution.leg_index.to_string());
        row.extend(r.solution.variables().iter().map(|v| f6(*v)));
        row.push(f6(r.residual_mm));
        row.push(r.solved.to_string());
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)?;
    write_metadata(path, meta)
}

/// Reads a CSV whose header must contain `columns` (in any order) and hands
/// each row's fields, reordered to `columns`, to `parse`.
fn read_table<T, const N: usize>(
    path: &Path,
    columns: [&str; N],
    mut parse: impl FnMut(&Fields<'_, N>) -> Result<T>,
) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::csv(path, e),
    })?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut index = [0usize; N];
    for (k, name) in columns.iter().enumerate() {
        index[k] = header
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| Error::SchemaMismatch {
                path: path.to_path_buf(),
                column: name.to_string(),
            })?;
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while reader.read_record(&mut record).map_err(|e| Error::csv(path, e))? {
        row += 1;
        let fields = Fields {
            path,
            row,
            columns: &columns,
            values: std::array::from_fn(|k| record.get(index[k]).unwrap_or("")),
        };
        out.push(parse(&fields)?);
    }
    Ok(out)
}

struct Fields<'a, const N: usize> {
    path: &'a Path,
    row: usize,
    columns: &'a [&'a str; N],
    values: [&'a str; N],
}

impl<const N: usize> Fields<'_, N> {
    fn get<T: std::str::FromStr>(&self, k: usize) -> Result<T> {
        self.values[k].trim().parse().map_err(|_| Error::BadField {
            path: self.path.to_path_buf(),
            row: self.row,
            column: self.columns[k].to_string(),
            value: self.values[k].to_string(),
        })
    }
}

pub fn read_workspace_records(path: &Path) -> Result<Vec<WorkspaceRecord>> {
    read_table(path, WORKSPACE_COLUMNS, |f| {
        let pose = Pose {
            dx: f.get(1)?,
            dy: f.get(2)?,
            dz: f.get(3)?,
            alpha: f.get(4)?,
            beta: f.get(5)?,
            gamma: f.get(6)?,
        };
        let mut leg_lengths = [0.0; 6];
        for (i, l) in leg_lengths.iter_mut().enumerate() {
            *l = f.get(7 + i)?;
        }
        Ok(WorkspaceRecord {
            pose_id: f.get(0)?,
            pose,
            leg_lengths,
            jacobian_det: f.get(13)?,
        })
    })
}

pub fn read_dh_records(path: &Path) -> Result<Vec<DhRecord>> {
    read_table(path, DH_COLUMNS, |f| {
        let leg: usize = f.get(1)?;
        if !(1..=6).contains(&leg) {
            return Err(Error::BadField {
                path: f.path.to_path_buf(),
                row: f.row,
                column: "leg".into(),
                value: f.values[1].to_string(),
            });
        }
        let mut v = [0.0; 6];
        for (i, x) in v.iter_mut().enumerate() {
            *x = f.get(2 + i)?;
        }
        Ok(DhRecord {
            pose_id: f.get(0)?,
            solution: LegSolution::with_variables(leg, v),
            residual_mm: f.get(8)?,
            solved: f.get(9)?,
        })
    })
}

/// `(band, stat, dev_dist)` rows of a sensitivity report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportPoint {
    pub band: f64,
    pub stat: String,
    pub dev_dist: f64,
}

pub fn read_report_points(path: &Path) -> Result<Vec<ReportPoint>> {
    read_table(path, ["band", "stat", "dev_dist"], |f| {
        Ok(ReportPoint {
            band: f.get(0)?,
            stat: f.values[1].to_string(),
            dev_dist: f.get(2)?,
        })
    })
}

/// Workspace records ordered by pose_id, optionally joined with DH records.
#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub meta: Metadata,
    records: Vec<WorkspaceRecord>,
    index: HashMap<u64, usize>,
    dh: BTreeMap<(u64, usize), DhRecord>,
}

impl Database {
    pub fn new(meta: Metadata, mut records: Vec<WorkspaceRecord>) -> Self {
        records.sort_by_key(|r| r.pose_id);
        let index = records.iter().enumerate().map(|(i, r)| (r.pose_id, i)).collect();
        Database {
            meta,
            records,
            index,
            dh: BTreeMap::new(),
        }
    }

    /// Adds DH rows; every row must refer to a stored pose.
    pub fn attach_dh(&mut self, rows: impl IntoIterator<Item = DhRecord>) -> Result<()> {
        let rows: Vec<DhRecord> = rows.into_iter().collect();
        if let Some(orphan) = rows.iter().find(|r| !self.index.contains_key(&r.pose_id)) {
            return Err(Error::OrphanRecord {
                pose_id: orphan.pose_id,
            });
        }
        for r in rows {
            self.dh.insert((r.pose_id, r.solution.leg_index), r);
        }
        Ok(())
    }

    pub fn records(&self) -> &[WorkspaceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, pose_id: u64) -> Option<&WorkspaceRecord> {
        self.index.get(&pose_id).map(|&i| &self.records[i])
    }

    pub fn dh_records(&self) -> impl Iterator<Item = &DhRecord> {
        self.dh.values()
    }

    /// Poses whose six legs are all stored and solved, by pose_id.
    pub fn solved_poses(&self) -> Vec<(WorkspaceRecord, [LegSolution; 6])> {
        let mut by_pose: BTreeMap<u64, [Option<LegSolution>; 6]> = BTreeMap::new();
        for r in self.dh.values().filter(|r| r.solved) {
            by_pose.entry(r.pose_id).or_default()[r.solution.leg_index - 1] = Some(r.solution);
        }
        by_pose
            .into_iter()
            .filter_map(|(id, legs)| {
                if legs.iter().any(Option::is_none) {
                    return None;
                }
                Some((*self.get(id)?, legs.map(|l| l.expect("checked"))))
            })
            .collect()
    }
}

/// Opens a workspace database, rejecting it if `config_hash` is given and
/// differs from the stored one.
pub fn read_workspace(path: &Path, config_hash: Option<&str>) -> Result<Database> {
    let meta = read_metadata(path)?;
    if let Some(h) = config_hash {
        meta.check_hash(h)?;
    }
    let records = read_workspace_records(path)?;
    Ok(Database::new(meta, records))
}

/// Opens a DH database together with the workspace it was derived from.
pub fn read_dh_database(
    dh_path: &Path,
    workspace_path: &Path,
    config_hash: Option<&str>,
) -> Result<Database> {
    let dh_meta = read_metadata(dh_path)?;
    if let Some(h) = config_hash {
        dh_meta.check_hash(h)?;
    }
    let mut db = read_workspace(workspace_path, Some(&dh_meta.config_hash))?;
    db.attach_dh(read_dh_records(dh_path)?)?;
    Ok(db)
}

/// Seeded uniform sample without replacement, returned in pose_id order.
pub fn sample_poses(records: &[WorkspaceRecord], n: usize, seed: u64) -> Result<Vec<WorkspaceRecord>> {
    if n > records.len() {
        return Err(Error::InsufficientRecords {
            requested: n,
            available: records.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<WorkspaceRecord> = rand::seq::index::sample(&mut rng, records.len(), n)
        .into_iter()
        .map(|i| records[i])
        .collect();
    picked.sort_by_key(|r| r.pose_id);
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupHit {
    pub record: WorkspaceRecord,
    /// Euclidean distance in leg-length space, mm.
    pub distance: f64,
}

/// Exact k nearest records by leg-length distance; ties go to the lower pose_id.
pub fn nearest_by_lengths(records: &[WorkspaceRecord], lengths: &[f64; 6], k: usize) -> Result<Vec<LookupHit>> {
    if records.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut scored: Vec<(f64, u64, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d2: f64 = r.leg_lengths.iter().zip(lengths).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, r.pose_id, i)
        })
        .collect();
    let order = |a: &(f64, u64, usize), b: &(f64, u64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(scored.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(scored
        .into_iter()
        .map(|(d2, _, i)| LookupHit {
            record: records[i],
            distance: d2.sqrt(),
        })
        .collect())
}

/// Writes a text file, creating nothing else.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, lengths: [f64; 6]) -> WorkspaceRecord {
        WorkspaceRecord {
            pose_id: id,
            pose: Pose::new(id as f64, -0.5, 900.0, 1.0, -2.0, 3.0),
            leg_lengths: lengths,
            jacobian_det: 1.234_567_89e-3,
        }
    }

    #[test]
    fn meta_path_replaces_extension() {
        assert_eq!(meta_path(Path::new("out/ws.csv")), PathBuf::from("out/ws.meta.json"));
    }

    #[test]
    fn nearest_exact_and_ties() {
        let recs = vec![rec(5, [10.0; 6]), rec(2, [12.0; 6]), rec(9, [11.0; 6])];
        let hits = nearest_by_lengths(&recs, &[11.0; 6], 3).unwrap();
        assert_eq!(hits[0].record.pose_id, 9);
        assert_eq!(hits[0].distance, 0.0);
        // 5 and 2 are equidistant
        assert_eq!(hits[1].record.pose_id, 2);
        assert_eq!(hits[2].record.pose_id, 5);
        assert_eq!(nearest_by_lengths(&recs, &[0.0; 6], 10).unwrap().len(), 3);
        assert!(matches!(nearest_by_lengths(&[], &[0.0; 6], 1), Err(Error::EmptyDatabase)));
    }

    #[test]
    fn sample_bounds_and_determinism() {
        let recs: Vec<_> = (0..50).map(|i| rec(i * 3, [i as f64; 6])).collect();
        assert_eq!(sample_poses(&recs, 50, 4).unwrap(), recs);
        let a = sample_poses(&recs, 10, 1).unwrap();
        assert_eq!(a, sample_poses(&recs, 10, 1).unwrap());
        assert!(a.windows(2).all(|w| w[0].pose_id < w[1].pose_id));
        assert!(matches!(
            sample_poses(&recs, 51, 1),
            Err(Error::InsufficientRecords {
                requested: 51,
                available: 50
            })
        ));
    }

    #[test]
    fn orphan_dh_rejected() {
        let mut db = Database::new(Metadata::new("h"), vec![rec(1, [1.0; 6])]);
        let row = DhRecord {
            pose_id: 2,
            solution: LegSolution::zero(1),
            residual_mm: 0.0,
            solved: true,
        };
        assert!(matches!(db.attach_dh([row]), Err(Error::OrphanRecord { pose_id: 2 })));
    }

    #[test]
    fn solved_poses_need_all_legs() {
        let mut db = Database::new(Metadata::new("h"), vec![rec(1, [1.0; 6]), rec(2, [1.0; 6])]);
        let row = |id, leg, solved| DhRecord {
            pose_id: id,
            solution: LegSolution::zero(leg),
            residual_mm: 0.1,
            solved,
        };
        db.attach_dh((1..=6).map(|l| row(1, l, true))).unwrap();
        db.attach_dh((1..=6).map(|l| row(2, l, l != 3))).unwrap();
        let solved = db.solved_poses();
        assert_eq!(solved.len(), 1);
        assert_eq!(solved[0].0.pose_id, 1);
    }
}
