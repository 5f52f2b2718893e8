use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hexakin::dh::DhConstants;
use hexakin::fk::{recover_pose, FkResult, SearchParams};
use hexakin::ik::{force_jacobian, leg_lengths, pose_valid, GridSteps, MotionLimits, Validity};
use hexakin::sensitivity::{sweep, GripAggregate, ToleranceBand};
use hexakin::store::{self, Database, DhRecord, Metadata};
use hexakin::{build_joint_layout, load_machine_config, Error, JointLayout, MachineConfig, Pose};
use rayon::prelude::*;
use serde_json::json;

mod export;
mod manifest;

use manifest::{utc_now, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "hexakin", version, about = "Stewart platform workspace, inverse and forward kinematics")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "HEXAKIN_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate the pose grid and store every valid pose.
    Workspace(WorkspaceArgs),
    /// Leg lengths, Jacobian determinant and validity of one pose.
    Ik(IkArgs),
    /// Recover DH joint variables for stored poses.
    Fk(FkArgs),
    /// Nearest stored poses to a set of leg lengths.
    Lookup(LookupArgs),
    /// Grip-center deviation under joint-variable tolerances.
    Sensitivity(SensitivityArgs),
    /// Point-cloud CSV or SVG scatter from a database or report.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct WorkspaceArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON motion limits (offsets from home); defaults to the Tiger 66.1 limits.
    #[arg(long)]
    limits: Option<PathBuf>,
    /// Grid steps as `xy,z,rot` (mm, mm, degrees).
    #[arg(long, default_value = "15,10,10")]
    steps: CsvF64<3>,
    #[arg(long, default_value_t = hexakin::ik::DEFAULT_SINGULARITY_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Grip pose `x,y,z,alpha,beta,gamma` in the world frame (mm, degrees); z is absolute, not an offset from home.
    #[arg(long, allow_hyphen_values = true)]
    pose: CsvF64<6>,
    #[arg(long, default_value_t = hexakin::ik::DEFAULT_SINGULARITY_THRESHOLD)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct FkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Workspace database.
    #[arg(long)]
    db: PathBuf,
    /// Number of poses drawn at random.
    #[arg(long, conflicts_with = "pose_id", required_unless_present = "pose_id")]
    sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    pose_id: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    error_limit: f64,
    #[arg(long, default_value_t = 1.0)]
    coarse: f64,
    #[arg(long, default_value_t = 0.1)]
    fine: f64,
    #[arg(long, default_value_t = 40)]
    max_refinements: u32,
    /// Start the universal-joint search from the closed-form angles.
    #[arg(long)]
    warm_start: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LookupArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    lengths: CsvF64<6>,
    #[arg(long, default_value_t = 1)]
    k: usize,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dh_db: PathBuf,
    /// Workspace database; defaults to the one recorded in the DH metadata.
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5")]
    bands: BandList,
    /// Solved poses to use, drawn at random; all when omitted.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 100)]
    random: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "centroid")]
    aggregate: GripAggregate,
    /// Report CSV; the per-band summary goes to `<name>.summary.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    SvgPoints,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum View {
    Xy,
    Xz,
    Yz,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "input")]
struct ExportInput {
    /// Workspace database.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Sensitivity report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    input: ExportInput,
    #[arg(long, value_enum)]
    format: Format,
    /// Projection plane of the SVG scatter for workspace data.
    #[arg(long, value_enum, default_value = "xy")]
    view: View,
    #[arg(long)]
    out: PathBuf,
}

/// Fixed-length comma-separated numbers.
#[derive(Debug, Clone, Copy)]
struct CsvF64<const N: usize>([f64; N]);

impl<const N: usize> FromStr for CsvF64<N> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != N {
            return Err(format!("expected {N} comma-separated numbers, got {}", parts.len()));
        }
        let mut out = [0.0; N];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
        }
        Ok(CsvF64(out))
    }
}

#[derive(Debug, Clone)]
struct BandList(Vec<ToleranceBand>);

impl FromStr for BandList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| {
                let v: f64 = p.trim().parse().map_err(|_| format!("`{p}` is not a number"))?;
                ToleranceBand::new(v).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()
            .map(BandList)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Validation { .. }
        | Error::GeometryInconsistent { .. }
        | Error::DegenerateLeg { .. }
        | Error::ConfigHashMismatch { .. } => 2,
        Error::EmptyDatabase | Error::InsufficientRecords { .. } | Error::UnknownPose(_) => 4,
        Error::Io { .. }
        | Error::Csv { .. }
        | Error::SchemaMismatch { .. }
        | Error::BadField { .. }
        | Error::OrphanRecord { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Workspace(a) => cmd_workspace(a),
        Command::Ik(a) => cmd_ik(a),
        Command::Fk(a) => cmd_fk(a),
        Command::Lookup(a) => cmd_lookup(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn machine(path: &Path) -> hexakin::Result<(MachineConfig, JointLayout)> {
    let config = load_machine_config(path)?;
    let layout = build_joint_layout(&config)?;
    Ok((config, layout))
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn cmd_workspace(a: &WorkspaceArgs) -> hexakin::Result<()> {
    let started = Instant::now();
    let (config, layout) = machine(&a.config)?;
    let limits = match &a.limits {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str::<MotionLimits>(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?
        }
        None => MotionLimits::tiger(),
    };
    let [step_xy, step_z, step_rot] = a.steps.0;
    let steps = GridSteps {
        step_xy,
        step_z,
        step_rot,
    };
    let run = hexakin::ik::generate_workspace(&layout, &config, &limits, &steps, a.threshold)?;

    let mut meta = Metadata::new(config.config_hash());
    meta.limits = Some(limits);
    meta.steps = Some(steps);
    meta.threshold = Some(a.threshold);
    meta.stats = Some(run.stats);
    meta.created_utc = utc_now();
    store::write_workspace(&a.out, &run.records, &meta)?;

    let s = run.stats;
    println!(
        "valid {} / {} poses ({:.2}%), stroke rejected {}, singular rejected {}",
        s.valid,
        s.total,
        100.0 * s.valid_fraction(),
        s.stroke_rejected,
        s.singular_rejected
    );
    let mut m = RunManifest::new("workspace", started);
    m.config = Some(a.config.clone());
    m.params = json!({ "limits": limits, "steps": steps, "threshold": a.threshold, "stats": s });
    m.outputs = vec![a.out.clone(), store::meta_path(&a.out)];
    m.write_beside(&a.out)
}

fn cmd_ik(a: &IkArgs) -> hexakin::Result<()> {
    let (config, layout) = machine(&a.config)?;
    let pose = Pose::from_array(a.pose.0);
    let lengths = leg_lengths(&pose, &layout, &config);
    for (i, l) in lengths.iter().enumerate() {
        println!("l{} = {l:.6}", i + 1);
    }
    match force_jacobian(&pose, &layout, &config) {
        Ok(j) => println!("det J = {:.6e}", j.determinant()),
        Err(e) => println!("det J = NaN ({e})"),
    }
    match pose_valid(&pose, &layout, &config, a.threshold) {
        Validity::Valid(_) => println!("Valid"),
        Validity::Invalid(reason) => println!("Invalid: {reason}"),
    }
    Ok(())
}

fn cmd_fk(a: &FkArgs) -> hexakin::Result<()> {
    let started = Instant::now();
    let (config, layout) = machine(&a.config)?;
    let params = SearchParams {
        coarse_step: a.coarse,
        fine_step: a.fine,
        error_limit: a.error_limit,
        max_refinements: a.max_refinements,
        warm_start: a.warm_start,
        ..SearchParams::default()
    };
    params.validate()?;
    let db = store::read_workspace(&a.db, Some(&config.config_hash()))?;
    let selection = match (a.sample, a.pose_id) {
        (_, Some(id)) => vec![*db.get(id).ok_or(Error::UnknownPose(id))?],
        (Some(n), None) => {
            if db.is_empty() {
                return Err(Error::EmptyDatabase);
            }
            store::sample_poses(db.records(), n, a.seed)?
        }
        (None, None) => unreachable!("clap requires --sample or --pose-id"),
    };

    let timed: Vec<(FkResult, f64)> = selection
        .par_iter()
        .map(|r| {
            let t = Instant::now();
            let res = recover_pose(r, &layout, &config, &params);
            (res, t.elapsed().as_secs_f64())
        })
        .collect();
    let rows: Vec<DhRecord> = timed.iter().flat_map(|(r, _)| store::dh_records(r)).collect();
    let solved = timed.iter().filter(|(r, _)| r.is_solved()).count();
    let mean_time = timed.iter().map(|(_, t)| t).sum::<f64>() / timed.len().max(1) as f64;

    let mut meta = Metadata::new(config.config_hash());
    meta.seed = a.pose_id.is_none().then_some(a.seed);
    meta.search = Some(params);
    meta.source = Some(absolute(&a.db));
    meta.created_utc = utc_now();
    store::write_dh(&a.out, &rows, &meta)?;

    println!(
        "solved {solved} / {} poses; mean per-pose time {mean_time:.3} s",
        timed.len()
    );
    for (r, _) in timed.iter().filter(|(r, _)| !r.is_solved()) {
        let legs: Vec<String> = r
            .legs
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_solved())
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        println!("Unsolved pose {} (legs {})", r.pose_id, legs.join(","));
    }
    let mut m = RunManifest::new("fk", started);
    m.config = Some(a.config.clone());
    m.params = json!({
        "sample": a.sample,
        "pose_id": a.pose_id,
        "search": params,
        "solved": solved,
        "evaluated": timed.len(),
        "mean_pose_time_s": mean_time,
    });
    m.seed = meta.seed;
    m.inputs = vec![a.db.clone()];
    m.outputs = vec![a.out.clone(), store::meta_path(&a.out)];
    m.write_beside(&a.out)
}

fn cmd_lookup(a: &LookupArgs) -> hexakin::Result<()> {
    let db = store::read_workspace(&a.db, None)?;
    let hits = hexakin::fk::fk_lookup(&a.lengths.0, db.records(), a.k)?;
    println!("rank,pose_id,distance,dx,dy,dz,alpha,beta,gamma");
    for (rank, h) in hits.iter().enumerate() {
        let p = h.record.pose;
        println!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            rank + 1,
            h.record.pose_id,
            h.distance,
            p.dx,
            p.dy,
            p.dz,
            p.alpha,
            p.beta,
            p.gamma
        );
    }
    Ok(())
}

fn cmd_sensitivity(a: &SensitivityArgs) -> hexakin::Result<()> {
    let started = Instant::now();
    let (config, layout) = machine(&a.config)?;
    let hash = config.config_hash();
    let ws_path = match &a.db {
        Some(p) => p.clone(),
        None => store::read_metadata(&a.dh_db)?.source.ok_or_else(|| Error::Validation {
            check: "dh_metadata:source".into(),
            residual: f64::NAN,
        })?,
    };
    let db: Database = store::read_dh_database(&a.dh_db, &ws_path, Some(&hash))?;
    let solved = db.solved_poses();
    if solved.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let poses = match a.samples {
        Some(n) => {
            let records: Vec<_> = solved.iter().map(|(r, _)| *r).collect();
            let picked = store::sample_poses(&records, n, a.seed)?;
            solved
                .into_iter()
                .filter(|(r, _)| picked.binary_search_by_key(&r.pose_id, |p| p.pose_id).is_ok())
                .collect()
        }
        None => solved,
    };
    let constants = DhConstants::new(&config, &layout);
    let report = sweep(&poses, &a.bands.0, a.random, a.seed, &constants, a.aggregate)?;

    let summary_path = a.out.with_extension("summary.csv");
    store::write_text(&a.out, &report.report_csv())?;
    store::write_text(&summary_path, &report.summary_csv())?;

    println!("{} poses, aggregate {}", poses.len(), a.aggregate);
    println!("band,max_dev_dist_corner,max_dev_dist_random,mean_dev_dist_all");
    for b in &a.bands.0 {
        let m = b.magnitude();
        let get = |kind| report.band_summary(m, kind).map_or(f64::NAN, |s| s.max[3]);
        let mean = report.band_summary(m, "all").map_or(f64::NAN, |s| s.mean[3]);
        println!("{m},{:.6},{:.6},{mean:.6}", get("corner"), get("random"));
    }
    let lo = a.bands.0.iter().map(|b| b.magnitude()).filter(|m| *m > 0.0).fold(f64::INFINITY, f64::min);
    let hi = a.bands.0.iter().map(|b| b.magnitude()).fold(0.0, f64::max);
    if lo < hi {
        if let Some(r) = report.linearity_ratio(hi, lo, "corner") {
            println!("linearity: max corner deviation at {hi} / at {lo} = {r:.3} (band ratio {:.3})", hi / lo);
        }
    }

    let mut m = RunManifest::new("sensitivity", started);
    m.config = Some(a.config.clone());
    m.params = json!({
        "bands": a.bands.0.iter().map(|b| b.magnitude()).collect::<Vec<_>>(),
        "samples": a.samples,
        "random": a.random,
        "aggregate": a.aggregate,
        "poses": poses.len(),
    });
    m.seed = Some(a.seed);
    m.inputs = vec![a.dh_db.clone(), ws_path];
    m.outputs = vec![a.out.clone(), summary_path];
    m.write_beside(&a.out)
}

fn cmd_export(a: &ExportArgs) -> hexakin::Result<()> {
    let started = Instant::now();
    let (input, text) = match (&a.input.db, &a.input.report) {
        (Some(db_path), _) => {
            let db = store::read_workspace(db_path, None)?;
            let pts: Vec<[f64; 3]> = db.records().iter().map(|r| [r.pose.dx, r.pose.dy, r.pose.dz]).collect();
            let text = match a.format {
                Format::Csv => export::points_csv(["x", "y", "z"], &pts),
                Format::SvgPoints => {
                    let (i, j, lx, ly) = match a.view {
                        View::Xy => (0, 1, "x", "y"),
                        View::Xz => (0, 2, "x", "z"),
                        View::Yz => (1, 2, "y", "z"),
                    };
                    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p[i], p[j])).collect();
                    export::svg_scatter(&xy, lx, ly)
                }
            };
            (db_path.clone(), text)
        }
        (None, Some(report_path)) => {
            let rows = store::read_report_points(report_path)?;
            let text = match a.format {
                Format::Csv => {
                    let mut out = String::from("band,stat,dev_dist\n");
                    for r in &rows {
                        out.push_str(&format!("{},{},{:.6}\n", r.band, r.stat, r.dev_dist));
                    }
                    out
                }
                Format::SvgPoints => {
                    let xy: Vec<(f64, f64)> = rows.iter().map(|r| (r.band, r.dev_dist)).collect();
                    export::svg_scatter(&xy, "band", "dev_dist")
                }
            };
            (report_path.clone(), text)
        }
        (None, None) => unreachable!("clap requires --db or --report"),
    };
    store::write_text(&a.out, &text)?;
    let mut m = RunManifest::new("export", started);
    m.params = json!({ "format": format!("{:?}", a.format), "view": format!("{:?}", a.view) });
    m.inputs = vec![input];
    m.outputs = vec![a.out.clone()];
    m.write_beside(&a.out)
}
