use std::path::{Path, PathBuf};
use std::time::Instant;

use hexakin::store::TOOL_VERSION;
use serde::Serialize;

/// Written next to every output as `<name>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub config: Option<PathBuf>,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub jobs: usize,
    pub wall_time_s: f64,
    pub tool_version: &'static str,
    pub created_utc: String,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, started: Instant) -> Self {
        RunManifest {
            subcommand,
            config: None,
            params: serde_json::Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            jobs: rayon::current_num_threads(),
            wall_time_s: started.elapsed().as_secs_f64(),
            tool_version: TOOL_VERSION,
            created_utc: utc_now(),
        }
    }

    pub fn write_beside(&self, output: &Path) -> hexakin::Result<()> {
        let path = manifest_path(output);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        hexakin::store::write_text(&path, &text)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

pub fn utc_now() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
