//! On-disk form of an experiment: one JSON document plus one plain-text
//! `budget,mean,std` file per method.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ExperimentResult, MethodId};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;
pub const RESULTS_FILE: &str = "results.json";

pub fn results_path(out_dir: &Path) -> PathBuf {
    out_dir.join(RESULTS_FILE)
}

pub fn plot_data_path(out_dir: &Path, method: MethodId) -> PathBuf {
    out_dir.join(format!("{}.csv", method.as_str().to_ascii_lowercase()))
}

/// Writes `results.json` and the per-method plot files into `out_dir`,
/// creating it if needed. Output is byte-identical for identical results.
pub fn emit_results(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let path = results_path(out_dir);
    let mut json = serde_json::to_string_pretty(result)?;
    json.push('\n');
    fs::write(&path, json)?;
    written.push(path);

    for (method, agg) in &result.aggregates {
        let path = plot_data_path(out_dir, *method);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "budget,mean,std")?;
        for ((b, m), s) in result.budgets.iter().zip(&agg.mean).zip(&agg.std) {
            writeln!(f, "{b},{m},{s}")?;
        }
        written.push(path);
    }
    Ok(written)
}

pub fn read_results(path: &Path) -> Result<ExperimentResult> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
