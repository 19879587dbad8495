use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{run_experiment_partial, RunRecord};
use super::report::{sweep_report, SweepTable};
use super::spec::ExperimentSpec;
use crate::error::{Error, Result};

pub const SPEC_FILE: &str = "spec.toml";
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_SVG: &str = "summary.svg";
pub const TIMING_FILE: &str = "timing.json";
pub const FAILED_MARKER: &str = "FAILED";

pub fn write_records(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Write the summary files of `records` into `dir`.
pub fn write_summary(table: &SweepTable, dir: &Path) -> Result<()> {
    table.write_csv(fs::File::create(dir.join(SUMMARY_CSV))?)?;
    table.write_json(fs::File::create(dir.join(SUMMARY_JSON))?)?;
    fs::write(dir.join(SUMMARY_SVG), table.to_svg())?;
    Ok(())
}

/// Outcome of [`run_and_persist`].
#[derive(Debug)]
pub struct RunDirectory {
    pub path: PathBuf,
    pub records: Vec<RunRecord>,
    pub summary: SweepTable,
}

/// Run `spec` and store everything under `<out>/<short spec hash>/`. Records
/// that completed are written even when some replica fails; the directory
/// then carries a `FAILED` marker with the first error.
pub fn run_and_persist(spec: &ExperimentSpec, out: &Path) -> Result<RunDirectory> {
    spec.validate()?;
    let dir = out.join(spec.short_hash());
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join(FAILED_MARKER));
    fs::write(dir.join(SPEC_FILE), spec.to_toml()?)?;

    let results = match run_experiment_partial(spec) {
        Ok(results) => results,
        Err(e) => {
            fs::write(dir.join(FAILED_MARKER), format!("{e}\n"))?;
            return Err(e);
        }
    };
    let mut records = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    write_records(&records, &dir.join(RECORDS_FILE))?;
    let timing: Vec<_> = records
        .iter()
        .map(|r| serde_json::json!({"theta_index": r.theta_index, "replica": r.replica, "wall_ms": r.wall_ms}))
        .collect();
    fs::write(dir.join(TIMING_FILE), serde_json::to_string_pretty(&timing)?)?;
    let summary = sweep_report(&records, &spec.metrics);
    write_summary(&summary, &dir)?;
    if let Some(e) = first_error {
        fs::write(dir.join(FAILED_MARKER), format!("{e}\n"))?;
        return Err(e);
    }
    Ok(RunDirectory { path: dir, records, summary })
}

/// Rebuild the summary of an existing run directory.
pub fn report_run_directory(dir: &Path) -> Result<SweepTable> {
    let spec = ExperimentSpec::from_toml(&fs::read_to_string(dir.join(SPEC_FILE))?)?;
    let records = read_records(&dir.join(RECORDS_FILE))?;
    let summary = sweep_report(&records, &spec.metrics);
    write_summary(&summary, dir)?;
    Ok(summary)
}
