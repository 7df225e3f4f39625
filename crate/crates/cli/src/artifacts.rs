//! Run artifacts, each written to a temp file in the output directory and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use fusionbed::metrics::{csv_row, CSV_HEADER};
use fusionbed::scenario::RunOutput;
use tempfile::NamedTempFile;

use crate::CliError;

pub const REPORT: &str = "report.json";
pub const TRACKS: &str = "tracks.jsonl";
pub const METRICS: &str = "metrics.csv";
pub const LOG: &str = "run.log";
pub const RECORDING: &str = "replay.jsonl";

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| io(&path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| io(&path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| io(&path, e))?;
    tmp.persist(&path).map_err(|e| io(&path, e.error))?;
    Ok(())
}

pub fn write_all(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let r = &out.report;
    let csv = format!("{CSV_HEADER}\n{}\n", csv_row(&r.scenario.name, &r.mode, r.seed, &r.metrics));
    write_atomic(dir, REPORT, &format!("{}\n", r.to_json()))?;
    write_atomic(dir, TRACKS, &r.tracks_jsonl())?;
    write_atomic(dir, METRICS, &csv)?;
    write_atomic(dir, LOG, &out.log_text())?;
    write_atomic(dir, RECORDING, &out.recording_jsonl())?;
    Ok(())
}
