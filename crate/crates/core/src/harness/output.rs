//! CSV results: one `trial_<k>.csv` velocity series per trial and a
//! `summary.csv` with one row per trial.
//!
//! Floats are written in shortest round-trip form, so parsing a file gives
//! back the exact in-memory values.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::trial::{SeriesRow, TrialResult};
use super::HarnessError;

pub const TRIAL_HEADER: [&str; 14] = [
    "t",
    "vx_true",
    "vy_true",
    "vz_true",
    "vx_est",
    "vy_est",
    "vz_est",
    "vx_err",
    "vy_err",
    "vz_err",
    "vx_3sigma",
    "vy_3sigma",
    "vz_3sigma",
    "nees",
];

pub const SUMMARY_HEADER: [&str; 12] = [
    "trial",
    "seed",
    "mode",
    "rms_vx",
    "rms_vy",
    "rms_vz",
    "final_rms",
    "diverged",
    "failed",
    "range_features",
    "facet_updates",
    "reason",
];

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn trial_file_name(trial: usize) -> String {
    format!("trial_{trial}.csv")
}

/// Writes every trial series and the summary into `out_dir`, creating it if
/// needed. Returns the written paths, summary last.
pub fn emit_results(results: &[TrialResult], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Config("no results to write".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut paths = Vec::with_capacity(results.len() + 1);
    for r in results {
        let path = out_dir.join(trial_file_name(r.trial));
        write_trial(&path, &r.series)?;
        paths.push(path);
    }
    let path = out_dir.join("summary.csv");
    write_summary(&path, results)?;
    paths.push(path);
    Ok(paths)
}

fn write_trial(path: &Path, series: &[SeriesRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(TRIAL_HEADER).map_err(|e| io_err(path, e))?;
    for row in series {
        let err = row.error();
        let mut fields = vec![row.t];
        fields.extend(row.v_true.iter());
        fields.extend(row.v_est.iter());
        fields.extend(err.iter());
        fields.extend(row.sigma3.iter());
        fields.push(row.nees);
        w.write_record(fields.iter().map(|x| x.to_string()))
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_summary(path: &Path, results: &[TrialResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(SUMMARY_HEADER)
        .map_err(|e| io_err(path, e))?;
    for r in results {
        let rms = r.rms_error();
        let record = [
            r.trial.to_string(),
            r.seed.to_string(),
            r.mode.name().to_string(),
            rms.x.to_string(),
            rms.y.to_string(),
            rms.z.to_string(),
            r.final_rms().to_string(),
            u8::from(r.diverged).to_string(),
            u8::from(r.failed()).to_string(),
            r.range_feature_times.len().to_string(),
            r.facet_updates.to_string(),
            r.failure.clone().unwrap_or_default(),
        ];
        w.write_record(&record).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Parses a `trial_<k>.csv` file. The header must match [`TRIAL_HEADER`].
pub fn read_trial_csv(path: &Path) -> Result<Vec<SeriesRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?;
    if header.iter().ne(TRIAL_HEADER) {
        return Err(io_err(path, format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let v: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse().map_err(|_| {
                    io_err(
                        path,
                        format!("row {}: bad {} '{s}'", line + 1, TRIAL_HEADER[i]),
                    )
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(SeriesRow {
            t: v[0],
            v_true: Vector3::new(v[1], v[2], v[3]),
            v_est: Vector3::new(v[4], v[5], v[6]),
            sigma3: Vector3::new(v[10], v[11], v[12]),
            nees: v[13],
        });
    }
    Ok(rows)
}
