//! CSV emission. Plain RFC-4180 framing, UTF-8, '.' decimal; NMSE uses a
//! -300 dB floor to encode a numerically-zero debiased residual.

use std::fs::File;
use std::path::Path;

use onebit_core::doa::{McResult, Scenario, TrialRecord};

pub type IoResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Append one sweep cell's rows to open trials/summary writers.
pub fn append_cell(
    trials: &mut csv::Writer<File>,
    summary: &mut csv::Writer<File>,
    snr_db: f64,
    result: &McResult,
) -> IoResult<()> {
    for r in &result.records {
        trials.write_record([
            r.trial.to_string(),
            r.algorithm.clone(),
            fmt_f64(snr_db),
            fmt_f64(r.nmse_db),
            (r.detected as u8).to_string(),
            fmt_f64(r.runtime_s),
        ])?;
    }
    for row in &result.summary {
        summary.write_record([
            row.algorithm.clone(),
            fmt_f64(snr_db),
            fmt_f64(row.mean_nmse_db),
            fmt_f64(row.detection_rate),
            fmt_f64(row.mean_runtime_s),
            row.n_failed.to_string(),
        ])?;
    }
    Ok(())
}

pub fn trials_writer(path: &Path) -> IoResult<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "algorithm", "snr_db", "nmse_db", "detected", "runtime_s"])?;
    Ok(w)
}

pub fn summary_writer(path: &Path) -> IoResult<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "snr_db",
        "mean_nmse_db",
        "detection_rate",
        "mean_runtime_s",
        "n_failed",
    ])?;
    Ok(w)
}

/// Write per-grid-angle top-K membership counts, aggregated over the sweep.
pub fn write_bins(
    path: &Path,
    scenario: &Scenario,
    bins: &std::collections::BTreeMap<String, Vec<u64>>,
) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "angle_deg", "count"])?;
    for (algorithm, counts) in bins {
        for (i, &count) in counts.iter().enumerate() {
            w.write_record([
                algorithm.clone(),
                fmt_f64(scenario.grid[i]),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write one realization's per-angle spectrum with top-K rows flagged.
pub fn write_spectrum(path: &Path, scenario: &Scenario, records: &[TrialRecord]) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "angle_deg", "magnitude", "topk"])?;
    for r in records {
        let spec = onebit_core::doa::spectrum(&r.x_hat);
        for (i, &angle) in scenario.grid.iter().enumerate() {
            w.write_record([
                r.algorithm.clone(),
                fmt_f64(angle),
                fmt_f64(spec[i]),
                (r.support.contains(&i) as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip float formatting (Rust's Display), deterministic
/// for a given value.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
