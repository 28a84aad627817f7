//! Deterministic result files.
//!
//! CSV values are locale-independent: `.` decimal separator and 17
//! significant digits for reals, so re-running an identical sweep produces
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use iso_opt::harness::{RunRecord, SweepConfig};

/// 17 significant digits, scientific notation, locale-independent.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub const SWEEP_CSV_HEADER: &str = "optimizer,lr,seed,converged,iterations,final_loss,diverged";

/// Renders sweep records as CSV text (stable schema, see
/// [`SWEEP_CSV_HEADER`]). `iterations` is empty for runs that never met the
/// convergence criterion.
pub fn sweep_csv(records: &[RunRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let iterations = r
            .iterations_to_convergence
            .map(|i| i.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.optimizer.name(),
            format_real(r.lr),
            r.seed,
            r.iterations_to_convergence.is_some(),
            iterations,
            format_real(r.final_loss),
            r.diverged,
        ));
    }
    out
}

pub fn write_sweep_csv(path: &Path, records: &[RunRecord]) -> std::io::Result<()> {
    fs::write(path, sweep_csv(records))
}

/// Full records (including loss series) plus the config that produced them.
pub fn write_sweep_json(
    path: &Path,
    config: &SweepConfig,
    records: &[RunRecord],
) -> std::io::Result<()> {
    let doc = serde_json::json!({
        "config": config,
        "records": records,
    });
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &doc)?;
    file.write_all(b"\n")
}

/// One row per recorded step of a pure-noise trajectory.
pub struct NoiseSeriesRow<'a> {
    pub optimizer: &'a str,
    pub alpha: f64,
    pub norms: &'a [f64],
}

pub fn purenoise_series_csv(rows: &[NoiseSeriesRow<'_>]) -> String {
    let mut out = String::from("optimizer,alpha,step,weight_norm\n");
    for row in rows {
        for (step, &norm) in row.norms.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.optimizer,
                format_real(row.alpha),
                step,
                format_real(norm),
            ));
        }
    }
    out
}

/// Fitted summary of one pure-noise trajectory.
pub struct NoiseSummaryRow<'a> {
    pub optimizer: &'a str,
    pub alpha: f64,
    pub slope: f64,
    pub max_norm_ratio: f64,
    pub final_norm_ratio: f64,
    pub bounded: bool,
}

pub fn purenoise_summary_csv(rows: &[NoiseSummaryRow<'_>]) -> String {
    let mut out =
        String::from("optimizer,alpha,slope,max_norm_ratio,final_norm_ratio,bounded\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.optimizer,
            format_real(r.alpha),
            format_real(r.slope),
            format_real(r.max_norm_ratio),
            format_real(r.final_norm_ratio),
            r.bounded,
        ));
    }
    out
}
