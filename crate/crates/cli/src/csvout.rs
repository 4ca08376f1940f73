//! CSV emission. One row per scenario, fixed 15-column header, floats in
//! shortest round-trip decimal, `NA` for a CV that is undefined because the
//! estimate is exactly zero.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const CSV_HEADER: &str = "scenario,model,estimator,delta,reps,estimate,std_err,cv,ci_lo,ci_hi,mean_steps,max_steps,capped_count,seed,wall_ms";

#[derive(Debug, Clone)]
pub struct CsvRow {
    pub scenario: String,
    pub model: String,
    pub estimator: String,
    pub delta: f64,
    pub reps: u64,
    pub estimate: f64,
    pub std_err: f64,
    pub cv: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_steps: f64,
    pub max_steps: u64,
    pub capped_count: u64,
    pub seed: u64,
    pub wall_ms: u64,
}

impl CsvRow {
    /// All fields except the trailing wall-clock column, which is the one
    /// field exempt from the bit-identical determinism contract.
    pub fn stable_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.model,
            self.estimator,
            self.delta,
            self.reps,
            self.estimate,
            self.std_err,
            self.cv.map_or_else(|| "NA".to_string(), |c| c.to_string()),
            self.ci_lo,
            self.ci_hi,
            self.mean_steps,
            self.max_steps,
            self.capped_count,
            self.seed,
        )
    }

    pub fn to_line(&self) -> String {
        format!("{},{}", self.stable_fields(), self.wall_ms)
    }
}

/// Renders header plus rows.
pub fn csv_text(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Writes the CSV file, surfacing I/O failures with the path.
pub fn emit_csv(path: &Path, rows: &[CsvRow]) -> Result<(), String> {
    let file = File::create(path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(csv_text(rows).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}
