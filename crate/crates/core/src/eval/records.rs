use super::EvalError;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Outcome of one Eb/N0 point. Column order of the CSV file follows the
/// field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pipeline: String,
    pub code: String,
    pub ebn0_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub ber: f64,
    pub bler: f64,
    pub minus_ln_bler: f64,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Binomial standard error of `bler`.
    pub bler_se: f64,
}

impl EvalRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pipeline: String,
        code: &str,
        ebn0_db: f64,
        frames: u64,
        bit_errors: u64,
        block_errors: u64,
        seed: u64,
        wall_time_s: f64,
        k: usize,
    ) -> Self {
        let f = frames.max(1) as f64;
        let bler = block_errors as f64 / f;
        Self {
            pipeline,
            code: code.to_string(),
            ebn0_db,
            frames,
            bit_errors,
            block_errors,
            ber: bit_errors as f64 / (f * k as f64),
            bler,
            minus_ln_bler: -bler.ln(),
            seed,
            wall_time_s,
            bler_se: (bler * (1.0 - bler) / f).sqrt(),
        }
    }

    /// Standard error of `-ln BLER` by the delta method.
    pub fn minus_ln_bler_se(&self) -> f64 {
        if self.block_errors == 0 {
            f64::INFINITY
        } else {
            self.bler_se / self.bler
        }
    }
}

/// Writes the records as CSV and, when given, the pipeline description as a
/// JSON file next to it.
pub fn write_results(records: &[EvalRecord], path: &Path, config: Option<&serde_json::Value>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    if let Some(cfg) = config {
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(cfg)?)?;
    }
    Ok(())
}

const HEADER: [&str; 12] = [
    "pipeline",
    "code",
    "ebn0_db",
    "frames",
    "bit_errors",
    "block_errors",
    "ber",
    "bler",
    "minus_ln_bler",
    "seed",
    "wall_time_s",
    "bler_se",
];

pub fn read_results(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if let Some(missing) = HEADER.iter().find(|h| !headers.iter().any(|x| x == **h)) {
        return Err(EvalError::Parse(format!("missing column `{missing}`")));
    }
    r.deserialize().map(|rec| rec.map_err(|e| EvalError::Parse(e.to_string()))).collect()
}
