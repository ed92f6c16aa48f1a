//! CSV output. Numbers use Rust's shortest round-trip formatting, so equal
//! results always produce identical bytes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::eval::evidence::EvidenceReport;
use crate::eval::roar::RoarCurve;
use crate::eval::scaling::ScalingResult;

pub const SCALING_HEADER: [&str; 5] = ["design", "n", "seed", "method", "correlation"];
pub const ROAR_HEADER: [&str; 5] = [
    "method",
    "fraction",
    "repeat",
    "raw_accuracy",
    "normalized_accuracy",
];
pub const EVIDENCE_HEADER: [&str; 4] = ["concept_id", "rho_x", "rho_y", "x_beats_y"];

/// Written in place of a value that could not be computed.
pub const MISSING: &str = "NA";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| x.to_string())
}

pub fn write_scaling<W: Write>(out: W, result: &ScalingResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCALING_HEADER)?;
    for r in &result.records {
        w.write_record([
            result.design.name().to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.method.name().to_string(),
            opt(r.correlation),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roar<W: Write>(out: W, curve: &RoarCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROAR_HEADER)?;
    for r in &curve.records {
        w.write_record([
            r.method.name().to_string(),
            r.fraction.to_string(),
            r.repeat.to_string(),
            r.raw_accuracy.to_string(),
            r.normalized_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_evidence<W: Write>(out: W, report: &EvidenceReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVIDENCE_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.concept_id.to_string(),
            opt(r.rho_x),
            opt(r.rho_y),
            r.x_beats_y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `path` and hands it to one of the writers above.
pub fn write_to_path<T>(path: &Path, value: &T, writer: fn(File, &T) -> Result<()>) -> Result<()> {
    writer(File::create(path)?, value)
}
