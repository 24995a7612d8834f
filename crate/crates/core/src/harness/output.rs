//! CSV and JSON writers for run results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{SummaryRow, SweepRow, Trace};
use crate::error::Result;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CRAN_OUT_DIR";

#[derive(Serialize)]
struct FlatRow<'a> {
    policy: &'a str,
    drop_weight: f64,
    lambda: f64,
    replicate: u64,
    avg_queue_len: f64,
    avg_drop_rate: f64,
    objective: f64,
    handover_count: u64,
    delivered_total: u64,
    slot_count: u64,
    avg_arrival_rate: f64,
    mean_sojourn: Option<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One line per run.
pub fn write_runs_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        let m = &r.metrics;
        w.serialize(FlatRow {
            policy: &r.policy,
            drop_weight: r.drop_weight,
            lambda: r.lambda,
            replicate: r.replicate,
            avg_queue_len: m.avg_queue_len,
            avg_drop_rate: m.avg_drop_rate,
            objective: m.objective,
            handover_count: m.handover_count,
            delivered_total: m.delivered_total,
            slot_count: m.slot_count,
            avg_arrival_rate: m.avg_arrival_rate,
            mean_sojourn: m.mean_sojourn,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `slot` followed by one column per tracked entry.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["slot".to_string()];
    header.extend(trace.entries.iter().map(|e| e.label()));
    w.write_record(&header)?;
    for row in &trace.rows {
        let mut rec = vec![row.slot.to_string()];
        rec.extend(row.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
