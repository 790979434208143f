//! Learning-curve rows and their CSV form.

use std::io::Write;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    /// Zero unless wall-clock recording was requested, so files stay reproducible.
    pub wall_seconds: f64,
    pub round_or_update: usize,
    pub metric_name: String,
    pub mean: f64,
    pub stddev: f64,
}

pub fn write_curve<W: Write>(out: W, rows: &[CurveRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["wall_seconds", "round_or_update", "metric_name", "mean", "stddev"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn curve_to_string(rows: &[CurveRow]) -> String {
    let mut buf = Vec::new();
    write_curve(&mut buf, rows).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}
