//! Per-interval alert traces.
//!
//! JSON-lines records look like
//! `{"t":1,"severe":1,"warning":9,"logins":4,"label":1}`; CSV files carry the
//! fixed header `t,severe,warning,logins,label`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SysidError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub severe: u64,
    pub warning: u64,
    pub logins: u64,
    pub label: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Values of one channel among records with the given label.
    pub fn channel_values(&self, channel: Channel, label: u8) -> Vec<u64> {
        self.records.iter().filter(|r| r.label == label).map(|r| channel.get(r)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Severe,
    Warning,
    Logins,
}

impl Channel {
    pub fn get(self, r: &TraceRecord) -> u64 {
        match self {
            Channel::Severe => r.severe,
            Channel::Warning => r.warning,
            Channel::Logins => r.logins,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    JsonLines,
    Csv,
}

impl TraceFormat {
    /// `.csv` files are CSV; everything else is read as JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
            _ => TraceFormat::JsonLines,
        }
    }
}

/// Signed mirror of [`TraceRecord`] so negative counts can be reported by name.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    t: i64,
    severe: i64,
    warning: i64,
    logins: i64,
    label: i64,
}

impl RawRecord {
    fn check(self, line: usize) -> Result<TraceRecord, SysidError> {
        let count = |v: i64, field: &'static str| u64::try_from(v).map_err(|_| SysidError::NegativeCount { line, field });
        let label = match self.label {
            0 => 0,
            1 => 1,
            other => {
                return Err(SysidError::FileFormat { line, detail: format!("label must be 0 or 1, got {other}") })
            }
        };
        Ok(TraceRecord {
            t: count(self.t, "t")?,
            severe: count(self.severe, "severe")?,
            warning: count(self.warning, "warning")?,
            logins: count(self.logins, "logins")?,
            label,
        })
    }
}

pub fn parse_json_lines(text: &str) -> Result<Trace, SysidError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| SysidError::FileFormat { line: line_no, detail: e.to_string() })?;
        records.push(raw.check(line_no)?);
    }
    Ok(Trace { records })
}

pub fn parse_csv(text: &str) -> Result<Trace, SysidError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| SysidError::FileFormat { line: 1, detail: e.to_string() })?;
    if !text.trim().is_empty() && header.iter().collect::<Vec<_>>() != ["t", "severe", "warning", "logins", "label"] {
        return Err(SysidError::FileFormat { line: 1, detail: "expected header t,severe,warning,logins,label".into() });
    }
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        let line_no = i + 2;
        let raw = row.map_err(|e| SysidError::FileFormat { line: line_no, detail: e.to_string() })?;
        records.push(raw.check(line_no)?);
    }
    Ok(Trace { records })
}

pub fn ingest_traces(path: &Path, format: TraceFormat) -> Result<Trace, SysidError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SysidError::Io { path: path.display().to_string(), detail: e.to_string() })?;
    match format {
        TraceFormat::JsonLines => parse_json_lines(&text),
        TraceFormat::Csv => parse_csv(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_is_preserved() {
        let t = parse_json_lines(r#"{"t":1,"severe":1,"warning":9,"logins":4,"label":1}"#).unwrap();
        assert_eq!(t.records, vec![TraceRecord { t: 1, severe: 1, warning: 9, logins: 4, label: 1 }]);
    }

    #[test]
    fn empty_input_is_empty_trace() {
        assert!(parse_json_lines("").unwrap().is_empty());
        assert!(parse_csv("").unwrap().is_empty());
    }

    #[test]
    fn negative_count_names_line_and_field() {
        let text = "{\"t\":1,\"severe\":0,\"warning\":0,\"logins\":0,\"label\":0}\n{\"t\":2,\"severe\":-1,\"warning\":0,\"logins\":0,\"label\":0}";
        assert_eq!(parse_json_lines(text), Err(SysidError::NegativeCount { line: 2, field: "severe" }));
    }

    #[test]
    fn csv_matches_json() {
        let csv = "t,severe,warning,logins,label\n1,1,9,4,1\n2,0,3,0,0\n";
        let t = parse_csv(csv).unwrap();
        assert_eq!(t.records[0], TraceRecord { t: 1, severe: 1, warning: 9, logins: 4, label: 1 });
        assert_eq!(t.len(), 2);
        assert!(matches!(parse_csv("t,severe\n1,2\n"), Err(SysidError::FileFormat { line: 1, .. })));
    }

    #[test]
    fn bad_json_reports_line() {
        let text = "{\"t\":1,\"severe\":0,\"warning\":0,\"logins\":0,\"label\":0}\nnot json";
        assert!(matches!(parse_json_lines(text), Err(SysidError::FileFormat { line: 2, .. })));
    }
}
