use crate::time::SimTime;
use sha2::{Digest, Sha256};
use std::fmt;
use std::io;
use std::path::Path;

pub const TRACE_HEADER: [&str; 5] = ["time_s", "node", "event_kind", "detail", "result"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub time: SimTime,
    pub node: String,
    pub event_kind: &'static str,
    pub detail: String,
    pub result: String,
}

/// Per-round event log. Rows are only materialised when enabled.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    enabled: bool,
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Trace {
            enabled,
            rows: Vec::new(),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn record(
        &mut self,
        time: SimTime,
        node: &str,
        event_kind: &'static str,
        detail: fmt::Arguments<'_>,
        result: impl fmt::Display,
    ) {
        if self.enabled {
            self.rows.push(TraceRow {
                time,
                node: node.to_string(),
                event_kind,
                detail: detail.to_string(),
                result: result.to_string(),
            });
        }
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.time.to_string().as_str(),
                &r.node,
                r.event_kind,
                &r.detail,
                &r.result,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), csv::Error> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Hex SHA-256 of the CSV rendering.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_csv_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disabled_trace_stays_empty() {
        let mut t = Trace::new(false);
        t.record(SimTime::ZERO, "R", "tx", format_args!("x"), "ok");
        assert!(t.is_empty());
    }

    #[test]
    fn csv_layout() {
        let mut t = Trace::new(true);
        t.record(SimTime::from_micros(1_500_000), "F", "reasm", format_args!("tag={}", 7), "BufferBusy");
        let text = String::from_utf8(t.to_csv_bytes()).unwrap();
        assert_eq!(text, "time_s,node,event_kind,detail,result\n1.500000,F,reasm,tag=7,BufferBusy\n");
    }
}
