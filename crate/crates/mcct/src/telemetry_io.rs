//! Telemetry on disk: JSON lines (lossless, replayable) and CSV (rows only).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use mcct_core::telemetry::{TelemetryEvent, TelemetryHeader, TelemetryRecord, TelemetryRow};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TelemetryIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(TelemetryHeader),
    Row(TelemetryRow),
    Event(TelemetryEvent),
}

/// Header first, then rows and events merged in time order (events after
/// the rows of the same instant).
pub fn write_jsonl<W: Write>(record: &TelemetryRecord, out: W) -> Result<(), TelemetryIoError> {
    let mut w = BufWriter::new(out);
    if let Some(h) = &record.header {
        serde_json::to_writer(&mut w, &Line::Header(h.clone()))?;
        w.write_all(b"\n")?;
    }
    let mut events = record.events.iter().peekable();
    for row in &record.rows {
        while let Some(e) = events.next_if(|e| e.t() < row.t) {
            serde_json::to_writer(&mut w, &Line::Event(e.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &Line::Row(row.clone()))?;
        w.write_all(b"\n")?;
    }
    for e in events {
        serde_json::to_writer(&mut w, &Line::Event(e.clone()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read>(input: R) -> Result<TelemetryRecord, TelemetryIoError> {
    let mut record = TelemetryRecord::default();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|source| TelemetryIoError::Parse { line: i + 1, source })? {
            Line::Header(h) => record.header = Some(h),
            Line::Row(r) => record.rows.push(r),
            Line::Event(e) => record.events.push(e),
        }
    }
    Ok(record)
}

pub fn save_jsonl(path: &Path, record: &TelemetryRecord) -> Result<(), TelemetryIoError> {
    write_jsonl(record, File::create(path)?)
}

pub fn load_jsonl(path: &Path) -> Result<TelemetryRecord, TelemetryIoError> {
    read_jsonl(File::open(path)?)
}

/// Rows only; absent values are empty cells.
pub fn write_csv<W: Write>(record: &TelemetryRecord, out: W) -> Result<(), TelemetryIoError> {
    let mut w = csv::Writer::from_writer(out);
    for row in &record.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TelemetryRow>, TelemetryIoError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<TelemetryRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcct_core::scenario::Scenario;
    use mcct_core::sim::run;

    fn short_run() -> TelemetryRecord {
        let mut s = Scenario::experiment_b();
        s.duration = 3.0;
        let mut rec = run(&s).unwrap();
        rec.events.push(TelemetryEvent::Perturb {
            t: 1.0,
            id: "v2".into(),
            dv: 0.5,
        });
        rec.events.push(TelemetryEvent::Obstacle {
            t: 99.0,
            x: 1.0,
            y: 2.0,
            r: 0.5,
        });
        rec
    }

    #[test]
    fn jsonl_round_trip_is_lossless() {
        let rec = short_run();
        let mut buf = Vec::new();
        write_jsonl(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"record\":\"header\""));
        let back = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, rec);
        let mut again = Vec::new();
        write_jsonl(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn csv_round_trip_keeps_rows() {
        let rec = short_run();
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("t,id,s,x,y,theta,v,v_cmd,phi_cmd,gap_to_leader,fused_x"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rec.rows);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = read_jsonl(&b"\n{\"record\":\"row\"}\n"[..]).unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
    }
}
