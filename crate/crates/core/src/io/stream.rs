use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{create_output, fmt_f64};
use crate::error::{Error, Result};
use crate::sensor::{AnchorIds, MeasurementRecord, Modality};

pub fn stream_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "modality".to_string()];
    h.extend((1..=d).map(|i| format!("v{i}")));
    h.extend(["anchor_i", "anchor_j", "seq"].map(String::from));
    h
}

/// Writes records with `d` value columns; shorter values leave trailing cells empty.
pub fn write_stream<W: Write>(writer: W, records: &[MeasurementRecord], d: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(stream_header(d))?;
    for r in records {
        if r.value.len() > d {
            return Err(Error::DimensionMismatch(format!(
                "record {} has {} values, stream has {d} value columns",
                r.seq,
                r.value.len()
            )));
        }
        let mut row = vec![fmt_f64(r.t), r.modality.token().to_string()];
        row.extend((0..d).map(|i| r.value.get(i).map(|v| fmt_f64(*v)).unwrap_or_default()));
        let (ai, aj) = match r.anchors {
            AnchorIds::None => (String::new(), String::new()),
            AnchorIds::One(i) => (i.to_string(), String::new()),
            AnchorIds::Pair(i, j) => (i.to_string(), j.to_string()),
        };
        row.extend([ai, aj, r.seq.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stream_file(path: &Path, records: &[MeasurementRecord], d: usize, force: bool) -> Result<()> {
    write_stream(create_output(path, force)?, records, d)
}

fn violation(line: usize, message: impl Into<String>) -> Error {
    Error::SchemaViolation { line, message: message.into() }
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = header.iter().collect();
    let d = cols.len().saturating_sub(5);
    if cols.len() < 6 || cols != stream_header(d).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(violation(1, format!("expected header t,modality,v1..vD,anchor_i,anchor_j,seq, got {cols:?}")));
    }
    Ok(d)
}

/// Parses and validates a stream: header, modality tokens, value/anchor
/// shapes and `(t, seq)` order. Errors carry the 1-based file line.
pub fn read_stream<R: Read>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let d = check_header(rdr.headers()?)?;
    let mut out: Vec<MeasurementRecord> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != d + 5 {
            return Err(violation(line, format!("expected {} fields, found {}", d + 5, row.len())));
        }
        let t: f64 = row[0].trim().parse().map_err(|_| violation(line, format!("bad timestamp {:?}", &row[0])))?;
        let modality: Modality = row[1].trim().parse().map_err(|e: String| violation(line, e))?;
        let cells: Vec<&str> = (0..d).map(|i| row[2 + i].trim()).collect();
        let n = cells.iter().take_while(|c| !c.is_empty()).count();
        if cells[n..].iter().any(|c| !c.is_empty()) {
            return Err(violation(line, "value columns have a gap"));
        }
        let values = cells[..n]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| violation(line, format!("bad value {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let anchor = |c: &str| -> Result<Option<u32>> {
            let c = c.trim();
            if c.is_empty() {
                Ok(None)
            } else {
                c.parse().map(Some).map_err(|_| violation(line, format!("bad anchor id {c:?}")))
            }
        };
        let anchors = match (anchor(&row[d + 2])?, anchor(&row[d + 3])?) {
            (None, None) => AnchorIds::None,
            (Some(i), None) => AnchorIds::One(i),
            (Some(i), Some(j)) => AnchorIds::Pair(i, j),
            (None, Some(_)) => return Err(violation(line, "anchor_j without anchor_i")),
        };
        let seq: u64 = row[d + 4].trim().parse().map_err(|_| violation(line, format!("bad seq {:?}", &row[d + 4])))?;
        let record = MeasurementRecord::new(t, modality, DVector::from_vec(values), anchors, seq)
            .map_err(|e| violation(line, e.to_string()))?;
        if let Some(prev) = out.last() {
            if (record.t, record.seq) <= (prev.t, prev.seq) {
                return Err(violation(line, "rows are not sorted by (t, seq)"));
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_stream_file(path: &Path) -> Result<Vec<MeasurementRecord>> {
    read_stream(std::fs::File::open(path)?)
}
