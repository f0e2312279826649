use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use super::fmt_f64;
use crate::error::{Error, Result};
use crate::filter::{ControlPolygon, FilterStepReport};
use crate::simulation::{OutlierEvent, TruthSample, TruthTrajectory};

fn columns(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}{i}"))
}

fn vector_cells(v: &DVector<f64>) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| fmt_f64(*x))
}

/// Writes a header and string rows as CSV.
pub fn write_table<W: Write>(writer: W, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn violation(line: usize, message: impl Into<String>) -> Error {
    Error::SchemaViolation { line, message: message.into() }
}

/// Reads a numeric table, checking the header against `expected`.
fn read_numeric<R: Read>(reader: R, expected: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.len() < expected.len() || header[..expected.len()] != *expected {
        return Err(violation(1, format!("expected header starting with {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let values = row
            .iter()
            .take(expected.len())
            .map(|c| c.trim().parse::<f64>().map_err(|_| violation(line, format!("bad number {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

fn truth_header(d: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(columns("p", d))
        .chain(columns("v", d))
        .chain(columns("a", d))
        .collect()
}

/// `t,p1..pD,v1..vD,a1..aD`, one row per sample.
pub fn write_truth<W: Write>(writer: W, samples: &[TruthSample], d: usize) -> Result<()> {
    let rows = samples.iter().map(|s| {
        std::iter::once(fmt_f64(s.t))
            .chain(vector_cells(&s.position))
            .chain(vector_cells(&s.velocity))
            .chain(vector_cells(&s.acceleration))
            .collect()
    });
    write_table(writer, truth_header(d), rows)
}

pub fn read_truth<R: Read>(reader: R) -> Result<TruthTrajectory> {
    let mut buf = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut buf)?;
    let cols = buf.lines().next().map_or(0, |h| h.split(',').count());
    if cols < 4 || !(cols - 1).is_multiple_of(3) {
        return Err(violation(1, "truth header must be t,p1..pD,v1..vD,a1..aD"));
    }
    let d = (cols - 1) / 3;
    let samples = read_numeric(buf.as_bytes(), &truth_header(d))?
        .into_iter()
        .map(|r| TruthSample {
            t: r[0],
            position: DVector::from_column_slice(&r[1..1 + d]),
            velocity: DVector::from_column_slice(&r[1 + d..1 + 2 * d]),
            acceleration: DVector::from_column_slice(&r[1 + 2 * d..]),
        })
        .collect();
    TruthTrajectory::new(samples)
}

pub fn read_truth_file(path: &Path) -> Result<TruthTrajectory> {
    read_truth(std::fs::File::open(path)?)
}

/// `seq,t,modality,offset` for every injected outlier.
pub fn write_outliers<W: Write>(writer: W, outliers: &[OutlierEvent]) -> Result<()> {
    let header = ["seq", "t", "modality", "offset"].map(String::from).to_vec();
    let rows = outliers
        .iter()
        .map(|o| vec![o.seq.to_string(), fmt_f64(o.t), o.modality.token().to_string(), fmt_f64(o.offset)]);
    write_table(writer, header, rows)
}

/// Estimated position and velocity at one query time.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

fn estimate_header(d: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain(columns("p", d)).chain(columns("v", d)).collect()
}

/// `t,p1..pD,v1..vD`.
pub fn write_estimates<W: Write>(writer: W, rows: &[EstimateRow], d: usize) -> Result<()> {
    let rows = rows.iter().map(|r| {
        std::iter::once(fmt_f64(r.t))
            .chain(vector_cells(&r.position))
            .chain(vector_cells(&r.velocity))
            .collect()
    });
    write_table(writer, estimate_header(d), rows)
}

/// Reads `t` and the position columns of an estimates table.
pub fn read_estimates<R: Read>(reader: R) -> Result<Vec<(f64, DVector<f64>)>> {
    let mut buf = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut buf)?;
    let d = buf
        .lines()
        .next()
        .map_or(0, |h| h.split(',').filter(|c| c.starts_with('p')).count());
    if d == 0 {
        return Err(violation(1, "estimates header must be t,p1..pD,..."));
    }
    let expected: Vec<String> = std::iter::once("t".to_string()).chain(columns("p", d)).collect();
    Ok(read_numeric(buf.as_bytes(), &expected)?
        .into_iter()
        .map(|r| (r[0], DVector::from_column_slice(&r[1..])))
        .collect())
}

/// `index,t_knot,c1..cD`; `t_knot` is the knot each point is associated with.
pub fn write_control_points<W: Write>(writer: W, polygon: &ControlPolygon) -> Result<()> {
    let header = ["index", "t_knot"].map(String::from).into_iter().chain(columns("c", polygon.dim())).collect();
    let rows = polygon.points().iter().enumerate().map(|(i, c)| {
        [i.to_string(), fmt_f64(polygon.knot_time(i))].into_iter().chain(vector_cells(c)).collect()
    });
    write_table(writer, header, rows)
}

/// `seq,t,modality,accepted,mahalanobis_sq,innovation_norm,propagations`.
pub fn write_steps<W: Write>(writer: W, reports: &[FilterStepReport]) -> Result<()> {
    let header = ["seq", "t", "modality", "accepted", "mahalanobis_sq", "innovation_norm", "propagations"]
        .map(String::from)
        .to_vec();
    let rows = reports.iter().map(|r| {
        vec![
            r.seq.to_string(),
            fmt_f64(r.t),
            r.modality.map(|m| m.token().to_string()).unwrap_or_default(),
            r.accepted.to_string(),
            fmt_f64(r.mahalanobis_sq),
            fmt_f64(r.innovation.norm()),
            r.propagations.to_string(),
        ]
    });
    write_table(writer, header, rows)
}

pub fn write_json<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}
