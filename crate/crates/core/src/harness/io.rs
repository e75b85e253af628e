//! CSV ingestion and report writing.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::data::{Label, Sample};
use crate::error::{Error, Result};

fn parse_field(value: &str, row: usize, column: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidSample { index: row, reason: format!("column {column}: {value:?} is not a finite number") })
}

fn parse_bit(value: &str, row: usize, column: &str) -> Result<bool> {
    match parse_field(value, row, column)? {
        v if v == 0.0 => Ok(false),
        v if v == 1.0 => Ok(true),
        v => Err(Error::InvalidSample { index: row, reason: format!("column {column}: {v} is not 0 or 1") }),
    }
}

fn headers<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Confidences and error bits from a `p_hat,err` CSV.
pub fn read_selective<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let h = headers(&mut rdr)?;
    if h != ["p_hat", "err"] {
        return Err(Error::InvalidArgument(format!("expected header p_hat,err, got {}", h.join(","))));
    }
    let (mut p, mut e) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ph = parse_field(&rec[0], row, "p_hat")?;
        if !(0.0..=1.0).contains(&ph) {
            return Err(Error::InvalidSample { index: row, reason: format!("p_hat {ph} outside [0, 1]") });
        }
        p.push(ph);
        e.push(parse_bit(&rec[1], row, "err")?);
    }
    if p.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((p, e))
}

pub fn read_selective_path(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    read_selective(File::open(path)?)
}

/// A debiasing table: group indicators as features, outcomes as real
/// labels, and the base predictions alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct DebiasTable {
    pub group_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub f: Vec<f64>,
}

/// Reads `f,y,<group>...` with 0/1 group columns.
pub fn read_debias<R: Read>(reader: R) -> Result<DebiasTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let h = headers(&mut rdr)?;
    if h.len() < 3 || h[0] != "f" || h[1] != "y" {
        return Err(Error::InvalidArgument(format!("expected header f,y,g1,...,gd, got {}", h.join(","))));
    }
    let group_names = h[2..].to_vec();
    let (mut samples, mut f) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != h.len() {
            return Err(Error::DimensionMismatch { expected: h.len(), got: rec.len() });
        }
        f.push(parse_field(&rec[0], row, "f")?);
        let y = parse_field(&rec[1], row, "y")?;
        let x = (2..h.len())
            .map(|k| parse_bit(&rec[k], row, &h[k]).map(|b| b as u8 as f64))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample::new(x, Label::Real(y)));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(DebiasTable { group_names, samples, f })
}

pub fn read_debias_path(path: &Path) -> Result<DebiasTable> {
    read_debias(File::open(path)?)
}

/// Writes serializable rows as CSV with a header from the field names.
pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_json_path<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_json(&mut w, value)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selective_round_trip() {
        let (p, e) = read_selective("p_hat,err\n0.9,0\n0.2,1\n".as_bytes()).unwrap();
        assert_eq!(p, vec![0.9, 0.2]);
        assert_eq!(e, vec![false, true]);
    }

    #[test]
    fn selective_rejects_bad_rows() {
        assert!(read_selective("p,err\n0.9,0\n".as_bytes()).is_err());
        assert!(read_selective("p_hat,err\n0.9,2\n".as_bytes()).is_err());
        assert!(read_selective("p_hat,err\n1.5,0\n".as_bytes()).is_err());
        assert!(read_selective("p_hat,err\nnan,0\n".as_bytes()).is_err());
        assert!(matches!(read_selective("p_hat,err\n".as_bytes()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn debias_reads_group_names() {
        let t = read_debias("f,y,black,male\n0.3,1,1,0\n0.5,0,0,1\n".as_bytes()).unwrap();
        assert_eq!(t.group_names, vec!["black", "male"]);
        assert_eq!(t.f, vec![0.3, 0.5]);
        assert_eq!(&*t.samples[0].x, &[1.0, 0.0]);
        assert!(read_debias("f,y,g\n0.3,1,0.5\n".as_bytes()).is_err());
        assert!(read_debias("y,f,g\n0.3,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_writer_uses_field_names() {
        #[derive(Serialize)]
        struct Row {
            j: usize,
            v: f64,
        }
        let mut buf = Vec::new();
        write_csv(&mut buf, &[Row { j: 1, v: 0.5 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "j,v\n1,0.5\n");
    }
}
