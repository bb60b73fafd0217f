//! CSV formats.
//!
//! Streams are `id,timestamp,c1,...,cd`; weighted sets append a `weight`
//! column. Readers accept an optional header line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metric::{Point, WeightedPoint};

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("`{field}`: {e}"),
    })
}

fn parse_u64(field: &str, line: usize) -> Result<u64> {
    field.trim().parse::<u64>().map_err(|e| Error::Parse {
        line,
        msg: format!("`{field}`: {e}"),
    })
}

/// Incremental reader yielding one record per line, so a stream never has to
/// be held in memory.
pub struct CsvPoints<R> {
    records: csv::StringRecordsIntoIter<R>,
    weighted: bool,
    dim: Option<usize>,
    line: usize,
}

impl<R: std::io::Read> CsvPoints<R> {
    pub fn new(reader: R, weighted: bool) -> Self {
        let records = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        CsvPoints {
            records,
            weighted,
            dim: None,
            line: 0,
        }
    }

    fn parse(&mut self, rec: &csv::StringRecord) -> Result<WeightedPoint> {
        let line = self.line;
        let extra = 2 + usize::from(self.weighted);
        if rec.len() <= extra {
            return Err(Error::Parse {
                line,
                msg: format!("expected at least {} columns, got {}", extra + 1, rec.len()),
            });
        }
        let dim = rec.len() - extra;
        match self.dim {
            Some(d) if d != dim => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} coordinates, got {}", d, dim),
                })
            }
            _ => self.dim = Some(dim),
        }
        let id = parse_u64(&rec[0], line)?;
        let ts = parse_u64(&rec[1], line)?;
        let coords = (2..2 + dim)
            .map(|i| parse_f64(&rec[i], line))
            .collect::<Result<Vec<_>>>()?;
        let weight = if self.weighted {
            let w = parse_f64(&rec[rec.len() - 1], line)?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Parse {
                    line,
                    msg: format!("weight {w} must be positive and finite"),
                });
            }
            w
        } else {
            1.0
        };
        Ok(WeightedPoint::new(Point::new(id, ts, coords), weight))
    }
}

impl<R: std::io::Read> Iterator for CsvPoints<R> {
    type Item = Result<WeightedPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let rec = match self.records.next()? {
                Ok(r) => r,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let is_header = self.line == 1 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err());
            if is_header {
                continue;
            }
            return Some(self.parse(&rec));
        }
    }
}

pub fn stream_reader(path: &Path) -> Result<CsvPoints<BufReader<File>>> {
    Ok(CsvPoints::new(BufReader::new(File::open(path)?), false))
}

pub fn read_stream_csv(path: &Path) -> Result<Vec<Point>> {
    stream_reader(path)?.map(|r| r.map(|w| w.point)).collect()
}

pub fn read_weighted_csv(path: &Path) -> Result<Vec<WeightedPoint>> {
    CsvPoints::new(BufReader::new(File::open(path)?), true).collect()
}

pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<Point>> {
    CsvPoints::new(reader, false).map(|r| r.map(|w| w.point)).collect()
}

fn header(dim: usize, weighted: bool) -> Vec<String> {
    let mut h = vec!["id".to_string(), "timestamp".to_string()];
    h.extend((1..=dim).map(|i| format!("c{i}")));
    if weighted {
        h.push("weight".to_string());
    }
    h
}

fn record(p: &Point, weight: Option<f64>) -> Vec<String> {
    let mut r = vec![p.id.to_string(), p.timestamp.to_string()];
    r.extend(p.coords.iter().map(|c| c.to_string()));
    if let Some(w) = weight {
        r.push(w.to_string());
    }
    r
}

pub fn write_stream_csv<'a, W: Write>(points: impl IntoIterator<Item = &'a Point>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut wrote_header = false;
    for p in points {
        if !wrote_header {
            w.write_record(header(p.dim(), false))?;
            wrote_header = true;
        }
        w.write_record(record(p, None))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_weighted_csv<W: Write>(points: &[WeightedPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = points.first() {
        w.write_record(header(first.point.dim(), true))?;
    }
    for p in points {
        w.write_record(record(&p.point, Some(p.weight)))?;
    }
    w.flush()?;
    Ok(())
}
