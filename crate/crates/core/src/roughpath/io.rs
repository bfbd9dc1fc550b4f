//! CSV import and export of sampled and rough paths.

use std::path::Path;

use crate::error::{Error, Result};

use super::group::GroupElement2;
use super::lift::Level2RoughPath;
use super::path::SampledPath;

fn parse_row(rec: &csv::StringRecord, path: &Path) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::invalid(format!("{}: non-numeric field `{s}`", path.display()))
            })
        })
        .collect()
}

/// Reads `t,z1,...,zd`.
pub fn read_path_csv(path: impl AsRef<Path>) -> Result<SampledPath> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::invalid(format!("{}: expected header t,z1,...", path.display())));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let row = parse_row(&rec?, path)?;
        times.push(row[0]);
        values.extend_from_slice(&row[1..]);
    }
    SampledPath::new(times, values, width - 1)
}

pub fn write_path_csv(path: impl AsRef<Path>, z: &SampledPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=z.dim()).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for k in 0..z.len() {
        let mut row = vec![z.times()[k].to_string()];
        row.extend(z.value(k).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Writes `s,t,inc_1..inc_d,level2_11,level2_12,...` (level 2 row-major).
pub fn write_rough_csv(path: impl AsRef<Path>, x: &Level2RoughPath) -> Result<()> {
    let d = x.dim();
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["s".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("inc_{i}")));
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("level2_{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for (k, e) in x.elements().iter().enumerate() {
        let mut row = vec![x.times()[k].to_string(), x.times()[k + 1].to_string()];
        row.extend(e.inc().iter().map(f64::to_string));
        row.extend(e.level2().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_rough_csv(path: impl AsRef<Path>) -> Result<Level2RoughPath> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let width = rdr.headers()?.len();
    // width = 2 + d + d²
    let d = (1..=8).find(|d| 2 + d + d * d == width).ok_or_else(|| {
        Error::invalid(format!("{}: {width} columns do not match s,t,inc,level2", path.display()))
    })?;
    let mut times = vec![0.0];
    let mut elements = Vec::new();
    for rec in rdr.records() {
        let row = parse_row(&rec?, path)?;
        if (row[0] - times.last().unwrap()).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "{}: interval starting at {} does not continue the partition",
                path.display(),
                row[0]
            )));
        }
        times.push(row[1]);
        elements.push(GroupElement2::new(row[2..2 + d].to_vec(), row[2 + d..].to_vec())?);
    }
    Level2RoughPath::new(times, elements)
}
