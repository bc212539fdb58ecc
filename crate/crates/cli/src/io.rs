use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use monoloc::{ParameterBox, SensorDataset};
use serde::Serialize;

/// Sensor table with header `x1,..,xd,y`.
pub fn read_sensors<R: Read>(reader: R, bounds: Option<ParameterBox>) -> Result<SensorDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().context("reading CSV header")?.clone();
    let cols = headers.len();
    if cols < 2 || &headers[cols - 1] != "y" {
        bail!("sensor CSV header must be x1,..,xd,y (got {:?})", headers.iter().collect::<Vec<_>>());
    }
    for (k, h) in headers.iter().take(cols - 1).enumerate() {
        if h != format!("x{}", k + 1) {
            bail!("sensor CSV column {} must be named x{}, found {h:?}", k + 1, k + 1);
        }
    }
    let dim = cols - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("CSV row {}", line + 2))?;
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .with_context(|| format!("row {}, column {}: bad number {field:?}", line + 2, k + 1))?;
            if !v.is_finite() {
                bail!("row {}, column {}: non-finite value", line + 2, k + 1);
            }
            if k < dim {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    Ok(SensorDataset::new(x, y, dim, bounds)?)
}

pub fn read_sensor_file(path: &Path, bounds: Option<ParameterBox>) -> Result<SensorDataset> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_sensors(f, bounds).with_context(|| format!("reading {}", path.display()))
}

/// Pretty JSON to `path`, or stdout when absent.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
        }
        None => {
            serde_json::to_writer_pretty(std::io::stdout().lock(), value)?;
            println!();
        }
    }
    Ok(())
}
