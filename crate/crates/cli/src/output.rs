//! CSV and manifest writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Shortest round-trip decimal form of `x`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes a header and rows; every row must have the header's width.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: row of {} fields under {} columns", path.display(), row.len(), header.len()),
            ));
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Run record written next to the CSV files of every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Worker threads requested; 0 means the default pool.
    pub workers: usize,
    /// Samples excluded from the ensemble statistics, where an ensemble ran.
    pub excluded: Option<usize>,
    pub wall_time_s: f64,
    pub ok: bool,
    pub files: Vec<String>,
    pub summary: BTreeMap<String, serde_json::Value>,
    /// Full configuration, parseable as a config file.
    pub config: String,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut f = File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let f = File::open(dir.join("manifest.json"))?;
        Ok(serde_json::from_reader(f)?)
    }
}
