//! CSV files with fixed headers. Floats are written in shortest round-trip
//! form, so reading a file back reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Sample;
use crate::solve::SolvePoint;
use crate::sweep::{RunSummary, SweepRow};

/// A row type with a fixed CSV header.
pub trait CsvRecord: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

impl CsvRecord for Sample {
    const HEADER: &'static [&'static str] = &["event", "t", "c", "cc", "cd", "dd"];
}

impl CsvRecord for RunSummary {
    const HEADER: &'static [&'static str] =
        &["seed", "terminated", "events", "c", "cc", "cd", "dd"];
}

impl CsvRecord for SolvePoint {
    const HEADER: &'static [&'static str] = &["t", "c", "cc", "cd", "dd"];
}

impl CsvRecord for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "method",
        "variant",
        "u",
        "w",
        "rho",
        "R",
        "mean_c",
        "std_c",
        "mean_cc",
        "mean_dd",
        "mean_events",
        "capped_frac",
    ];
}

/// Expected (or averaged) number of nodes of each state with degree `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub k: usize,
    pub c_count: f64,
    pub d_count: f64,
}

impl CsvRecord for DegreeRow {
    const HEADER: &'static [&'static str] = &["k", "c_count", "d_count"];
}

/// Zips two histograms indexed by degree, padding the shorter with zeros.
pub fn degree_rows(hist_c: &[f64], hist_d: &[f64]) -> Vec<DegreeRow> {
    let len = hist_c.len().max(hist_d.len());
    (0..len)
        .map(|k| DegreeRow {
            k,
            c_count: hist_c.get(k).copied().unwrap_or(0.0),
            d_count: hist_d.get(k).copied().unwrap_or(0.0),
        })
        .collect()
}

pub fn write_csv<T: CsvRecord, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    wtr.write_record(T::HEADER)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads rows, rejecting files whose header differs from `T::HEADER`.
pub fn read_csv<T: CsvRecord, R: Read>(input: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(T::HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            T::HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_csv_file<T: CsvRecord>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), rows)
}

pub fn read_csv_file<T: CsvRecord>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    read_csv(BufReader::new(File::open(path)?))
}
