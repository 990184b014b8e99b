//! CSV, manifest and report emission.
//!
//! Floats are printed with 17 significant digits (`{:.16e}`) so every
//! value round-trips exactly; lines end in LF; the decimal separator is
//! always '.'. Each CSV gets a JSON manifest next to it
//! (`<stem>.manifest.json`) echoing the full solver configuration, so a
//! run can be reproduced bit for bit (modulo the wall-clock column).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::Serialize;

use spectrafw::error::{Error, Result};
use spectrafw::linalg::SymMatrix;
use spectrafw::solvers::{IterRow, RowSink, SolverConfig};

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CSV_HEADER: &str = "iter,wall_time_s,objective,fw_gap,eta_hat,update_rank,eigengap_est";

pub fn write_iter_row(out: &mut impl Write, row: &IterRow) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        row.iter,
        fmt_f64(row.wall_time_s),
        fmt_f64(row.objective),
        fmt_f64(row.fw_gap),
        fmt_f64(row.eta_hat),
        row.update_rank,
        fmt_f64(row.eigengap_est)
    )
}

/// Streams rows into a writer as the solver produces them. I/O errors
/// are held until [`CsvSink::finish`] because the sink trait cannot
/// fail.
pub struct CsvSink<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(CsvSink { out, error: None })
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error {
            return Err(e);
        }
        self.out.flush()
    }
}

impl<W: Write> RowSink for CsvSink<W> {
    fn row(&mut self, row: &IterRow) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = write_iter_row(&mut self.out, row) {
            self.error = Some(e);
        }
    }
}

/// Reproducibility record written next to every CSV.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub instance: String,
    pub seed: u64,
    pub started_unix_s: u64,
    pub library_version: String,
    /// Full configuration echo, one entry per run in output order.
    pub configs: Vec<SolverConfig>,
}

impl RunManifest {
    pub fn new(command: &str, instance: &Path, configs: Vec<SolverConfig>) -> Self {
        let seed = configs.first().map_or(0, |c| c.seed);
        RunManifest {
            command: command.to_string(),
            instance: instance.display().to_string(),
            seed,
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            library_version: spectrafw::VERSION.to_string(),
            configs,
        }
    }

    pub fn write_next_to(&self, csv_path: &Path) -> Result<PathBuf> {
        let path = manifest_path(csv_path);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse("manifest", e.to_string()))?;
        fs::write(&path, json + "\n")?;
        Ok(path)
    }
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// `name = value` report line on stdout.
pub fn kv(name: &str, value: impl std::fmt::Display) {
    println!("{name} = {value}");
}

/// Report line for a float, same 17-digit format as the CSVs.
pub fn kvf(name: &str, value: f64) {
    println!("{name} = {}", fmt_f64(value));
}

/// Writes a dense matrix as raw little-endian f64, row-major.
pub fn write_matrix_f64(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads an n-by-n symmetric iterate written by [`write_matrix_f64`].
pub fn read_sym_f64(path: &Path, n: usize) -> Result<SymMatrix> {
    let bytes = fs::read(path)
        .map_err(|e| Error::input(format!("cannot read iterate at {}: {e}", path.display())))?;
    let want = n * n * 8;
    if bytes.len() != want {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected {want} bytes ({n} x {n} f64), found {}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(n * n);
    for chunk in bytes.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunks_exact"));
        if !v.is_finite() {
            return Err(Error::parse(
                path.display().to_string(),
                "non-finite value in iterate",
            ));
        }
        data.push(v);
    }
    SymMatrix::new(DMatrix::from_row_slice(n, n, &data))
}
