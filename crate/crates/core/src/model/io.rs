//! On-disk instance format: a JSON manifest next to raw little-endian
//! f64 arrays.
//!
//! Layout of a saved instance directory:
//! - `manifest.json` — dimensions, trace bound, generator metadata, and
//!   the list of data files with their shapes.
//! - `a.f64` — measurement vectors, one per row (m x n, row-major).
//! - `y.f64` — measurement targets (m entries).
//! - `c_matrix.f64` — optional linear term (n x n, row-major).
//! - `u_nat.f64` — optional planted factor (n x r, row-major).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{GroundTruth, OuterFunction, ProblemInstance, SensingMap};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    n: usize,
    m: usize,
    tau: f64,
    r_nat: Option<usize>,
    noise_c: Option<f64>,
    seed: Option<u64>,
    has_ground_truth: bool,
    files: Vec<FileEntry>,
}

impl Manifest {
    fn entry(&self, name: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.name == name)
    }

    fn require(&self, name: &str) -> Result<&FileEntry> {
        self.entry(name)
            .ok_or_else(|| Error::parse("manifest.files", format!("missing entry for {name}")))
    }
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(dir: &Path, entry: &FileEntry) -> Result<Vec<f64>> {
    let path = dir.join(&entry.name);
    let bytes = fs::read(&path)?;
    let want = entry
        .rows
        .checked_mul(entry.cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::parse(entry.name.clone(), "shape overflows"))?;
    if bytes.len() != want {
        return Err(Error::parse(
            entry.name.clone(),
            format!(
                "expected {want} bytes ({} x {} f64), found {}",
                entry.rows,
                entry.cols,
                bytes.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(entry.rows * entry.cols);
    for chunk in bytes.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunks_exact"));
        if !v.is_finite() {
            return Err(Error::parse(entry.name.clone(), "non-finite value"));
        }
        out.push(v);
    }
    Ok(out)
}

/// Writes `inst` into `dir` (created if needed). Only quadratic-sensing
/// instances with a squared-distance outer function have an on-disk
/// representation; anything else is rejected.
pub fn save_instance(inst: &ProblemInstance, dir: &Path) -> Result<()> {
    let map = inst.map().as_sensing().ok_or_else(|| {
        Error::input("only instances with explicit measurement vectors can be saved")
    })?;
    let y = inst.outer().half_squared_target().ok_or_else(|| {
        Error::input("only squared-distance outer functions can be saved")
    })?;
    fs::create_dir_all(dir)?;

    let n = inst.n();
    let m = inst.m();
    let a_t = map.vectors();
    let mut files = vec![
        FileEntry {
            name: "a.f64".into(),
            rows: m,
            cols: n,
        },
        FileEntry {
            name: "y.f64".into(),
            rows: m,
            cols: 1,
        },
    ];
    write_f64s(
        &dir.join("a.f64"),
        (0..m).flat_map(|i| (0..n).map(move |j| a_t[(j, i)])),
    )?;
    write_f64s(&dir.join("y.f64"), y.iter().copied())?;

    if let Some(c) = inst.c_matrix() {
        files.push(FileEntry {
            name: "c_matrix.f64".into(),
            rows: n,
            cols: n,
        });
        let cm = c.as_matrix();
        write_f64s(
            &dir.join("c_matrix.f64"),
            (0..n).flat_map(|i| (0..n).map(move |j| cm[(i, j)])),
        )?;
    }

    let truth = inst.ground_truth();
    if let Some(t) = truth {
        let r = t.u_nat.ncols();
        files.push(FileEntry {
            name: "u_nat.f64".into(),
            rows: n,
            cols: r,
        });
        write_f64s(
            &dir.join("u_nat.f64"),
            (0..n).flat_map(|i| (0..r).map(move |j| t.u_nat[(i, j)])),
        )?;
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n,
        m,
        tau: inst.tau(),
        r_nat: truth.map(|t| t.u_nat.ncols()),
        noise_c: truth.map(|t| t.noise_c),
        seed: truth.map(|t| t.seed),
        has_ground_truth: truth.is_some(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::parse("manifest", e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Reads an instance directory written by [`save_instance`], validating
/// shapes and finiteness along the way.
pub fn load_instance(dir: &Path) -> Result<ProblemInstance> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse("manifest", e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            "manifest.format_version",
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    if manifest.n == 0 {
        return Err(Error::parse("manifest.n", "dimension must be positive"));
    }
    if !(manifest.tau > 0.0) || !manifest.tau.is_finite() {
        return Err(Error::parse("manifest.tau", "trace bound must be positive"));
    }
    let (n, m) = (manifest.n, manifest.m);

    let a_entry = manifest.require("a.f64")?;
    if (a_entry.rows, a_entry.cols) != (m, n) {
        return Err(Error::parse(
            "a.f64",
            format!(
                "shape {} x {} does not match manifest dimensions {m} x {n}",
                a_entry.rows, a_entry.cols
            ),
        ));
    }
    let a_data = read_f64s(dir, a_entry)?;
    let mut a_t = DMatrix::zeros(n, m);
    for i in 0..m {
        for j in 0..n {
            a_t[(j, i)] = a_data[i * n + j];
        }
    }

    let y_entry = manifest.require("y.f64")?;
    if (y_entry.rows, y_entry.cols) != (m, 1) {
        return Err(Error::parse(
            "y.f64",
            format!("shape {} x {} does not match m = {m}", y_entry.rows, y_entry.cols),
        ));
    }
    let y = DVector::from_vec(read_f64s(dir, y_entry)?);

    let c_matrix = match manifest.entry("c_matrix.f64") {
        None => None,
        Some(entry) => {
            if (entry.rows, entry.cols) != (n, n) {
                return Err(Error::parse(
                    "c_matrix.f64",
                    format!("shape {} x {} does not match n = {n}", entry.rows, entry.cols),
                ));
            }
            let data = read_f64s(dir, entry)?;
            let cm = DMatrix::from_row_slice(n, n, &data);
            Some(SymMatrix::new(cm).map_err(|e| Error::parse("c_matrix.f64", e.to_string()))?)
        }
    };

    let ground_truth = if manifest.has_ground_truth {
        let r = manifest
            .r_nat
            .ok_or_else(|| Error::parse("manifest.r_nat", "missing planted rank"))?;
        if r == 0 || r > n {
            return Err(Error::parse("manifest.r_nat", "planted rank out of range"));
        }
        let entry = manifest.require("u_nat.f64")?;
        if (entry.rows, entry.cols) != (n, r) {
            return Err(Error::parse(
                "u_nat.f64",
                format!(
                    "shape {} x {} does not match {n} x {r}",
                    entry.rows, entry.cols
                ),
            ));
        }
        let data = read_f64s(dir, entry)?;
        let u_nat = DMatrix::from_row_slice(n, r, &data);
        Some(GroundTruth {
            u_nat,
            noise_c: manifest
                .noise_c
                .ok_or_else(|| Error::parse("manifest.noise_c", "missing noise ratio"))?,
            seed: manifest
                .seed
                .ok_or_else(|| Error::parse("manifest.seed", "missing seed"))?,
        })
    } else {
        None
    };

    let map = SensingMap::from_vectors(a_t)?;
    ProblemInstance::new(
        OuterFunction::half_squared_distance(y),
        Arc::new(map),
        c_matrix,
        manifest.tau,
        ground_truth,
    )
}
