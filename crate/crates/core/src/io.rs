//! On-disk formats: CSV matrices and vectors, a JSON dataset manifest,
//! JSON-lines records, per-iteration trace dumps and packing sets.
//!
//! CSV floats are written with 17 significant digits, which round-trips every
//! `f64` exactly. JSON output uses the shortest round-tripping representation.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::asura::AsuraTrace;
use crate::error::{Error, Result};
use crate::instances::{signs_to_mask, PackingSet};
use crate::linalg::{Dataset, Matrix};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    for i in 0..m.rows() {
        let line = (0..m.cols())
            .map(|j| fmt_f64(m[(i, j)]))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV matrix. An empty file is a matrix with zero rows and `cols` columns.
pub fn read_matrix_csv(path: &Path, cols: usize) -> Result<Matrix> {
    let mut entries = Vec::new();
    let mut rows = 0;
    for (lineno, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = entries.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, format!("line {}: bad number {field:?}", lineno + 1))
            })?;
            entries.push(v);
        }
        if entries.len() - before != cols {
            return Err(Error::parse(
                path,
                format!("line {}: expected {cols} fields, got {}", lineno + 1, entries.len() - before),
            ));
        }
        rows += 1;
    }
    Matrix::from_row_major(rows, cols, entries).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for x in v {
        writeln!(w, "{}", fmt_f64(*x)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(path, format!("line {}: bad number {t:?}", lineno + 1)))?;
        if !v.is_finite() {
            return Err(Error::parse(path, format!("line {}: non-finite value", lineno + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

/// Dataset manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub d: usize,
    pub n1: usize,
    pub n2: usize,
    pub path_x1: String,
    pub path_x2: String,
    pub path_y2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_y1_hidden: Option<String>,
}

/// Writes `<stem>.json` with `<stem>_x1.csv`, `<stem>_x2.csv`, `<stem>_y2.csv`
/// and, when given, `<stem>_y1_hidden.csv` into `dir`. Returns the manifest path.
pub fn save_dataset(dir: &Path, stem: &str, ds: &Dataset, hidden: Option<&[f64]>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = |suffix: &str| format!("{stem}_{suffix}.csv");
    let manifest = Manifest {
        d: ds.dim(),
        n1: ds.n_unlabeled(),
        n2: ds.n_labeled(),
        path_x1: name("x1"),
        path_x2: name("x2"),
        path_y2: name("y2"),
        path_y1_hidden: hidden.map(|_| name("y1_hidden")),
    };
    write_matrix_csv(&dir.join(&manifest.path_x1), ds.x_unlabeled())?;
    write_matrix_csv(&dir.join(&manifest.path_x2), ds.x_labeled())?;
    write_vector_csv(&dir.join(&manifest.path_y2), ds.y_labeled())?;
    if let (Some(h), Some(p)) = (hidden, &manifest.path_y1_hidden) {
        if h.len() != ds.n_unlabeled() {
            return Err(Error::DimensionMismatch(format!(
                "{} hidden labels for {} unlabeled rows",
                h.len(),
                ds.n_unlabeled()
            )));
        }
        write_vector_csv(&dir.join(p), h)?;
    }
    let path = dir.join(format!("{stem}.json"));
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::parse(&path, e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a dataset and, when the manifest lists them, its hidden labels.
pub fn load_dataset(manifest_path: &Path) -> Result<(Dataset, Option<Vec<f64>>)> {
    let manifest: Manifest = serde_json::from_reader(open(manifest_path)?)
        .map_err(|e| Error::parse(manifest_path, e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let x1 = read_matrix_csv(&base.join(&manifest.path_x1), manifest.d)?;
    let x2 = read_matrix_csv(&base.join(&manifest.path_x2), manifest.d)?;
    let y2 = read_vector_csv(&base.join(&manifest.path_y2))?;
    if x1.rows() != manifest.n1 || x2.rows() != manifest.n2 {
        return Err(Error::parse(
            manifest_path,
            format!(
                "manifest declares n1 = {}, n2 = {} but files hold {} and {} rows",
                manifest.n1,
                manifest.n2,
                x1.rows(),
                x2.rows()
            ),
        ));
    }
    let hidden = manifest
        .path_y1_hidden
        .as_ref()
        .map(|p| read_vector_csv(&base.join(p)))
        .transpose()?;
    if let Some(h) = &hidden {
        if h.len() != manifest.n1 {
            return Err(Error::parse(
                manifest_path,
                format!("{} hidden labels for {} unlabeled rows", h.len(), manifest.n1),
            ));
        }
    }
    let ds = Dataset::new(x1, x2, y2).map_err(|e| Error::parse(manifest_path, e.to_string()))?;
    Ok((ds, hidden))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::parse(path, e.to_string()))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends one record; the file is created when missing.
pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(item).map_err(|e| Error::parse(path, e.to_string()))?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (lineno, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(out)
}

/// The per-iteration trace dump record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub j: usize,
    pub phi_id: f64,
    pub sampled_index: usize,
    pub p_j: f64,
    pub u_j: f64,
    pub l_j: f64,
}

pub fn trace_lines(trace: &AsuraTrace) -> Vec<TraceLine> {
    trace
        .records
        .iter()
        .map(|r| TraceLine {
            j: r.j,
            phi_id: r.phi_id,
            sampled_index: r.sampled_index,
            p_j: r.p_j,
            u_j: r.u_j,
            l_j: r.l_j,
        })
        .collect()
}

pub fn write_trace_dump(path: &Path, trace: &AsuraTrace) -> Result<()> {
    write_jsonl(path, &trace_lines(trace))
}

/// Full traces, one JSON object per line, for offline verification.
pub fn write_traces(path: &Path, traces: &[AsuraTrace]) -> Result<()> {
    write_jsonl(path, traces)
}

pub fn read_traces(path: &Path) -> Result<Vec<AsuraTrace>> {
    read_jsonl(path)
}

pub fn write_packing(path: &Path, packing: &PackingSet) -> Result<()> {
    let mut w = create(path)?;
    for signs in packing.sign_vectors() {
        let line = signs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads sign vectors back as masks; `separation` is not stored in the file.
pub fn read_packing(path: &Path, separation: f64) -> Result<PackingSet> {
    let mut members = Vec::new();
    let mut d = None;
    for (lineno, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let signs = line
            .split(',')
            .map(|f| f.trim().parse::<i8>())
            .collect::<std::result::Result<Vec<i8>, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        if *d.get_or_insert(signs.len()) != signs.len() {
            return Err(Error::parse(path, format!("line {}: length differs", lineno + 1)));
        }
        members.push(signs_to_mask(&signs).map_err(|e| Error::parse(path, e.to_string()))?);
    }
    Ok(PackingSet {
        d: d.unwrap_or(0),
        members,
        separation,
    })
}
