//! Plain-text artifacts and run manifests.
//!
//! Matrices are written one grid row per line, top row first, with 17
//! significant digits so that a re-import is exact. Manifests list every
//! produced file with its SHA-256 and carry no timestamps, so identical runs
//! give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fields::GridSpec;
use crate::polarimetry::{EllipseMap, FrameStack, StokesMap};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Formats a real matrix stored row-major with row 0 at the bottom of the
/// image (smallest y); the text lists the top row first.
pub fn format_matrix(nx: usize, ny: usize, data: &[f64]) -> String {
    let mut out = String::with_capacity(nx * ny * 25 + 32);
    writeln!(out, "# {nx} {ny}").unwrap();
    for j in (0..ny).rev() {
        for i in 0..nx {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", data[j * nx + i]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, grid: &GridSpec, data: &[f64]) -> Result<(), ExportError> {
    write_file(path, format_matrix(grid.nx(), grid.ny(), data).as_bytes())
}

/// Reads a matrix written by [`write_matrix`]; returns `(nx, ny, data)`.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>), ExportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_matrix(&text).map_err(|(line, msg)| ExportError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

pub fn parse_matrix(text: &str) -> Result<(usize, usize, Vec<f64>), (usize, String)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or((1, "empty file".to_string()))?;
    let dims: Vec<usize> = header
        .trim_start_matches('#')
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| (1, format!("bad header: {e}")))?;
    let [nx, ny] = dims[..] else {
        return Err((1, "header must be `# nx ny`".into()));
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(ny);
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| (n + 2, format!("{e}")))?;
        if row.len() != nx {
            return Err((n + 2, format!("expected {nx} values, found {}", row.len())));
        }
        rows.push(row);
    }
    if rows.len() != ny {
        return Err((ny + 1, format!("expected {ny} rows, found {}", rows.len())));
    }
    let mut data = vec![0.0; nx * ny];
    for (k, row) in rows.into_iter().enumerate() {
        let j = ny - 1 - k;
        data[j * nx..(j + 1) * nx].copy_from_slice(&row);
    }
    Ok((nx, ny, data))
}

/// Writes `s0.txt` … `s3.txt`; returns the file names.
pub fn write_stokes(dir: &Path, s: &StokesMap) -> Result<Vec<String>, ExportError> {
    let mut names = Vec::new();
    for (k, comp) in s.components().iter().enumerate() {
        let name = format!("s{k}.txt");
        write_matrix(&dir.join(&name), &s.grid, comp)?;
        names.push(name);
    }
    Ok(names)
}

pub fn read_stokes(dir: &Path, grid: GridSpec) -> Result<StokesMap, ExportError> {
    let mut comps = Vec::new();
    for k in 0..4 {
        let path = dir.join(format!("s{k}.txt"));
        let (nx, ny, data) = read_matrix(&path)?;
        if nx != grid.nx() || ny != grid.ny() {
            return Err(ExportError::Parse {
                path,
                line: 1,
                msg: format!("grid is {nx}×{ny}, expected {}×{}", grid.nx(), grid.ny()),
            });
        }
        comps.push(data);
    }
    let s3 = comps.pop().unwrap();
    let s2 = comps.pop().unwrap();
    let s1 = comps.pop().unwrap();
    let s0 = comps.pop().unwrap();
    Ok(StokesMap {
        grid,
        s0,
        s1,
        s2,
        s3,
    })
}

/// Writes one matrix per analyzer angle plus `frames.json` listing the
/// angles; returns the file names.
pub fn write_frames(dir: &Path, frames: &FrameStack) -> Result<Vec<String>, ExportError> {
    #[derive(Serialize)]
    struct Entry<'a> {
        theta: f64,
        file: &'a str,
    }
    let names: Vec<String> = (0..frames.frames.len())
        .map(|k| format!("frame_{k:02}.txt"))
        .collect();
    for (name, data) in names.iter().zip(&frames.frames) {
        write_matrix(&dir.join(name), &frames.grid, data)?;
    }
    let listing: Vec<Entry> = frames
        .angles
        .iter()
        .zip(&names)
        .map(|(&theta, file)| Entry { theta, file })
        .collect();
    write_json(&dir.join("frames.json"), &listing)?;
    let mut all = names;
    all.push("frames.json".into());
    Ok(all)
}

/// CSV of the ellipse map on a lattice with the given pixel stride;
/// masked points are skipped.
pub fn ellipse_csv(e: &EllipseMap, stride: usize) -> String {
    let g = e.grid;
    let stride = stride.max(1);
    let mut out = String::from("x,y,psi,chi,class\n");
    for j in (stride / 2..g.ny()).step_by(stride) {
        for i in (stride / 2..g.nx()).step_by(stride) {
            let idx = g.index(i, j);
            if let Some(class) = e.class[idx] {
                writeln!(
                    out,
                    "{:.6},{:.6},{:.9},{:.9},{}",
                    g.x(i),
                    g.y(j),
                    e.psi[idx],
                    e.chi[idx],
                    class.as_str()
                )
                .unwrap();
            }
        }
    }
    out
}

pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String, ExportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ExportError> {
    write_file(path, to_json_pretty(value)?.as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Inventory of one run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Self, ExportError> {
        let config = serde_json::to_value(config)?;
        let canonical = serde_json::to_string(&config)?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            config,
            files: Vec::new(),
        })
    }

    /// Hashes `names` (relative to `dir`) and records them, sorted by path.
    pub fn record(&mut self, dir: &Path, names: &[String]) -> Result<(), ExportError> {
        for name in names {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            self.files.push(ManifestEntry {
                path: name.replace('\\', "/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files.dedup_by(|a, b| a.path == b.path);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), ExportError> {
        write_json(&dir.join("manifest.json"), self)
    }
}
