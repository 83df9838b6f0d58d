//! Snapshot files and trajectory directories.
//!
//! A snapshot file is little-endian: the magic `SQGF`, a `u32` format
//! version, `u32` grid size `n`, then `f64` box length, `α`, `κ` and time,
//! followed by `n²` `f64` samples in row-major order. A trajectory directory
//! holds one snapshot file per stored time plus `manifest.json`.

use std::borrow::Cow;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::solver::{BudgetPoint, SnapshotSeries, SolverConfig, Trajectory};

pub const MAGIC: &[u8; 4] = b"SQGF";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";
const HEADER_LEN: usize = 4 + 4 + 4 + 4 * 8;

/// A snapshot file's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: ScalarField,
    pub alpha: f64,
    pub kappa: f64,
    pub time: f64,
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let grid = snap.field.grid;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    for v in [grid.length(), snap.alpha, snap.kappa, snap.time] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for v in &snap.field.values {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if &header[0..4] != MAGIC {
        return Err(bad("missing SQGF magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let n = u32_at(8) as usize;
    let grid = Grid::new(n, f64_at(12)).map_err(|e| bad(e.to_string()))?;
    let (alpha, kappa, time) = (f64_at(20), f64_at(28), f64_at(36));
    let mut bytes = Vec::with_capacity(n * n * 8);
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != n * n * 8 {
        return Err(bad(format!(
            "expected {} bytes of samples, found {}",
            n * n * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = ScalarField::from_values(grid, values).map_err(|e| bad(e.to_string()))?;
    Ok(Snapshot {
        field,
        alpha,
        kappa,
        time,
    })
}

/// `manifest.json` of a trajectory directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: SolverConfig,
    pub stride: usize,
    pub times: Vec<f64>,
    pub files: Vec<String>,
    pub budget: Vec<BudgetPoint>,
    /// Largest fraction of variance in the outer third of the resolved band.
    pub spectral_tail: f64,
    pub cfl_halvings: usize,
}

pub fn snapshot_name(k: usize) -> String {
    format!("snap_{k:05}.sqgf")
}

/// Writes every snapshot and the manifest into `dir` (created if missing).
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(traj.snapshots.len());
    for (k, (field, &t)) in traj.snapshots.iter().zip(&traj.times).enumerate() {
        let name = snapshot_name(k);
        write_snapshot(
            &dir.join(&name),
            &Snapshot {
                field: field.clone(),
                alpha: traj.config.alpha,
                kappa: traj.config.kappa,
                time: t,
            },
        )?;
        files.push(name);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: traj.config.clone(),
        stride: traj.stride,
        times: traj.times.clone(),
        files,
        budget: traj.budget.clone(),
        spectral_tail: traj.spectral_tail,
        cfl_halvings: traj.cfl_halvings,
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path,
        reason: e.to_string(),
    })
}

/// Trajectory directory read lazily, one snapshot at a time.
#[derive(Debug, Clone)]
pub struct DiskTrajectory {
    pub dir: PathBuf,
    pub manifest: Manifest,
    grid: Grid,
}

impl DiskTrajectory {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        if manifest.files.len() != manifest.times.len() || manifest.files.is_empty() {
            return Err(Error::Format {
                path: dir.join(MANIFEST_NAME),
                reason: "file and time lists differ in length or are empty".into(),
            });
        }
        for name in &manifest.files {
            let path = dir.join(name);
            if !path.is_file() {
                let missing = std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "snapshot listed in the manifest is missing",
                );
                return Err(Error::io(path, missing));
            }
        }
        let grid = manifest.config.grid()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            grid,
        })
    }

    /// Loads every snapshot into memory.
    pub fn load(&self) -> Result<Trajectory> {
        let snapshots = (0..self.manifest.files.len())
            .map(|k| self.snapshot(k).map(Cow::into_owned))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            config: self.manifest.config.clone(),
            stride: self.manifest.stride,
            times: self.manifest.times.clone(),
            snapshots,
            budget: self.manifest.budget.clone(),
            spectral_tail: self.manifest.spectral_tail,
            cfl_halvings: self.manifest.cfl_halvings,
        })
    }
}

impl SnapshotSeries for DiskTrajectory {
    fn grid(&self) -> Grid {
        self.grid
    }

    fn alpha(&self) -> f64 {
        self.manifest.config.alpha
    }

    fn kappa(&self) -> f64 {
        self.manifest.config.kappa
    }

    fn times(&self) -> &[f64] {
        &self.manifest.times
    }

    fn snapshot(&self, k: usize) -> Result<Cow<'_, ScalarField>> {
        let path = self.dir.join(&self.manifest.files[k]);
        let snap = read_snapshot(&path)?;
        if snap.field.grid != self.grid {
            return Err(Error::Format {
                path,
                reason: "grid differs from manifest".into(),
            });
        }
        Ok(Cow::Owned(snap.field))
    }
}
