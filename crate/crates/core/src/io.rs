//! Artifact plumbing for the batch runner: binary field snapshots, text
//! metadata sidecars, plot CSVs, and content-hashed manifests.
//!
//! A snapshot is a flat binary layout: a little-endian `u64` header
//! `[dim, m, cells per axis.., time_steps]` followed by the sample values
//! as little-endian `f64` in time-major, then row-major space, then
//! component order — exactly the in-memory layout of a space-time field.
//! A checkpoint pairs a `.bin` snapshot with a `.meta` sidecar holding
//! `key = value` lines (domain extents, horizon, boundary handling, and
//! any solver metadata), which together suffice to rebuild the field.
//!
//! All experiment files go through a single [`ArtifactWriter`], which
//! records a SHA-256 hash per file and finalizes into `manifest.txt`;
//! [`verify_manifest`] re-hashes the listed files and reports tampering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::grid::{BoundaryKind, Grid};

/// Serialize a field to the flat snapshot layout.
pub fn snapshot_bytes(field: &SpaceTimeField) -> Vec<u8> {
    let grid = field.grid();
    let dim = grid.dim();
    let mut header: Vec<u64> = Vec::with_capacity(3 + dim);
    header.push(dim as u64);
    header.push(field.m() as u64);
    for axis in 0..dim {
        header.push(grid.cells(axis) as u64);
    }
    header.push(grid.n_time_steps() as u64);
    let values = field.values();
    let mut out = Vec::with_capacity(8 * (header.len() + values.len()));
    for h in header {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], idx: usize) -> Result<u64> {
    let start = 8 * idx;
    let chunk = bytes
        .get(start..start + 8)
        .ok_or_else(|| Error::SnapshotFormat(format!("truncated header at word {idx}")))?;
    Ok(u64::from_le_bytes(chunk.try_into().expect("8-byte slice")))
}

/// Rebuild a field from snapshot bytes. The header fixes the grid shape;
/// the domain extents, horizon, and boundary handling are not part of the
/// binary layout and must be supplied (checkpoints carry them in the
/// sidecar).
pub fn field_from_snapshot(
    bytes: &[u8],
    extents: &[(f64, f64)],
    t_final: f64,
    boundary: BoundaryKind,
) -> Result<SpaceTimeField> {
    let dim = read_u64(bytes, 0)? as usize;
    if dim == 0 || dim > 2 {
        return Err(Error::SnapshotFormat(format!(
            "dimension {dim} out of the supported range 1..=2"
        )));
    }
    if extents.len() != dim {
        return Err(Error::SnapshotFormat(format!(
            "snapshot is {dim}-dimensional but {} extents were supplied",
            extents.len()
        )));
    }
    let m = read_u64(bytes, 1)? as usize;
    let mut cells = Vec::with_capacity(dim);
    for axis in 0..dim {
        cells.push(read_u64(bytes, 2 + axis)? as usize);
    }
    let time_steps = read_u64(bytes, 2 + dim)? as usize;
    let header_words = 3 + dim;
    let n_nodes: usize = cells.iter().map(|&c| c + 1).product();
    let expect = (time_steps + 1) * n_nodes * m;
    let payload = &bytes[8 * header_words..];
    if payload.len() != 8 * expect {
        return Err(Error::SnapshotFormat(format!(
            "payload holds {} values, header shape wants {expect}",
            payload.len() / 8
        )));
    }
    let mut values = Vec::with_capacity(expect);
    for chunk in payload.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().expect("8-byte slice")));
    }
    let grid = Grid::new(&cells, extents, time_steps, t_final)?;
    SpaceTimeField::from_values(grid, m, boundary, values)
}

fn boundary_name(b: BoundaryKind) -> &'static str {
    match b {
        BoundaryKind::DirichletZero => "dirichlet_zero",
        BoundaryKind::Periodic => "periodic",
        BoundaryKind::Free => "free",
    }
}

fn parse_boundary(s: &str) -> Result<BoundaryKind> {
    match s {
        "dirichlet_zero" => Ok(BoundaryKind::DirichletZero),
        "periodic" => Ok(BoundaryKind::Periodic),
        "free" => Ok(BoundaryKind::Free),
        other => Err(Error::SnapshotFormat(format!(
            "unknown boundary kind '{other}' in sidecar"
        ))),
    }
}

/// Render the `.meta` sidecar for a field: grid geometry first, then any
/// extra key-value pairs (solver metadata) verbatim.
pub fn sidecar_text(field: &SpaceTimeField, extra: &[(String, String)]) -> String {
    let grid = field.grid();
    let mut out = String::new();
    let _ = writeln!(out, "dim = {}", grid.dim());
    let _ = writeln!(out, "m = {}", field.m());
    for axis in 0..grid.dim() {
        let (lo, hi) = grid.extent(axis);
        let _ = writeln!(out, "cells_{axis} = {}", grid.cells(axis));
        let _ = writeln!(out, "extent_{axis}_lo = {lo}");
        let _ = writeln!(out, "extent_{axis}_hi = {hi}");
    }
    let _ = writeln!(out, "time_steps = {}", grid.n_time_steps());
    let _ = writeln!(out, "t_final = {}", grid.t_final());
    let _ = writeln!(out, "boundary = {}", boundary_name(field.boundary()));
    for (k, v) in extra {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn parse_sidecar(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

fn sidecar_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    map.get(key)
        .ok_or_else(|| Error::SnapshotFormat(format!("sidecar is missing key '{key}'")))?
        .parse::<f64>()
        .map_err(|e| Error::SnapshotFormat(format!("sidecar key '{key}': {e}")))
}

/// Read a checkpoint written by [`ArtifactWriter::write_checkpoint`]:
/// `<base>.bin` plus the `<base>.meta` sidecar that carries the extents,
/// horizon, and boundary handling the binary layout omits.
pub fn read_checkpoint(bin_path: &Path) -> Result<SpaceTimeField> {
    let bytes =
        std::fs::read(bin_path).map_err(|e| Error::io(bin_path.display().to_string(), e))?;
    let meta_path = bin_path.with_extension("meta");
    let meta = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    let map = parse_sidecar(&meta);
    let dim = read_u64(&bytes, 0)? as usize;
    if dim == 0 || dim > 2 {
        return Err(Error::SnapshotFormat(format!(
            "dimension {dim} out of the supported range 1..=2"
        )));
    }
    let mut extents = Vec::with_capacity(dim);
    for axis in 0..dim {
        extents.push((
            sidecar_f64(&map, &format!("extent_{axis}_lo"))?,
            sidecar_f64(&map, &format!("extent_{axis}_hi"))?,
        ));
    }
    let t_final = sidecar_f64(&map, "t_final")?;
    let boundary = parse_boundary(
        map.get("boundary")
            .ok_or_else(|| Error::SnapshotFormat("sidecar is missing key 'boundary'".into()))?,
    )?;
    field_from_snapshot(&bytes, &extents, t_final, boundary)
}

/// Plot-friendly CSV of selected time levels: one row per
/// `(time, node, component)` with columns `t,x,[y,]component,value`.
pub fn field_plot_csv(field: &SpaceTimeField, levels: &[usize]) -> Result<String> {
    let grid = field.grid();
    let dim = grid.dim();
    let n = grid.n_space_nodes();
    let m = field.m();
    let mut out = String::new();
    out.push_str(if dim == 1 {
        "t,x,component,value\n"
    } else {
        "t,x,y,component,value\n"
    });
    let mut x = [0.0; 2];
    for &k in levels {
        if k >= grid.n_time_levels() {
            return Err(Error::SnapshotFormat(format!(
                "plot level {k} out of range ({} levels)",
                grid.n_time_levels()
            )));
        }
        let t = grid.time(k);
        for s in 0..n {
            grid.node_coords(s, &mut x[..dim]);
            for c in 0..m {
                if dim == 1 {
                    let _ = writeln!(out, "{t},{},{c},{}", x[0], field.at(k, s, c));
                } else {
                    let _ = writeln!(out, "{t},{},{},{c},{}", x[0], x[1], field.at(k, s, c));
                }
            }
        }
    }
    Ok(out)
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Single writer for one experiment's output directory. Every file goes
/// through it so the closing manifest lists each artifact exactly once
/// with its content hash; nothing else may write into the directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl ArtifactWriter {
    /// Open (creating if needed) an output directory.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write one artifact under a flat file name (no path separators).
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        if name.contains('/') || name.contains('\\') || name == "manifest.txt" {
            return Err(Error::SnapshotFormat(format!(
                "artifact name '{name}' must be a flat file name other than manifest.txt"
            )));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        self.write_bytes(name, content.as_bytes())
    }

    /// Write a checkpoint: `<base>.bin` snapshot plus `<base>.meta`
    /// sidecar carrying geometry and the given solver metadata.
    pub fn write_checkpoint(
        &mut self,
        base: &str,
        field: &SpaceTimeField,
        extra: &[(String, String)],
    ) -> Result<()> {
        self.write_bytes(&format!("{base}.bin"), &snapshot_bytes(field))?;
        self.write_text(&format!("{base}.meta"), &sidecar_text(field, extra))?;
        Ok(())
    }

    /// Write `manifest.txt` (one `<sha256>  <name>` line per artifact,
    /// sorted by name) and return its path.
    pub fn finalize(self) -> Result<PathBuf> {
        let mut out = String::new();
        for (name, hash) in &self.hashes {
            let _ = writeln!(out, "{hash}  {name}");
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(path)
    }
}

/// Re-hash every file listed in `<dir>/manifest.txt` and return the
/// number of verified artifacts. Any missing file, hash mismatch, or
/// malformed manifest line is reported as tampering.
pub fn verify_manifest(dir: &Path) -> Result<usize> {
    let manifest_path = dir.join("manifest.txt");
    let manifest = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let mut checked = 0;
    for line in manifest.lines() {
        let (hash, name) = line.split_once("  ").ok_or_else(|| Error::ManifestMismatch {
            path: manifest_path.display().to_string(),
            reason: format!("malformed line '{line}'"),
        })?;
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|_| Error::ManifestMismatch {
            path: path.display().to_string(),
            reason: "listed artifact is missing or unreadable".into(),
        })?;
        let actual = sha256_hex(&bytes);
        if actual != hash {
            return Err(Error::ManifestMismatch {
                path: path.display().to_string(),
                reason: format!("content hash {actual} does not match manifest entry {hash}"),
            });
        }
        checked += 1;
    }
    Ok(checked)
}
