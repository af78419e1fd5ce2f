use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::lattice_sim::{Configuration, Lattice};

pub const MANIFEST_NAME: &str = "MANIFEST";

/// One written file, relative to the run directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Files produced by an experiment, held in memory until the run directory
/// is written.
#[derive(Clone, Debug, Default)]
pub struct ArtifactSet {
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<String>, data: impl Into<Vec<u8>>) {
        let path = path.into();
        debug_assert!(!path.starts_with('/') && !path.contains(".."));
        self.files.retain(|(p, _)| *p != path);
        self.files.push((path, data.into()));
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == path).map(|(_, d)| d.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(p, _)| p.as_str())
    }

    /// Writes every file under `dir` and returns them in insertion order.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<Artifact>, HarnessError> {
        let mut out = Vec::with_capacity(self.files.len());
        for (rel, data) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            std::fs::write(&path, data).map_err(|e| io_err(&path, e))?;
            out.push(Artifact { path: rel.clone(), sha256: sha256_hex(data), bytes: data.len() as u64 });
        }
        Ok(out)
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// `sha256  path` per line, sorted by path.
pub fn manifest_text(artifacts: &[Artifact]) -> String {
    let mut sorted: Vec<&Artifact> = artifacts.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut s = String::new();
    for a in sorted {
        let _ = writeln!(s, "{}  {}", a.sha256, a.path);
    }
    s
}

/// Re-hashes every file listed in `dir/MANIFEST`; returns the mismatches.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, HarnessError> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut bad = Vec::new();
    for line in text.lines() {
        let Some((hash, rel)) = line.split_once("  ") else {
            bad.push(format!("malformed line `{line}`"));
            continue;
        };
        match std::fs::read(dir.join(rel)) {
            Ok(data) if sha256_hex(&data) == hash => {}
            Ok(_) => bad.push(format!("{rel}: hash mismatch")),
            Err(e) => bad.push(format!("{rel}: {e}")),
        }
    }
    Ok(bad)
}

/// Flat snapshot file: `u32` LE header `(d, L, count)` followed by
/// `count·L^d` LE `u32` occupancies.
pub fn encode_snapshots(lattice: Lattice, snapshots: &[Vec<u32>]) -> Vec<u8> {
    let n = lattice.n_sites();
    let mut out = Vec::with_capacity(12 + 4 * n * snapshots.len());
    for v in [lattice.d as u32, lattice.l as u32, snapshots.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in snapshots {
        assert_eq!(s.len(), n, "snapshot size does not match the lattice");
        for &k in s {
            out.extend_from_slice(&k.to_le_bytes());
        }
    }
    out
}

pub fn decode_snapshots(data: &[u8]) -> Result<Vec<Configuration>, HarnessError> {
    let word = |i: usize| -> Result<u32, HarnessError> {
        data.get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| HarnessError::Io("snapshot file truncated".into()))
    };
    let (d, l, count) = (word(0)? as usize, word(1)? as usize, word(2)? as usize);
    let lattice = Lattice::new(d, l).map_err(|e| HarnessError::Io(format!("snapshot header: {e}")))?;
    let n = lattice.n_sites();
    if data.len() != 12 + 4 * n * count {
        return Err(HarnessError::Io(format!(
            "snapshot file has {} bytes, header implies {}",
            data.len(),
            12 + 4 * n * count
        )));
    }
    (0..count)
        .map(|c| {
            let occ = (0..n).map(|i| word(3 + c * n + i)).collect::<Result<Vec<_>, _>>()?;
            Configuration::new(lattice, occ).map_err(|e| HarnessError::Io(e.to_string()))
        })
        .collect()
}

/// Two- or three-column text series for plotting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub rows: Vec<(f64, f64, Option<f64>)>,
    /// Extra `# key = value` header lines.
    pub notes: Vec<String>,
}

impl PlotSeries {
    pub fn new(name: &str, x_label: &str, y_label: &str) -> Self {
        PlotSeries { name: name.into(), x_label: x_label.into(), y_label: y_label.into(), ..Default::default() }
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.rows.push((x, y, None));
    }

    pub fn push_err(&mut self, x: f64, y: f64, err: f64) {
        self.rows.push((x, y, Some(err)));
    }

    /// Header (always) and one row per point; an `yerr` column appears when
    /// any row carries one.
    pub fn render(&self) -> String {
        let with_err = self.rows.iter().any(|r| r.2.is_some());
        let mut s = String::new();
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        if with_err {
            let _ = writeln!(s, "# {} {} {}_err", self.x_label, self.y_label, self.y_label);
        } else {
            let _ = writeln!(s, "# {} {}", self.x_label, self.y_label);
        }
        for (x, y, e) in &self.rows {
            match (with_err, e) {
                (true, Some(e)) => writeln!(s, "{x:e} {y:e} {e:e}"),
                (true, None) => writeln!(s, "{x:e} {y:e} nan"),
                _ => writeln!(s, "{x:e} {y:e}"),
            }
            .expect("write to String");
        }
        s
    }

    pub fn file_name(&self) -> String {
        format!("plots/{}.dat", self.name)
    }
}

/// Resolves the run directory: explicit CLI value, then the config's
/// `out_dir`, then `runs/<experiment>`; relative paths sit under
/// `ZRPLAB_OUT_ROOT` when that is set.
pub fn resolve_out_dir(cli: Option<&Path>, config: Option<&str>, experiment: &str) -> PathBuf {
    let base = cli
        .map(Path::to_path_buf)
        .or_else(|| config.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(experiment));
    match std::env::var_os("ZRPLAB_OUT_ROOT") {
        Some(root) if base.is_relative() => PathBuf::from(root).join(base),
        _ => base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip() {
        let lat = Lattice::new(2, 5).unwrap();
        let snaps = vec![(0..25).collect::<Vec<u32>>(), vec![3; 25]];
        let bytes = encode_snapshots(lat, &snaps);
        assert_eq!(&bytes[..12], &[2, 0, 0, 0, 5, 0, 0, 0, 2, 0, 0, 0]);
        let back = decode_snapshots(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].occupancies, snaps[0]);
        assert!(decode_snapshots(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn empty_series_has_header_only() {
        let s = PlotSeries::new("v_vs_n", "N", "V");
        assert_eq!(s.render(), "# N V\n");
    }

    #[test]
    fn manifest_is_sorted_and_verifiable() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = ArtifactSet::new();
        set.add("b.txt", "two");
        set.add("a/c.txt", "one");
        let arts = set.write_all(dir.path()).unwrap();
        let text = manifest_text(&arts);
        assert!(text.lines().next().unwrap().ends_with("a/c.txt"));
        std::fs::write(dir.path().join(MANIFEST_NAME), &text).unwrap();
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("b.txt"), "changed").unwrap();
        assert_eq!(verify_manifest(dir.path()).unwrap().len(), 1);
    }
}
