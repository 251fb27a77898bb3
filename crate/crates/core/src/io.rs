//! File formats.
//!
//! Trajectory files:
//!
//! ```text
//! "FKLT" | u32 version (1) | u64 manifest length | JSON manifest
//!        | f64 little-endian payload, row-major (path, time, dim)
//! ```
//!
//! The manifest records the shape, dtype `"f64le"`, the physical horizon and
//! the provenance (system, simulation config, seed, generator).
//!
//! Snapshot clouds are CSV with header `time,dim0,...,dim{D-1}`, one point
//! per row, `time` being the rescaled snapshot time.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};
use crate::metrics::PointCloud;
use crate::sde::{Provenance, Snapshot, TrajectoryDataset};
use crate::spectral::TimeGrid;

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"FKLT";
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub shape: [usize; 3],
    pub dtype: String,
    pub layout: String,
    pub physical_horizon: f64,
    pub provenance: Provenance,
}

pub fn write_trajectories<W: Write>(ds: &TrajectoryDataset, mut w: W) -> Result<()> {
    let manifest = TrajectoryManifest {
        shape: ds.shape(),
        dtype: "f64le".into(),
        layout: "path,time,dim".into(),
        physical_horizon: ds.grid().physical_horizon(),
        provenance: ds.provenance().clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(ds.values().len() * 8);
    for v in ds.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_manifest<R: Read>(r: &mut R) -> Result<TrajectoryManifest> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(FklError::Format("not a trajectory file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != TRAJECTORY_VERSION {
        return Err(FklError::Format(format!("unsupported trajectory version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8);
    if len > 1 << 30 {
        return Err(FklError::Format("implausible manifest length".into()));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let manifest: TrajectoryManifest = serde_json::from_slice(&json)?;
    if manifest.dtype != "f64le" {
        return Err(FklError::Format(format!("unsupported dtype {}", manifest.dtype)));
    }
    Ok(manifest)
}

pub fn read_trajectories<R: Read>(mut r: R) -> Result<TrajectoryDataset> {
    let manifest = read_trajectory_manifest(&mut r)?;
    let [n, m, d] = manifest.shape;
    let count = n
        .checked_mul(m)
        .and_then(|x| x.checked_mul(d))
        .ok_or_else(|| FklError::Format("shape overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(FklError::Format(format!("payload has {} bytes, shape needs {}", bytes.len(), count * 8)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let grid = TimeGrid::new(m, manifest.physical_horizon)?;
    TrajectoryDataset::new(grid, n, d, values, manifest.provenance)
}

pub fn write_trajectory_file(ds: &TrajectoryDataset, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_trajectories(ds, std::io::BufWriter::new(f))
}

pub fn read_trajectory_file(path: &std::path::Path) -> Result<TrajectoryDataset> {
    let f = std::fs::File::open(path)?;
    read_trajectories(std::io::BufReader::new(f))
}

/// Writes the snapshots' clouds, one point per row.
pub fn write_snapshot_csv<'a, W: Write>(snapshots: impl IntoIterator<Item = &'a Snapshot>, mut w: W) -> Result<()> {
    let mut header_dim = None;
    for s in snapshots {
        let dim = s.cloud.dim();
        match header_dim {
            None => {
                let cols: Vec<String> = (0..dim).map(|d| format!("dim{d}")).collect();
                writeln!(w, "time,{}", cols.join(","))?;
                header_dim = Some(dim);
            }
            Some(hd) if hd != dim => return Err(FklError::Shape("snapshots differ in dimension".into())),
            _ => {}
        }
        for p in s.cloud.iter() {
            let cells: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", s.tau, cells.join(","))?;
        }
    }
    Ok(())
}

/// Reads `time,dim0,...` rows, grouped by time in order of first appearance.
pub fn read_snapshot_csv<R: BufRead>(r: R) -> Result<Vec<(f64, PointCloud)>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| FklError::Format("empty snapshot file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"time") || cols.len() < 2 || cols[1..].iter().enumerate().any(|(d, c)| *c != format!("dim{d}")) {
        return Err(FklError::Format(format!("unexpected snapshot header {header:?}")));
    }
    let dim = cols.len() - 1;
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_row(&line, dim + 1, lineno + 2)?;
        let t = vals[0];
        match groups.iter_mut().find(|(gt, _)| *gt == t) {
            Some((_, pts)) => pts.extend_from_slice(&vals[1..]),
            None => groups.push((t, vals[1..].to_vec())),
        }
    }
    groups.into_iter().map(|(t, pts)| Ok((t, PointCloud::new(dim, pts)?))).collect()
}

fn parse_row(line: &str, expected: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals = line
        .trim()
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| FklError::Format(format!("line {lineno}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != expected {
        return Err(FklError::Format(format!("line {lineno}: {} columns, expected {expected}", vals.len())));
    }
    Ok(vals)
}

/// Imports a plain CSV dump with header `path,time,dim0,...`. Every path must
/// be listed on the same equispaced physical time grid starting at zero.
pub fn import_trajectory_csv<R: BufRead>(r: R, label: &str) -> Result<TrajectoryDataset> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| FklError::Format("empty trajectory CSV".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "path" || cols[1] != "time" {
        return Err(FklError::Format(format!("expected header path,time,dim0,..., got {header:?}")));
    }
    let dim = cols.len() - 2;
    let mut rows: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_row(&line, dim + 2, lineno + 2)?;
        if vals[0] < 0.0 || vals[0].fract() != 0.0 {
            return Err(FklError::Format(format!("line {}: path id must be a nonnegative integer", lineno + 2)));
        }
        rows.push((vals[0] as usize, vals[1], vals[2..].to_vec()));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut ids: Vec<usize> = rows.iter().map(|r| r.0).collect();
    ids.dedup();
    if ids.is_empty() {
        return Err(FklError::Format("trajectory CSV has no rows".into()));
    }
    let m = rows.len() / ids.len();
    if m < 2 || m * ids.len() != rows.len() {
        return Err(FklError::Format("paths have differing numbers of time points".into()));
    }
    let times: Vec<f64> = rows[..m].iter().map(|r| r.1).collect();
    let horizon = times[m - 1];
    for (k, chunk) in rows.chunks(m).enumerate() {
        if chunk.iter().any(|r| r.0 != ids[k]) || chunk.iter().zip(&times).any(|(r, t)| (r.1 - t).abs() > 1e-9 * horizon.abs().max(1.0)) {
            return Err(FklError::Format("paths are not on a common time grid".into()));
        }
    }
    for (j, t) in times.iter().enumerate() {
        let want = horizon * j as f64 / (m - 1) as f64;
        if (t - want).abs() > 1e-6 * horizon.abs().max(1.0) {
            return Err(FklError::Format(format!("time {t} breaks the equispaced grid starting at zero")));
        }
    }
    let values = rows.into_iter().flat_map(|r| r.2).collect();
    TrajectoryDataset::new(TimeGrid::new(m, horizon)?, ids.len(), dim, values, Provenance::imported(label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{equispaced_times, euler_maruyama, extract_snapshots, SimConfig, SplitRule, SystemSpec};

    fn dataset() -> TrajectoryDataset {
        let sys = SystemSpec::lotka_volterra().build().unwrap();
        euler_maruyama(&sys, &SimConfig { horizon: 8.0, dt: 0.02, n_paths: 5, seed: 3 }).unwrap()
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let ds = dataset();
        let mut buf = Vec::new();
        write_trajectories(&ds, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FKLT");
        let back = read_trajectories(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut cut = buf.clone();
        cut.truncate(buf.len() - 8);
        assert!(read_trajectories(cut.as_slice()).is_err());
        let mut bad = buf;
        bad[0] = b'Z';
        assert!(read_trajectories(bad.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let ds = dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lv.fklt");
        write_trajectory_file(&ds, &path).unwrap();
        assert_eq!(read_trajectory_file(&path).unwrap(), ds);
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let ds = dataset();
        let set = extract_snapshots(&ds, &equispaced_times(5), &SplitRule::OddTrainEvenVal).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&set.snapshots, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,dim0,dim1\n"));
        let back = read_snapshot_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 5);
        for ((t, c), s) in back.iter().zip(&set.snapshots) {
            assert_eq!(*t, s.tau);
            assert_eq!(c, &s.cloud);
        }
        assert!(read_snapshot_csv("t,x\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_import() {
        let text = "path,time,dim0\n1,0,5\n0,0,1\n0,0.5,2\n1,0.5,6\n0,1,3\n1,1,7\n";
        let ds = import_trajectory_csv(text.as_bytes(), "toy").unwrap();
        assert_eq!(ds.shape(), [2, 3, 1]);
        assert_eq!(ds.path(0), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.path(1), &[5.0, 6.0, 7.0]);
        assert_eq!(ds.grid().physical_horizon(), 1.0);
        let ragged = "path,time,dim0\n0,0,1\n0,1,2\n1,0,3\n";
        assert!(import_trajectory_csv(ragged.as_bytes(), "x").is_err());
        let uneven = "path,time,dim0\n0,0,1\n0,0.2,2\n0,1,3\n";
        assert!(import_trajectory_csv(uneven.as_bytes(), "x").is_err());
    }
}
