//! Marginal distances between point clouds and rank aggregation.

mod mmd;
mod ot;
mod rank;
mod sliced;

use std::io::Write;

pub use mmd::{mmd2_unbiased, mmd_rbf};
pub use ot::{assignment, transport, wasserstein, wasserstein_1d_pow};
pub use rank::{rank_methods, RankSummary};
pub use sliced::{max_sliced_wasserstein, sliced_wasserstein, MaxSlicedResult};

use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};

/// `n` points in `R^D`, row-major, uniformly weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(FklError::Shape(format!(
                "{} values do not form a nonempty cloud of dimension {dim}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(FklError::InvalidParameter("point cloud has non-finite entries".into()));
        }
        Ok(Self { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(FklError::Shape("ragged point rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(FklError::Shape(format!("cloud dimensions differ: {} vs {}", self.dim, other.dim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub swd_order: u32,
    pub swd_projections: usize,
    pub mwd_candidates: usize,
    pub mwd_refine_steps: usize,
    pub mmd_bandwidth: f64,
    pub seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            swd_order: 2,
            swd_projections: 128,
            mwd_candidates: 256,
            mwd_refine_steps: 50,
            mmd_bandwidth: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub emd: f64,
    pub w2: f64,
    pub swd: f64,
    pub mwd: f64,
    pub mmd: f64,
}

impl MetricValues {
    pub const NAMES: [&'static str; 5] = ["emd", "w2", "swd", "mwd", "mmd"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.emd, self.w2, self.swd, self.mwd, self.mmd]
    }
}

pub fn compute_metrics(p: &PointCloud, q: &PointCloud, s: &MetricSettings) -> Result<MetricValues> {
    Ok(MetricValues {
        emd: wasserstein(p, q, 1)?,
        w2: wasserstein(p, q, 2)?,
        swd: sliced_wasserstein(p, q, s.swd_order, s.swd_projections, s.seed)?,
        mwd: max_sliced_wasserstein(p, q, s.swd_order, s.mwd_candidates, s.mwd_refine_steps, s.seed)?.value,
        mmd: mmd_rbf(p, q, s.mmd_bandwidth)?,
    })
}

/// One row per method; columns are `(τ, metric)` pairs, optionally followed
/// by forward and reverse divergence estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub settings: MetricSettings,
    pub times: Vec<f64>,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: String,
    /// One entry per time in the report.
    pub values: Vec<MetricValues>,
    pub fkl: Option<(f64, f64)>,
}

impl MetricReport {
    pub fn new(settings: MetricSettings, times: Vec<f64>) -> Self {
        Self {
            settings,
            times,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if row.values.len() != self.times.len() {
            return Err(FklError::Shape(format!(
                "row has {} time entries, report has {}",
                row.values.len(),
                self.times.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for t in &self.times {
            for name in MetricValues::NAMES {
                cols.push(format!("{name}@{t}"));
            }
        }
        if self.rows.iter().any(|r| r.fkl.is_some()) {
            cols.push("fkl_forward".into());
            cols.push("fkl_reverse".into());
        }
        cols
    }

    /// Flattened score table `methods x columns`, matching [`column_names`](Self::column_names).
    pub fn table(&self) -> Vec<Vec<f64>> {
        let with_fkl = self.rows.iter().any(|r| r.fkl.is_some());
        self.rows
            .iter()
            .map(|r| {
                let mut v: Vec<f64> = r.values.iter().flat_map(MetricValues::as_array).collect();
                if with_fkl {
                    let (f, b) = r.fkl.unwrap_or((f64::NAN, f64::NAN));
                    v.push(f);
                    v.push(b);
                }
                v
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,{}", self.column_names().join(","))?;
        for (row, vals) in self.rows.iter().zip(self.table()) {
            let cells: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", row.method, cells.join(","))?;
        }
        Ok(())
    }
}
