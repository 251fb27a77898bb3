use serde::Serialize;

use crate::error::{FklError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    /// `per_task[t][j]`: rank of method `j` on task `t`, ties averaged.
    pub per_task: Vec<Vec<f64>>,
    pub avg_ranks: Vec<f64>,
    pub friedman_statistic: f64,
}

/// Average ranks of `M` methods over `T` tasks and the Friedman statistic
/// `12T/(M(M+1)) Σ_j (R_j − (M+1)/2)²`. `scores[j][t]` is method `j` on task `t`.
pub fn rank_methods(scores: &[Vec<f64>], lower_is_better: bool) -> Result<RankSummary> {
    let m = scores.len();
    if m < 2 {
        return Err(FklError::InvalidParameter("ranking needs at least two methods".into()));
    }
    let t = scores[0].len();
    if t < 2 || scores.iter().any(|row| row.len() != t) {
        return Err(FklError::Shape("ranking needs a rectangular table with at least two tasks".into()));
    }
    if scores.iter().flatten().any(|s| s.is_nan()) {
        return Err(FklError::InvalidParameter("NaN score in ranking table".into()));
    }
    let mut per_task = Vec::with_capacity(t);
    for task in 0..t {
        let mut idx: Vec<usize> = (0..m).collect();
        let key = |j: usize| if lower_is_better { scores[j][task] } else { -scores[j][task] };
        idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut ranks = vec![0.0; m];
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && key(idx[end]) == key(idx[start]) {
                end += 1;
            }
            // positions start..end share the mean of ranks start+1..=end
            let avg = (start + 1 + end) as f64 / 2.0;
            for &j in &idx[start..end] {
                ranks[j] = avg;
            }
            start = end;
        }
        per_task.push(ranks);
    }
    let avg_ranks: Vec<f64> = (0..m).map(|j| per_task.iter().map(|r| r[j]).sum::<f64>() / t as f64).collect();
    let (mf, tf) = (m as f64, t as f64);
    let centre = (mf + 1.0) / 2.0;
    let friedman_statistic = 12.0 * tf / (mf * (mf + 1.0)) * avg_ranks.iter().map(|r| (r - centre).powi(2)).sum::<f64>();
    Ok(RankSummary {
        per_task,
        avg_ranks,
        friedman_statistic,
    })
}
