//! Exact optimal transport between uniform empirical measures.

use crate::error::{FklError, Result};

use super::PointCloud;

/// Iteration cap of the transportation simplex; reaching it means the pivot
/// rule stalled on a degenerate vertex.
const MAX_SIMPLEX_ITERATIONS: usize = 1_000_000;

/// `W_p` between two clouds. Equal sizes are solved as an assignment
/// problem, unequal sizes with the transportation simplex.
pub fn wasserstein(p: &PointCloud, q: &PointCloud, order: u32) -> Result<f64> {
    p.check_dim(q)?;
    if order == 0 {
        return Err(FklError::InvalidParameter("Wasserstein order must be at least 1".into()));
    }
    let cost = cost_matrix(p, q, order);
    let (n, m) = (p.len(), q.len());
    let mean_cost = if n == m {
        let assign = assignment(&cost, n);
        assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64
    } else {
        transport(&cost, n, m)?
    };
    Ok(mean_cost.max(0.0).powf(1.0 / f64::from(order)))
}

pub(crate) fn cost_matrix(p: &PointCloud, q: &PointCloud, order: u32) -> Vec<f64> {
    let mut cost = Vec::with_capacity(p.len() * q.len());
    for x in p.iter() {
        for y in q.iter() {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            cost.push(match order {
                1 => d2.sqrt(),
                2 => d2,
                _ => d2.sqrt().powi(order as i32),
            });
        }
    }
    cost
}

/// Minimum-cost perfect matching on a square `n x n` cost matrix by
/// shortest augmenting paths with dual potentials. Returns `row -> column`.
pub fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be square");
    // 1-based internally; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[matched_row[j] - 1] = j - 1;
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: i64,
}

/// Mean cost of the optimal plan between `n` sources of mass `1/n` and `m`
/// sinks of mass `1/m`. Masses are scaled to the integers `m` and `n` so
/// that pivots are exact.
pub fn transport(cost: &[f64], n: usize, m: usize) -> Result<f64> {
    assert_eq!(cost.len(), n * m);
    let mut basis = northwest_corner(n, m);
    let nodes = n + m;
    let scale = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut pot = vec![0.0; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut stack = Vec::with_capacity(nodes);

    for _ in 0..MAX_SIMPLEX_ITERATIONS {
        // spanning tree rooted at row 0; row nodes are 0..n, column nodes n..n+m
        adj.iter_mut().for_each(Vec::clear);
        for (e, c) in basis.iter().enumerate() {
            adj[c.row].push(e);
            adj[n + c.col].push(e);
        }
        parent[0] = usize::MAX;
        pot[0] = 0.0;
        depth[0] = 0;
        let mut seen = vec![false; nodes];
        seen[0] = true;
        stack.clear();
        stack.push(0);
        while let Some(a) = stack.pop() {
            for &e in &adj[a] {
                let c = basis[e];
                let b = if a < n { n + c.col } else { c.row };
                if seen[b] {
                    continue;
                }
                seen[b] = true;
                // u_row + v_col = cost on basic cells
                pot[b] = cost[c.row * m + c.col] - pot[a];
                parent[b] = a;
                parent_edge[b] = e;
                depth[b] = depth[a] + 1;
                stack.push(b);
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis is not a spanning tree");

        let mut best = -tol;
        let mut entering = None;
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            for j in 0..m {
                let r = row[j] - pot[i] - pot[n + j];
                if r < best {
                    best = r;
                    entering = Some((i, j));
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let total: f64 = basis.iter().map(|c| c.flow as f64 * cost[c.row * m + c.col]).sum();
            return Ok(total / (n as f64 * m as f64));
        };

        // tree path from column ej to row ei; signs alternate starting with −
        let (mut a, mut b) = (n + ej, ei);
        let mut from_a = Vec::new();
        let mut from_b = Vec::new();
        while depth[a] > depth[b] {
            from_a.push(parent_edge[a]);
            a = parent[a];
        }
        while depth[b] > depth[a] {
            from_b.push(parent_edge[b]);
            b = parent[b];
        }
        while a != b {
            from_a.push(parent_edge[a]);
            a = parent[a];
            from_b.push(parent_edge[b]);
            b = parent[b];
        }
        from_b.reverse();
        let path: Vec<usize> = from_a.into_iter().chain(from_b).collect();
        let mut theta = i64::MAX;
        let mut leaving = usize::MAX;
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 && basis[e].flow < theta {
                theta = basis[e].flow;
                leaving = e;
            }
        }
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis[e].flow -= theta;
            } else {
                basis[e].flow += theta;
            }
        }
        basis[leaving] = Cell {
            row: ei,
            col: ej,
            flow: theta,
        };
    }
    Err(FklError::InvalidParameter(format!(
        "transportation simplex did not converge in {MAX_SIMPLEX_ITERATIONS} pivots"
    )))
}

/// Initial basic feasible solution with exactly `n + m − 1` cells.
fn northwest_corner(n: usize, m: usize) -> Vec<Cell> {
    let mut supply = vec![m as i64; n];
    let mut demand = vec![n as i64; m];
    let mut cells = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let f = supply[i].min(demand[j]);
        cells.push(Cell { row: i, col: j, flow: f });
        supply[i] -= f;
        demand[j] -= f;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if supply[i] == 0 && i < n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    cells
}

/// 1-D `W_p^p` between empirical measures given as sorted samples, by
/// integrating the difference of quantile functions.
pub fn wasserstein_1d_pow(xs_sorted: &[f64], ys_sorted: &[f64], order: u32) -> f64 {
    let (n, m) = (xs_sorted.len(), ys_sorted.len());
    let pow = |d: f64| match order {
        1 => d.abs(),
        2 => d * d,
        _ => d.abs().powi(order as i32),
    };
    if n == m {
        return xs_sorted.iter().zip(ys_sorted).map(|(a, b)| pow(a - b)).sum::<f64>() / n as f64;
    }
    // merge the breakpoints i/n and j/m in exact integer arithmetic (units of 1/(n m))
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ci, mut cj) = (m, n); // next breakpoints of each quantile function
    let mut prev = 0usize;
    let mut total = 0.0;
    while i < n && j < m {
        let next = ci.min(cj);
        total += (next - prev) as f64 * pow(xs_sorted[i] - ys_sorted[j]);
        prev = next;
        if ci == next {
            i += 1;
            ci += m;
        }
        if cj == next {
            j += 1;
            cj += n;
        }
    }
    total / (n as f64 * m as f64)
}
