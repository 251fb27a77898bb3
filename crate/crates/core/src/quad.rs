//! One-dimensional quadrature.

use crate::error::{FklError, Result};

/// Composite Simpson rule on `[a, b]` with an odd number of nodes.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n_nodes: usize) -> Result<f64> {
    if n_nodes < 3 || n_nodes % 2 == 0 {
        return Err(FklError::InvalidParameter(format!(
            "Simpson rule needs an odd node count >= 3, got {n_nodes}"
        )));
    }
    let n_int = n_nodes - 1;
    let h = (b - a) / n_int as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n_int {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    Ok(acc * h / 3.0)
}

/// Adaptive Simpson with Richardson correction, to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}
