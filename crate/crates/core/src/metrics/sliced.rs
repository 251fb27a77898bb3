//! Sliced and max-sliced Wasserstein distances.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{FklError, Result};
use crate::rng::{self, Rng};

use super::ot::wasserstein_1d_pow;
use super::PointCloud;

fn random_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn project_sorted(c: &PointCloud, theta: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = c.iter().map(|x| x.iter().zip(theta).map(|(a, b)| a * b).sum()).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `W_p^p` of the projections onto `theta`.
fn projected_pow(p: &PointCloud, q: &PointCloud, theta: &[f64], order: u32) -> f64 {
    wasserstein_1d_pow(&project_sorted(p, theta), &project_sorted(q, theta), order)
}

/// Monte Carlo sliced Wasserstein distance over uniform random directions.
pub fn sliced_wasserstein(p: &PointCloud, q: &PointCloud, order: u32, n_projections: usize, seed: u64) -> Result<f64> {
    p.check_dim(q)?;
    if n_projections == 0 || order == 0 {
        return Err(FklError::InvalidParameter("need at least one projection and order >= 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let dirs: Vec<Vec<f64>> = (0..n_projections).map(|_| random_direction(p.dim(), &mut rng)).collect();
    let vals: Vec<f64> = dirs.par_iter().map(|d| projected_pow(p, q, d, order)).collect();
    let mean = vals.iter().sum::<f64>() / n_projections as f64;
    Ok(mean.powf(1.0 / f64::from(order)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxSlicedResult {
    pub value: f64,
    pub direction: Vec<f64>,
}

/// Max-sliced Wasserstein distance: the best of `n_candidates` random
/// directions, refined by projected finite-difference gradient ascent on the
/// sphere with step halving. The value is a lower bound on the true maximum.
pub fn max_sliced_wasserstein(
    p: &PointCloud,
    q: &PointCloud,
    order: u32,
    n_candidates: usize,
    refine_steps: usize,
    seed: u64,
) -> Result<MaxSlicedResult> {
    p.check_dim(q)?;
    if n_candidates == 0 || order == 0 {
        return Err(FklError::InvalidParameter("need at least one candidate and order >= 1".into()));
    }
    let dim = p.dim();
    let mut rng = rng::seeded(seed);
    let cands: Vec<Vec<f64>> = (0..n_candidates).map(|_| random_direction(dim, &mut rng)).collect();
    let scores: Vec<f64> = cands.par_iter().map(|d| projected_pow(p, q, d, order)).collect();
    let (best_idx, mut best) = scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    let mut theta = cands[best_idx].clone();
    if dim > 1 {
        let h = 1e-5;
        let mut step = 0.5;
        for _ in 0..refine_steps {
            let mut grad: Vec<f64> = (0..dim)
                .map(|k| {
                    let mut plus = theta.clone();
                    plus[k] += h;
                    normalize(&mut plus);
                    let mut minus = theta.clone();
                    minus[k] -= h;
                    normalize(&mut minus);
                    (projected_pow(p, q, &plus, order) - projected_pow(p, q, &minus, order)) / (2.0 * h)
                })
                .collect();
            let radial: f64 = grad.iter().zip(&theta).map(|(g, t)| g * t).sum();
            grad.iter_mut().zip(&theta).for_each(|(g, t)| *g -= radial * t);
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-14 {
                break;
            }
            let mut accepted = false;
            while step > 1e-8 {
                let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g / gnorm).collect();
                normalize(&mut cand);
                let s = projected_pow(p, q, &cand, order);
                if s > best {
                    best = s;
                    theta = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    Ok(MaxSlicedResult {
        value: best.max(0.0).powf(1.0 / f64::from(order)),
        direction: theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wasserstein;
    use crate::rng::seeded;

    fn gaussian_cloud(n: usize, dim: usize, shift: &[f64], seed: u64) -> PointCloud {
        let mut rng = seeded(seed);
        let pts = (0..n)
            .flat_map(|_| shift.iter().map(|s| s + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>())
            .collect();
        PointCloud::new(dim, pts).unwrap()
    }

    #[test]
    fn one_dimensional_slices_are_exact() {
        let p = gaussian_cloud(50, 1, &[0.0], 1);
        let q = gaussian_cloud(50, 1, &[0.7], 2);
        let exact = wasserstein(&p, &q, 2).unwrap();
        for n in [1, 3, 17] {
            let s = sliced_wasserstein(&p, &q, 2, n, 5).unwrap();
            assert!((s - exact).abs() < 1e-12);
        }
        assert_eq!(sliced_wasserstein(&p, &p, 2, 10, 0).unwrap(), 0.0);
    }

    #[test]
    fn isotropic_shift_expectation() {
        let v = [1.0, -0.5, 0.5];
        let p = gaussian_cloud(2000, 3, &[0.0; 3], 3);
        // same noise, shifted: isolates the shift term
        let q = PointCloud::new(3, p.iter().flat_map(|x| x.iter().zip(&v).map(|(a, b)| a + b).collect::<Vec<_>>()).collect()).unwrap();
        let s = sliced_wasserstein(&p, &q, 2, 4096, 9).unwrap();
        let want = v.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!((s * s - want).abs() < 0.05 * want, "{} vs {want}", s * s);
    }

    #[test]
    fn max_sliced_finds_the_shift_direction() {
        let p = gaussian_cloud(1000, 2, &[0.0, 0.0], 4);
        let q = PointCloud::new(2, p.iter().flat_map(|x| [x[0] + 2.0, x[1]]).collect()).unwrap();
        let r = max_sliced_wasserstein(&p, &q, 2, 256, 50, 1).unwrap();
        let angle = r.direction[0].abs().min(1.0).acos().to_degrees();
        assert!(angle < 3.0, "angle {angle}");
        assert!((r.value - 2.0).abs() < 0.04, "{}", r.value);
        let s = sliced_wasserstein(&p, &q, 2, 128, 1).unwrap();
        assert!(r.value >= s);
        let back = max_sliced_wasserstein(&q, &p, 2, 256, 50, 1).unwrap();
        assert!((back.value - r.value).abs() < 1e-6);
    }
}
