use rayon::prelude::*;

use crate::error::{FklError, Result};

use super::PointCloud;

fn kernel_sum(a: &PointCloud, b: &PointCloud, gamma: f64, skip_diagonal: bool) -> f64 {
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.point(i);
            let mut s = 0.0;
            for (j, y) in b.iter().enumerate() {
                if skip_diagonal && i == j {
                    continue;
                }
                let d2: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
                s += (-gamma * d2).exp();
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Unbiased estimate of the squared RBF-kernel MMD: within-cloud terms
/// exclude the diagonal, the cross term is the full mean.
pub fn mmd2_unbiased(p: &PointCloud, q: &PointCloud, bandwidth: f64) -> Result<f64> {
    p.check_dim(q)?;
    if p.len() < 2 || q.len() < 2 {
        return Err(FklError::InvalidParameter("MMD needs at least two points per cloud".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(FklError::InvalidParameter("bandwidth must be positive".into()));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let (n, m) = (p.len() as f64, q.len() as f64);
    let kxx = kernel_sum(p, p, gamma, true) / (n * (n - 1.0));
    let kyy = kernel_sum(q, q, gamma, true) / (m * (m - 1.0));
    let kxy = kernel_sum(p, q, gamma, false) / (n * m);
    Ok(kxx + kyy - 2.0 * kxy)
}

/// `sqrt(max(0, MMD²))`.
pub fn mmd_rbf(p: &PointCloud, q: &PointCloud, bandwidth: f64) -> Result<f64> {
    Ok(mmd2_unbiased(p, q, bandwidth)?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::rng::seeded;

    fn cloud_1d(n: usize, mu: f64, eps: f64, seed: u64) -> PointCloud {
        let mut rng = seeded(seed);
        PointCloud::new(1, (0..n).map(|_| mu + eps * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn identical_samples_report_zero() {
        let p = cloud_1d(100, 0.0, 1.0, 1);
        assert!(mmd2_unbiased(&p, &p, 1.0).unwrap() <= 0.0);
        assert_eq!(mmd_rbf(&p, &p, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_limit() {
        let mu = 1.3;
        let p = cloud_1d(300, 0.0, 1e-8, 2);
        let q = cloud_1d(300, mu, 1e-8, 3);
        let want = 2.0 * (1.0 - (-mu * mu / 2.0f64).exp());
        let got = mmd2_unbiased(&p, &q, 1.0).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn saturates_under_separation() {
        let p = cloud_1d(200, 0.0, 1.0, 4);
        let base = cloud_1d(200, 0.0, 1.0, 5);
        let at = |sep: f64| {
            let q = PointCloud::new(1, base.iter().map(|x| x[0] + sep).collect()).unwrap();
            mmd_rbf(&p, &q, 1.0).unwrap()
        };
        let (a, b) = (at(12.0), at(24.0));
        assert!(((a - b) / a).abs() < 0.01, "{a} vs {b}");
        assert!((mmd_rbf(&p, &base, 1.0).unwrap() - mmd_rbf(&base, &p, 1.0).unwrap()).abs() < 1e-12);
    }
}
