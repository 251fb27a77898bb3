use fkl_core::fkl::{estimate_fkl, FklConfig, TimeSampler};
use fkl_core::io::{read_trajectories, write_trajectories};
use fkl_core::metrics::{mmd_rbf, rank_methods, sliced_wasserstein, wasserstein, PointCloud};
use fkl_core::rng;
use fkl_core::sde::{euler_maruyama, SimConfig, SystemSpec};
use fkl_core::spectral::{from_spectral, to_spectral, TimeGrid};
use fkl_core::{cm_norm_sq, matern_covariance, Complex64, EmpiricalSoftmaxField, GaussianMeasure, SpectralCoeffs, VelocityField};
use proptest::prelude::*;

fn cloud(dim: usize, max_len: usize) -> impl Strategy<Value = PointCloud> {
    (2..=max_len).prop_flat_map(move |n| {
        prop::collection::vec(-5.0..5.0f64, n * dim).prop_map(move |pts| PointCloud::new(dim, pts).unwrap())
    })
}

fn coeffs(n_modes: usize, out_dim: usize) -> impl Strategy<Value = SpectralCoeffs> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n_modes * out_dim).prop_map(move |v| {
        let c = v
            .into_iter()
            .enumerate()
            // the constant mode of a real function has no imaginary part
            .map(|(i, (re, im))| Complex64::new(re, if i < out_dim { 0.0 } else { im }))
            .collect();
        SpectralCoeffs::new(n_modes, out_dim, c).unwrap()
    })
}

fn shifted(p: &PointCloud, by: &[f64]) -> PointCloud {
    let pts = p.iter().flat_map(|x| x.iter().zip(by).map(|(a, b)| a + b)).collect();
    PointCloud::new(p.dim(), pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_round_trip(c in coeffs(5, 2)) {
        let grid = TimeGrid::unit(32).unwrap();
        let back = to_spectral(&from_spectral(&c, &grid), 5).unwrap();
        for (a, b) in back.coeffs().iter().zip(c.coeffs()) {
            prop_assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn cm_norm_is_quadratic(c in coeffs(6, 1), a in -3.0..3.0f64) {
        let cov = matern_covariance(1.0, 1.0, 1.0, 6, 1).unwrap();
        let base = cm_norm_sq(&c, &cov, 6);
        prop_assert!(base >= 0.0);
        let scaled = cm_norm_sq(&c.scaled(a), &cov, 6);
        prop_assert!((scaled - a * a * base).abs() <= 1e-9 * (1.0 + base * a * a));
    }

    #[test]
    fn metrics_are_symmetric_and_vanish_on_identity(p in cloud(2, 8), q in cloud(2, 8)) {
        for order in [1, 2] {
            let pq = wasserstein(&p, &q, order).unwrap();
            let qp = wasserstein(&q, &p, order).unwrap();
            prop_assert!((pq - qp).abs() < 1e-9);
            prop_assert!(wasserstein(&p, &p, order).unwrap().abs() < 1e-12);
        }
        prop_assert!((mmd_rbf(&p, &q, 1.0).unwrap() - mmd_rbf(&q, &p, 1.0).unwrap()).abs() < 1e-12);
        prop_assert_eq!(mmd_rbf(&p, &p, 1.0).unwrap(), 0.0);
        let s1 = sliced_wasserstein(&p, &q, 2, 32, 5).unwrap();
        let s2 = sliced_wasserstein(&q, &p, 2, 32, 5).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn w2_dominates_w1(p in cloud(3, 7), q in cloud(3, 7)) {
        let w1 = wasserstein(&p, &q, 1).unwrap();
        let w2 = wasserstein(&p, &q, 2).unwrap();
        prop_assert!(w2 >= w1 - 1e-9, "w1={w1} w2={w2}");
    }

    #[test]
    fn metrics_are_translation_invariant(p in cloud(2, 6), q in cloud(2, 6), sx in -10.0..10.0f64, sy in -10.0..10.0f64) {
        let (ps, qs) = (shifted(&p, &[sx, sy]), shifted(&q, &[sx, sy]));
        for order in [1, 2] {
            let a = wasserstein(&p, &q, order).unwrap();
            let b = wasserstein(&ps, &qs, order).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a), "{a} vs {b}");
        }
        let a = mmd_rbf(&p, &q, 1.0).unwrap();
        let b = mmd_rbf(&ps, &qs, 1.0).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ranks_ignore_monotone_transforms(scores in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 3), 2..6)) {
        let a = rank_methods(&scores, true).unwrap();
        let transformed: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|v| v.exp() * 7.0 - 1.0).collect()).collect();
        let b = rank_methods(&transformed, true).unwrap();
        prop_assert_eq!(&a.avg_ranks, &b.avg_ranks);
        let m = scores.len() as f64;
        prop_assert!(a.friedman_statistic >= -1e-12);
        let mean_rank: f64 = b.avg_ranks.iter().sum::<f64>() / m;
        prop_assert!((mean_rank - (m + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_field_is_permutation_invariant(
        pool in prop::collection::vec(coeffs(3, 1), 2..6),
        x in coeffs(3, 1),
        t in 0.0..0.99f64,
        rot in 0usize..6,
    ) {
        let cov = matern_covariance(1.0, 1.0, 1.0, 3, 1).unwrap();
        let a = EmpiricalSoftmaxField::new(pool.clone(), cov.clone()).unwrap();
        let mut permuted = pool.clone();
        let k = rot % permuted.len();
        permuted.rotate_left(k);
        let b = EmpiricalSoftmaxField::new(permuted, cov).unwrap();
        let (va, vb) = (a.eval(&x, t).unwrap(), b.eval(&x, t).unwrap());
        for (p, q) in va.coeffs().iter().zip(vb.coeffs()) {
            prop_assert!((p - q).norm() <= 1e-9 * (1.0 + p.norm()), "{p} vs {q}");
        }
    }

    #[test]
    fn time_samplers_stay_in_support(seed in any::<u64>(), t_max in 0.5..0.9999f64) {
        let samplers = [
            TimeSampler::Uniform { t_max },
            TimeSampler::LogitNormal { mean: 0.0, std: 1.0, t_max },
            TimeSampler::ImportanceOverOneMinusT { t_min: 1e-6, t_max },
        ];
        let mut r = rng::seeded(seed);
        for s in samplers {
            let (lo, hi) = s.support();
            for _ in 0..50 {
                let t = s.sample(&mut r);
                prop_assert!(t >= lo && t <= hi, "{s:?}: {t}");
            }
        }
    }
}

#[test]
fn identical_fields_give_exactly_zero() {
    let cov = matern_covariance(1.0, 1.0, 1.0, 4, 1).unwrap();
    let measure = GaussianMeasure::centered(cov.clone());
    let mut r = rng::seeded(3);
    let pool: Vec<_> = (0..20).map(|_| measure.sample(&mut r)).collect();
    let field = EmpiricalSoftmaxField::new(pool, cov).unwrap();
    let cfg = FklConfig { n_function_samples: 20, n_time_per_function: 5, n_sum_modes: 4, sampler: TimeSampler::default(), seed: 1 };
    let est = estimate_fkl(&field, &field, &measure, &measure, &cfg).unwrap();
    assert_eq!(est.value, 0.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn trajectories_round_trip_bitwise() {
    let spec = SystemSpec::by_name("lotka-volterra").unwrap();
    let ds = euler_maruyama(&spec.build().unwrap(), &SimConfig { horizon: 1.0, dt: 0.02, n_paths: 4, seed: 11 }).unwrap();
    let mut buf = Vec::new();
    write_trajectories(&ds, &mut buf).unwrap();
    let back = read_trajectories(buf.as_slice()).unwrap();
    assert_eq!(back.shape(), ds.shape());
    assert!(back.values().iter().zip(ds.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn simulations_repeat_and_seeds_do_not_alias() {
    let sys = SystemSpec::by_name("linear-sde").unwrap().build().unwrap();
    let run = |seed| euler_maruyama(&sys, &SimConfig { horizon: 1.0, dt: 0.1, n_paths: 3, seed }).unwrap();
    assert_eq!(run(2).values(), run(2).values());
    // path 1 of seed 3 must not replay path 0 of seed 2
    assert_ne!(run(2).path(0), run(3).path(1));
}
