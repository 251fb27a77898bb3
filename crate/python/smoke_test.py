"""Smoke test for the `fkl` extension module.

Build first:
    cargo build --release -p fkl-py --features extension-module
    cp target/release/libfkl.so python/fkl.so
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fkl  # noqa: E402


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    fwd, rev = fkl.oracle_linear_sde(ca=0.01, cb=1.5, g=0.75, d=1)
    close(fwd, 8.93, 0.01)
    close(rev, 54.71, 0.01)
    close(fkl.linear_sde_quadrature(0.01, 1.5), fwd, 1e-8 * fwd)
    close(fkl.single_mode_fkl(1.0, 0.05, 0.05), 10.0, 1e-6)
    one = fkl.oracle_gaussian(mean_scale=0.5)
    close(fkl.oracle_gaussian(mean_scale=1.5) / one, 9.0, 1e-12)
    close(one, 0.0625 * (1 + 4 * math.pi**2), 1e-12)

    lv = fkl.simulate("lotka-volterra", n_paths=20, seed=7)
    assert lv.shape == (20, 401, 2), lv.shape
    assert len(lv.values()) == 20 * 401 * 2
    assert len(lv.path(3)) == 401
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "lv.fklt")
        lv.save(p)
        back = fkl.Trajectories.load(p)
        assert back.values() == lv.values()

    gauss = fkl.estimate_fkl_gaussian(mean_scale=0.5, n_samples=400, n_time=10, seed=1)
    f = gauss["forward"]
    assert abs(f["value"] - gauss["oracle"]) < 4 * f["std_error"] + 1e-9, gauss

    a = fkl.simulate("linear-sde", n_paths=100, seed=1)
    b = fkl.simulate("linear-sde", n_paths=100, seed=2, drift_coeff=1.5)
    est = fkl.estimate_fkl(a, b, iterations=300, n_samples=50, n_time=5, seed=3)
    assert est["forward"]["value"] > 0 and est["reverse"]["value"] > 0, est

    p, q = a.cloud_at(0.5), b.cloud_at(0.5)
    assert fkl.wasserstein(p, p) == 0.0
    w1, w2 = fkl.wasserstein(p, q, 1), fkl.wasserstein(p, q, 2)
    assert w2 >= w1 - 1e-12
    assert fkl.mmd(p, q) >= 0.0
    assert fkl.sliced_wasserstein(p, q) >= 0.0
    m = fkl.compute_metrics(p, q)
    assert sorted(m) == ["emd", "mmd", "mwd", "swd", "w2"], m

    ranks, friedman = fkl.rank_methods([[0.1, 0.2, 0.3], [0.5, 0.6, 0.7]])
    assert ranks == [1.0, 2.0], ranks
    assert friedman >= 0.0

    try:
        fkl.simulate("nonsense")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown system accepted")

    print(f"fkl {fkl.__version__}: smoke test passed ({lv!r}, metrics {sorted(m)})")


if __name__ == "__main__":
    main()
