import numpy as np
import pytest

from msmwc import olo_suites as S
from msmwc.olo_base import ZeroLearner


def _labels(parts, key):
    return [dict(kv.split("=") for kv in lab[lab.index("(") + 1 : -1].split(","))[key] for lab in parts.labels]


def test_ons_grid_example():
    parts = S.ons_parts(4, 2, 16)
    assert parts.etas.size == 32
    ds = sorted({int(v) for v in _labels(parts, "d")})
    assert ds == list(range(-5, 3))
    i = parts.labels.index("ons(d=2,s=1)")
    assert parts.etas[i] == 1 / 512
    assert parts.bank.eta[i] == 3 / 512 and parts.bank.radius[i] == 4


def test_gd_grid_examples():
    parts = S.gd_parts(2, 2, 4)
    assert parts.etas.size == 8
    big = S.gd_parts(8, 2, 16)
    i = big.labels.index("gd(d=3,s=2)")
    assert big.etas[i] == 1 / 1024 and big.bank.eta[i] == pytest.approx(1 / 16)
    j = big.labels.index("gd(d=0,s=1)")
    assert big.etas[j] == 1 / 64 and big.bank.eta[j] == 1 / 64


def test_adagrad_grid():
    parts = S.adagrad_parts(2, 2, 4)
    # 4 radii x 3 t-values x 8 l-values (l from -2 to ceil(log2 32) = 5)
    assert parts.etas.size == 96
    full = S.adagrad_parts(1, 2, 16)
    i = full.labels.index("ag(d=0,t=1,l=0)")
    assert full.etas[i] == 1 / 128 and full.bank.eta_prime[i] == 1 / 64 and full.bank.eta[i] == 1 / 64
    assert np.all(64 * full.bank.eta_prime * full.bank.radius <= 1 + 1e-12)


def test_adagrad_thinning_keeps_endpoints():
    ls = S.adagrad_l_axis(1, 5000, 5)
    full = S.adagrad_l_axis(1, 5000)
    assert ls[0] == full[0] and ls[-1] == full[-1] and len(ls) == 5
    assert S.adagrad_parts(1, 8, 5000, max_experts=1120).etas.size <= 1120


def test_metagrad_grid():
    parts = S.metagrad_parts(1, 2, 8)
    assert parts.etas.size == 4 and parts.etas[0] == 1 / 128
    assert np.all(64 * parts.etas * 1 <= 1)
    assert S.build_metagrad(1, 2, 8).recentered


def test_onsul_examples():
    assert S.onsul_rates(1, 1, 10).size == 7
    rule = S.onsul_active(1, 1, 10)
    ks = np.arange(1, 8)
    assert ks[rule(4.0)].tolist() == [k for k in ks if 2**k >= 4]
    pool, _ = S.build_onsul(1.0, 1.0, 10, 2, lambda: 1.0)
    pool.begin_round(np.zeros(2))
    assert pool.banks[0].z1 == 1.0


def test_union_size_and_order():
    u = S.build_union3(1.0, 2, 16)
    sizes = [S.ons_parts(1, 2, 16).etas.size, S.gd_parts(1, 2, 16).etas.size, S.adagrad_parts(1, 2, 16).etas.size]
    assert u.K == sum(sizes)
    assert [lab.split("(")[0] for lab in u.labels] == ["ons"] * sizes[0] + ["gd"] * sizes[1] + ["ag"] * sizes[2]


def test_tiny_domain_falls_back_to_zero():
    parts = S.ons_parts(1e-6, 2, 16)
    assert isinstance(parts.bank, ZeroLearner)


def test_master_precondition_per_suite():
    for parts in (S.ons_parts(2, 3, 64), S.gd_parts(2, 3, 64), S.adagrad_parts(2, 3, 64)):
        assert np.all(32 * parts.etas * parts.bank.radius <= 1 + 1e-12)


def test_grid_coverage_each_axis():
    # the s axis of the ONS grid: rates 2^-s for s = 1..ceil(log2 T) cover [1/(2T), 1/2] dyadically
    T = 100
    s = np.arange(1, int(np.ceil(np.log2(T))) + 1)
    rates = 2.0**-s
    for target in np.geomspace(1 / T, 0.5, 100):
        assert np.any((rates <= target * (1 + 1e-12)) & (target <= 2 * rates * (1 + 1e-12)))
