import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from msmwc import _kernels_py, kernels

compiled = pytest.mark.skipif("compiled" not in kernels.available(), reason="extension not built")


def _entropy_case(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.dirichlet(np.ones(d)) * 0.9 + 0.1 / d
    x = rng.uniform(-1, 1, d)
    eta = rng.uniform(1e-3, 1 / 64, d)
    b = np.full(d, 1.0 / (4 * d))
    return a, x, eta, b


@compiled
@given(st.integers(0, 10_000), st.integers(2, 40))
def test_entropy_backends_agree(seed, d):
    from msmwc import _kernels

    case = _entropy_case(seed, d)
    wp, lp, _, okp, _, _ = _kernels_py.entropy_solve(*case)
    wc, lc, _, okc, _, _ = _kernels.entropy_solve(*case)
    assert okp and okc
    assert np.allclose(wp, wc, rtol=1e-10, atol=1e-13)
    assert abs(lp - lc) <= 1e-9 * max(1.0, abs(lp))


@compiled
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 6))
def test_ball_backends_agree(seed, k, d):
    from msmwc import _kernels

    rng = np.random.default_rng(seed)
    evals = rng.uniform(0.1, 5.0, (k, d))
    coef = rng.standard_normal((k, d)) * rng.uniform(0.1, 10)
    radius = rng.uniform(0.5, 2.0, k)
    nu_p = np.asarray(_kernels_py.ball_multipliers(evals, coef, radius))
    nu_c = np.asarray(_kernels.ball_multipliers(evals, coef, radius))
    assert np.allclose(nu_p, nu_c, rtol=1e-9, atol=1e-12)


def test_use_switches_and_restores():
    prev = kernels.use("python")
    try:
        assert kernels.backend == "python"
        assert kernels.entropy_solve is _kernels_py.entropy_solve
    finally:
        kernels.use(prev)
    assert kernels.backend == prev


def test_use_rejects_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use("fortran")


@pytest.mark.parametrize("value", ["python", "compiled"])
def test_environment_variable_selects_backend(value):
    env = dict(os.environ, MSMWC_KERNELS=value)
    out = subprocess.run(
        [sys.executable, "-c", "from msmwc import kernels; print(kernels.backend)"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.strip()
    expected = value if value in kernels.available() else "python"
    assert out == expected
