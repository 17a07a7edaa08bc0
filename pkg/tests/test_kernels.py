"""The compiled and numpy kernel paths must agree (same random bits, rounding only)."""
import os
import subprocess
import sys

import numpy as np
import pytest

from sketchfed import _kernels
from sketchfed import _kernels_numpy as npk
from sketchfed.sketch import _TAG_GAUSS, _stream_key

nbk = pytest.importorskip("sketchfed._kernels_numba")


def test_numpy_mix64_matches_python_reference():
    from sketchfed.sketch import _mix64
    z = np.array([0, 1, 2**63, 2**64 - 1, 123456789], dtype=np.uint64)
    assert [int(a) for a in npk.mix64(z)] == [_mix64(int(a)) for a in z]


def test_counter_uniform_in_unit_interval():
    u = npk.counter_uniform(99, np.arange(100_000, dtype=np.uint64))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 5 * np.sqrt(1 / 12 / u.size)


@pytest.mark.parametrize("n", [1, 2, 16, 1024])
def test_fwht_parity(n):
    x = np.random.default_rng(n).standard_normal(n)
    np.testing.assert_allclose(nbk.fwht(x), npk.fwht(x), rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("d,b,k", [(1, 1, 1), (7, 3, 1), (64, 8, 2), (1000, 37, 3)])
def test_gaussian_parity(d, b, k):
    key = _stream_key(5, _TAG_GAUSS)
    rng = np.random.default_rng(d)
    V = rng.standard_normal((d, k))
    W = rng.standard_normal((b, k))
    np.testing.assert_allclose(nbk.gaussian_sk(key, d, b, V), npk.gaussian_sk(key, d, b, V), rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(nbk.gaussian_desk(key, d, b, W), npk.gaussian_desk(key, d, b, W), rtol=1e-11, atol=1e-12)
    v = V[:, 0]
    assert nbk.gaussian_sk(key, d, b, v).shape == (b,)
    np.testing.assert_allclose(nbk.gaussian_sk(key, d, b, v), npk.gaussian_sk(key, d, b, v), rtol=1e-11, atol=1e-12)


def test_countsketch_and_scatter_parity():
    rng = np.random.default_rng(0)
    d, b = 300, 17
    buckets = rng.integers(0, b, d)
    signs = rng.choice([-1.0, 1.0], d)
    v, w = rng.standard_normal(d), rng.standard_normal(b)
    np.testing.assert_allclose(nbk.countsketch_sk(buckets, signs, v, b), npk.countsketch_sk(buckets, signs, v, b), rtol=1e-13)
    np.testing.assert_array_equal(nbk.countsketch_desk(buckets, signs, w), npk.countsketch_desk(buckets, signs, w))
    idx = rng.integers(0, 64, 40)
    vals = rng.standard_normal(40)
    np.testing.assert_allclose(nbk.scatter_add(idx, vals, 64), npk.scatter_add(idx, vals, 64), rtol=1e-13, atol=1e-15)


def test_gaussian_block_matches_compiled_dense():
    d, b = 20, 6
    key = _stream_key(1, _TAG_GAUSS)
    dense = npk.gaussian_block(key, d, 0, b) / np.sqrt(b)
    eye = np.eye(d)
    via_nb = nbk.gaussian_sk(key, d, b, eye)
    np.testing.assert_allclose(via_nb, dense, rtol=1e-12, atol=1e-14)


def _flag_state(value):
    env = dict(os.environ, SKETCHFED_DISABLE_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "from sketchfed import _kernels as k; print(k.USE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_flag_selects_numpy_path():
    assert _flag_state("1") == "False"
    assert _flag_state("") == "True"


def test_default_process_uses_compiled_path():
    if os.environ.get("SKETCHFED_DISABLE_NUMBA", "").lower() in ("1", "true", "yes"):
        assert _kernels.active is npk
    else:
        assert _kernels.USE_NUMBA
