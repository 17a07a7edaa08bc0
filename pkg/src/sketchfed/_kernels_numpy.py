"""Pure-numpy reference kernels.

These are the fallback path (``SKETCHFED_DISABLE_NUMBA=1``) and the cross-check
for the compiled kernels in :mod:`sketchfed._kernels_numba`. Both paths draw
identical random bits; they may differ only in floating-point summation order.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi

# rows * columns of Gaussian entries materialized at once
_BLOCK_ENTRIES = 1 << 18


def mix64(z):
    """splitmix64 finalizer over a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64) + GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def counter_hash(key, ctr):
    """Counter-based stream: output ``ctr + 1`` of a splitmix64 generator started at ``key``."""
    return mix64(np.uint64(key) + np.asarray(ctr, dtype=np.uint64) * GOLDEN)


def counter_uniform(key, ctr):
    """Uniform doubles in [0, 1) from the top 53 bits of :func:`counter_hash`."""
    return (counter_hash(key, ctr) >> _S11).astype(np.float64) * _TWO_M53


def fwht(x):
    """Orthonormal Walsh-Hadamard transform of a 1-D array (returns a new array)."""
    x = np.array(x, dtype=np.float64)
    n = x.shape[0]
    h = 1
    while h < n:
        y = x.reshape(-1, 2, h)
        a = y[:, 0, :].copy()
        b = y[:, 1, :]
        y[:, 0, :] = a + b
        y[:, 1, :] = a - b
        h *= 2
    return x * (1.0 / np.sqrt(n))


def gaussian_block(key, d, i0, i1):
    """Unscaled N(0, 1) entries of rows ``i0:i1`` of the implicit Gaussian matrix.

    Entry (i, j) lives at counter ``i * d_even + j`` where ``d_even`` rounds d
    up to even; Box-Muller pairs (2p, 2p+1) share one (u1, u2) draw, cos for
    the even slot and sin for the odd slot.
    """
    d_even = d + (d & 1)
    half = d_even // 2
    rows = np.arange(i0, i1, dtype=np.uint64)[:, None]
    pairs = np.arange(half, dtype=np.uint64)[None, :]
    base = rows * np.uint64(d_even) + np.uint64(2) * pairs
    u1 = counter_uniform(key, base)
    u2 = counter_uniform(key, base + np.uint64(1))
    rad = np.sqrt(-2.0 * np.log(1.0 - u1))
    ang = _TWO_PI * u2
    out = np.empty((i1 - i0, d_even))
    out[:, 0::2] = rad * np.cos(ang)
    out[:, 1::2] = rad * np.sin(ang)
    return out[:, :d]


def _row_blocks(d, b):
    step = max(1, _BLOCK_ENTRIES // max(d, 1))
    for i0 in range(0, b, step):
        yield i0, min(b, i0 + step)


def gaussian_sk(key, d, b, v):
    """G v for v of shape (d,) or (d, k)."""
    scale = 1.0 / np.sqrt(b)
    out = np.empty((b,) + v.shape[1:])
    for i0, i1 in _row_blocks(d, b):
        out[i0:i1] = gaussian_block(key, d, i0, i1) @ v
    return out * scale


def gaussian_desk(key, d, b, w):
    """G^T w for w of shape (b,) or (b, k)."""
    scale = 1.0 / np.sqrt(b)
    out = np.zeros((d,) + w.shape[1:])
    for i0, i1 in _row_blocks(d, b):
        out += gaussian_block(key, d, i0, i1).T @ w[i0:i1]
    return out * scale


def countsketch_sk(buckets, signs, v, b):
    return np.bincount(buckets, weights=signs * v, minlength=b).astype(np.float64)


def countsketch_desk(buckets, signs, w):
    return signs * w[buckets]


def scatter_add(idx, vals, n):
    """out[idx[i]] += vals[i] in index order."""
    return np.bincount(idx, weights=vals, minlength=n).astype(np.float64)
