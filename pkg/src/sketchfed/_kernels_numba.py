"""Compiled kernels. Same random bits and loop semantics as ``_kernels_numpy``.

All kernels are ``nogil`` so independent Monte-Carlo trials can run on threads.
"""
import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


@njit(cache=True, nogil=True)
def _mix64(z):
    z = z + GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _uniform(key, ctr):
    return np.float64(_mix64(key + ctr * GOLDEN) >> _S11) * _TWO_M53


@njit(cache=True, nogil=True)
def _fwht_inplace(x):
    n = x.shape[0]
    h = 1
    while h < n:
        for i in range(0, n, 2 * h):
            for j in range(i, i + h):
                a = x[j]
                b = x[j + h]
                x[j] = a + b
                x[j + h] = a - b
        h *= 2
    s = 1.0 / np.sqrt(n)
    for i in range(n):
        x[i] *= s


def fwht(x):
    """Orthonormal Walsh-Hadamard transform of a 1-D array (returns a new array)."""
    out = np.array(x, dtype=np.float64)
    _fwht_inplace(out)
    return out


@njit(cache=True, nogil=True, error_model="numpy")
def _gaussian_apply(key, d, b, v, w, adjoint):
    # one pass over the implicit matrix; forward: w = G v, adjoint: v += G^T w
    # v is (d, k), w is (b, k)
    d_even = d + (d & 1)
    k = v.shape[1]
    scale = 1.0 / np.sqrt(b)
    acc = np.zeros(k)
    for i in range(b):
        acc[:] = 0.0
        row = np.uint64(i) * np.uint64(d_even)
        for j in range(0, d_even, 2):
            ctr = row + np.uint64(j)
            u1 = _uniform(key, ctr)
            u2 = _uniform(key, ctr + _ONE)
            rad = np.sqrt(-2.0 * np.log(1.0 - u1))
            ang = _TWO_PI * u2
            z0 = rad * np.cos(ang)
            z1 = rad * np.sin(ang)
            last = j + 1 >= d
            for c in range(k):
                if adjoint:
                    v[j, c] += z0 * w[i, c]
                    if not last:
                        v[j + 1, c] += z1 * w[i, c]
                else:
                    acc[c] += z0 * v[j, c]
                    if not last:
                        acc[c] += z1 * v[j + 1, c]
        if not adjoint:
            for c in range(k):
                w[i, c] = acc[c] * scale
    if adjoint:
        for j in range(d):
            for c in range(k):
                v[j, c] *= scale


def _as2d(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape(x.shape[0], -1)


def gaussian_sk(key, d, b, v):
    """G v for v of shape (d,) or (d, k)."""
    out = np.empty((b,) + v.shape[1:])
    _gaussian_apply(np.uint64(key), d, b, _as2d(v), out.reshape(b, -1), False)
    return out


def gaussian_desk(key, d, b, w):
    """G^T w for w of shape (b,) or (b, k)."""
    out = np.zeros((d,) + w.shape[1:])
    _gaussian_apply(np.uint64(key), d, b, out.reshape(d, -1), _as2d(w), True)
    return out


@njit(cache=True, nogil=True)
def _scatter_add(idx, vals, out):
    for i in range(idx.shape[0]):
        out[idx[i]] += vals[i]


@njit(cache=True, nogil=True)
def _countsketch_sk(buckets, signs, v, out):
    for j in range(v.shape[0]):
        out[buckets[j]] += signs[j] * v[j]


@njit(cache=True, nogil=True)
def _countsketch_desk(buckets, signs, w, out):
    for j in range(out.shape[0]):
        out[j] = signs[j] * w[buckets[j]]


def countsketch_sk(buckets, signs, v, b):
    out = np.zeros(b)
    _countsketch_sk(buckets, signs, np.ascontiguousarray(v, dtype=np.float64), out)
    return out


def countsketch_desk(buckets, signs, w):
    out = np.empty(buckets.shape[0])
    _countsketch_desk(buckets, signs, np.ascontiguousarray(w, dtype=np.float64), out)
    return out


def scatter_add(idx, vals, n):
    out = np.zeros(n)
    _scatter_add(idx, np.ascontiguousarray(vals, dtype=np.float64), out)
    return out
