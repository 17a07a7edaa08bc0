"""Matrix-free linear sketches ``sk(v) = R v`` and ``desk(w) = R^T w``.

Every operator is a pure function of ``(kind, d, b, seed)``. Randomness comes
from a counter-based splitmix64 stream, so two parties holding the same round
seed build bit-identical operators without exchanging any matrix.

Kinds
-----
gaussian
    R has i.i.d. N(0, 1/b) entries, regenerated on every call (no b x d storage).
srht
    R = sqrt(n/b) S H D on the input zero-padded to n = 2^ceil(log2 d): D is a
    random sign diagonal, H the orthonormal Walsh-Hadamard matrix and S picks b
    rows uniformly with replacement.
countsketch
    Coordinate j goes to bucket h(j) with sign s(j).
identity
    b = d, testing only.
"""
from __future__ import annotations

import enum

import numpy as np

from . import _kernels
from .errors import ConfigError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# per-purpose stream tags
_TAG_GAUSS = 0x47415553
_TAG_SIGN = 0x5349474E
_TAG_ROWS = 0x524F5753
_TAG_BUCKET = 0x4255434B


def _mix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def round_seed(master: int, t: int) -> int:
    """Seed of the round-``t`` sketch, shared by the server and every client.

    An injective function of ``t`` for a fixed master seed (splitmix64 is a
    bijection on 64-bit words and ``t -> t * golden`` is injective mod 2^64).
    """
    return _mix64((_mix64(master & _MASK) + (t & _MASK) * _GOLDEN) & _MASK)


def _stream_key(seed: int, tag: int) -> int:
    return _mix64((seed & _MASK) ^ tag)


class SketchKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SRHT = "srht"
    COUNTSKETCH = "countsketch"
    IDENTITY = "identity"


def next_pow2(n: int) -> int:
    return 1 << max(0, (int(n) - 1).bit_length())


def _check_len(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(f"{what} length mismatch: expected {n}, got {x.shape}")
    return x


class SketchOperator:
    """Immutable sketch operator; see :func:`make_operator`."""

    __slots__ = ("kind", "d", "b", "seed", "n_pad", "_key", "_signs", "_rows", "_buckets", "_scale")

    def __init__(self, kind: SketchKind, d: int, b: int, seed: int):
        self.kind = kind
        self.d = d
        self.b = b
        self.seed = seed & _MASK
        self.n_pad = next_pow2(d)
        self._key = self._signs = self._rows = self._buckets = None
        self._scale = 1.0
        if kind is SketchKind.GAUSSIAN:
            self._key = _stream_key(self.seed, _TAG_GAUSS)
        elif kind is SketchKind.SRHT:
            n = self.n_pad
            self._signs = _signs(_stream_key(self.seed, _TAG_SIGN), n)
            rows = _kernels.counter_hash(_stream_key(self.seed, _TAG_ROWS), np.arange(b, dtype=np.uint64))
            self._rows = (rows % np.uint64(n)).astype(np.int64)
            self._scale = np.sqrt(n / b)
        elif kind is SketchKind.COUNTSKETCH:
            idx = np.arange(d, dtype=np.uint64)
            h = _kernels.counter_hash(_stream_key(self.seed, _TAG_BUCKET), idx)
            self._buckets = (h % np.uint64(b)).astype(np.int64)
            self._signs = _signs(_stream_key(self.seed, _TAG_SIGN), d)

    def __repr__(self):
        return f"SketchOperator(kind={self.kind.value!r}, d={self.d}, b={self.b}, seed={self.seed})"

    def sk(self, v) -> np.ndarray:
        v = _check_len(v, self.d, "sk input")
        kind = self.kind
        if kind is SketchKind.GAUSSIAN:
            return _kernels.gaussian_sk(self._key, self.d, self.b, v)
        if kind is SketchKind.SRHT:
            x = np.zeros(self.n_pad)
            x[: self.d] = v
            x *= self._signs
            return _kernels.fwht(x)[self._rows] * self._scale
        if kind is SketchKind.COUNTSKETCH:
            return _kernels.countsketch_sk(self._buckets, self._signs, v, self.b)
        return v.copy()

    def desk(self, w) -> np.ndarray:
        w = _check_len(w, self.b, "desk input")
        kind = self.kind
        if kind is SketchKind.GAUSSIAN:
            return _kernels.gaussian_desk(self._key, self.d, self.b, w)
        if kind is SketchKind.SRHT:
            y = _kernels.scatter_add(self._rows, w * self._scale, self.n_pad)
            y = _kernels.fwht(y)
            y *= self._signs
            return y[: self.d]
        if kind is SketchKind.COUNTSKETCH:
            return _kernels.countsketch_desk(self._buckets, self._signs, w)
        return w.copy()

    def sk_many(self, V) -> np.ndarray:
        """Sketch the columns of ``V`` (d x k) -> (b x k). Gaussian entries are generated once."""
        V = np.asarray(V, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != self.d:
            raise ValueError(f"sk_many input must be ({self.d}, k), got {V.shape}")
        if self.kind is SketchKind.GAUSSIAN:
            return _kernels.gaussian_sk(self._key, self.d, self.b, V)
        return np.stack([self.sk(V[:, c]) for c in range(V.shape[1])], axis=1)

    def desk_many(self, W) -> np.ndarray:
        """Desketch the columns of ``W`` (b x k) -> (d x k)."""
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != self.b:
            raise ValueError(f"desk_many input must be ({self.b}, k), got {W.shape}")
        if self.kind is SketchKind.GAUSSIAN:
            return _kernels.gaussian_desk(self._key, self.d, self.b, W)
        return np.stack([self.desk(W[:, c]) for c in range(W.shape[1])], axis=1)

    def dense(self) -> np.ndarray:
        """Materialize R (b x d) by applying sk to the standard basis. Small d only."""
        eye = np.eye(self.d)
        return np.stack([self.sk(eye[j]) for j in range(self.d)], axis=1)


def _signs(key, n):
    h = _kernels.counter_hash(key, np.arange(n, dtype=np.uint64))
    return np.where((h >> np.uint64(63)) == 1, 1.0, -1.0)


def make_operator(kind, d: int, b: int, seed: int) -> SketchOperator:
    try:
        kind = SketchKind(kind)
    except ValueError:
        raise ConfigError("sketch.kind", f"unknown sketch kind {kind!r}") from None
    d, b = int(d), int(b)
    if d < 1:
        raise ConfigError("sketch.d", f"must be >= 1, got {d}")
    if b < 1:
        raise ConfigError("sketch.b", f"must be >= 1, got {b}")
    if kind is SketchKind.IDENTITY and b != d:
        raise ConfigError("sketch.b", f"identity sketch requires b == d ({d}), got {b}")
    if b > next_pow2(d):
        raise ConfigError("sketch.b", f"must not exceed padded dimension {next_pow2(d)}, got {b}")
    return SketchOperator(kind, d, b, int(seed))


def sk(op: SketchOperator, v) -> np.ndarray:
    return op.sk(v)


def desk(op: SketchOperator, w) -> np.ndarray:
    return op.desk(w)


def fwht(v) -> np.ndarray:
    """Orthonormal fast Walsh-Hadamard transform; ``len(v)`` must be a power of two."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0] if v.ndim == 1 else 0
    if n < 1 or n & (n - 1):
        raise ValueError(f"fwht length must be a power of two, got {v.shape}")
    return _kernels.fwht(v)
