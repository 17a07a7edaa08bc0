"""Statistical checks of sketch concentration and unbiasedness, Hessian
spectrum estimation, and convergence-rate slope fitting.

Monte-Carlo trials use operators seeded with ``round_seed(seed, i)``, so a
trial is reproducible on its own and trials may run on any number of threads
(``SKETCHFED_THREADS``) without changing any result.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .sketch import SketchKind, make_operator, round_seed


def max_threads() -> int:
    env = os.environ.get("SKETCHFED_THREADS", "").strip()
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ConfigError("SKETCHFED_THREADS", f"expected an integer, got {env!r}") from None
    return n


def _map_trials(fn, n_trials, chunk=2048):
    """Evaluate ``fn(i0, i1) -> array`` over chunks of trial indices, in order."""
    bounds = [(i, min(n_trials, i + chunk)) for i in range(0, n_trials, chunk)]
    threads = min(max_threads(), len(bounds)) or 1
    if threads == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    return np.concatenate(parts) if parts else np.zeros(0)


def fixed_unit_pair(d, seed=0, orthogonal=True):
    """Seeded unit vectors g, h (orthogonal unless ``orthogonal=False``)."""
    rng = np.random.default_rng([seed, 0x6768])
    g = rng.standard_normal(d)
    g /= np.linalg.norm(g)
    h = rng.standard_normal(d)
    if orthogonal and d > 1:
        h -= np.dot(h, g) * g
    h /= np.linalg.norm(h)
    return g, h


# ---------------------------------------------------------------------------
# concentration of vector products

def envelope(kind, d, b, delta) -> float:
    """Deviation envelope for unit vectors: log^1.5(d/delta)/sqrt(b), or log(1/delta) for count-sketch."""
    if SketchKind(kind) is SketchKind.COUNTSKETCH:
        return math.log(1.0 / delta)
    return math.log(d / delta) ** 1.5 / math.sqrt(b)


def product_deviations(kind, d, b, n_trials, seed=0, g=None, h=None) -> np.ndarray:
    """|<desk(sk(g)), h> - <g, h>| over ``n_trials`` fresh operators.

    Evaluated as <sk(g), sk(h)>, which equals <desk(sk(g)), h> by adjointness
    and needs one pass over a Gaussian operator instead of two.
    """
    if g is None or h is None:
        g, h = fixed_unit_pair(d, seed)
    G = np.stack([np.asarray(g, float), np.asarray(h, float)], axis=1)
    # same memory layout as the sketched columns, so the identity kind gives exact zeros
    exact = float(np.dot(G[:, 0], G[:, 1]))

    def chunk(i0, i1):
        out = np.empty(i1 - i0)
        for i in range(i0, i1):
            op = make_operator(kind, d, b, round_seed(seed, i))
            S = op.sk_many(G)
            out[i - i0] = abs(float(np.dot(S[:, 0], S[:, 1])) - exact)
        return out

    return _map_trials(chunk, n_trials)


def quantile_bounds(x, q, z=3.0):
    """Point estimate of the q-quantile and an order-statistic confidence interval."""
    xs = np.sort(x)
    n = xs.size
    half = z * math.sqrt(n * q * (1.0 - q))
    lo = xs[max(0, int(math.floor(n * q - half)) - 1)]
    hi = xs[min(n - 1, int(math.ceil(n * q + half)))]
    return float(np.quantile(x, q)), float(lo), float(hi)


@dataclass
class ConcentrationReport:
    kind: str
    d: int
    b: int
    delta: float
    trials: int
    quantile: float
    quantile_lo: float
    quantile_hi: float
    envelope: float
    constant: float | None = None
    bound: float | None = None
    passed: bool | None = None

    def to_dict(self):
        return asdict(self)


def test_concentration(kind, d, b, delta, trials, seed=0, constant=None, g=None, h=None):
    """Empirical (1-delta)-quantile of the vector-product deviation vs ``constant * envelope``.

    Without ``constant`` the report is a calibration cell: ``constant`` is set to
    quantile / envelope and ``passed`` is left as None.
    """
    kind = SketchKind(kind).value
    if trials < 10.0 / delta:
        raise ValueError(f"trials={trials} too small to resolve the {1 - delta} quantile (need >= {10 / delta:g})")
    if g is None or h is None:
        g, h = fixed_unit_pair(d, seed)
    scale = float(np.linalg.norm(g) * np.linalg.norm(h))
    devs = product_deviations(kind, d, b, trials, seed, g, h)
    q, lo, hi = quantile_bounds(devs, 1.0 - delta)
    env = envelope(kind, d, b, delta) * scale
    rep = ConcentrationReport(kind, d, b, delta, trials, q, lo, hi, env)
    if constant is not None:
        rep.constant = constant
        rep.bound = constant * env
        rep.passed = bool(q <= rep.bound)
    return rep


def concentration_suite(kind, d=1024, bs=(16, 64, 256), delta=0.01, trials=10_000, seed=0):
    """Calibrate the envelope constant at ``bs[0]`` and check the remaining sizes.

    The constant is taken from the upper confidence bound of the calibration
    quantile; a larger b passes when the lower confidence bound of its quantile
    lies below the frozen envelope, i.e. unless the data reject the scaling.
    """
    g, h = fixed_unit_pair(d, seed)
    reports = []
    const_hi = None
    for i, b in enumerate(bs):
        rep = test_concentration(kind, d, b, delta, trials, seed, None, g, h)
        if i == 0:
            rep.constant = rep.quantile / rep.envelope if rep.envelope > 0 else 0.0
            const_hi = rep.quantile_hi / rep.envelope if rep.envelope > 0 else 0.0
            rep.bound = rep.constant * rep.envelope
            rep.passed = True
        else:
            rep.constant = reports[0].constant
            rep.bound = rep.constant * rep.envelope
            rep.passed = bool(rep.quantile_lo <= const_hi * rep.envelope)
        reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# unbiasedness

@dataclass
class UnbiasednessReport:
    kind: str
    d: int
    b: int
    trials: int
    max_abs_z: float
    passed: bool
    z: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return asdict(self)


def test_unbiasedness(kind, d, b, trials, seed=0, v=None, z_max=4.0):
    """Componentwise z-scores of the Monte-Carlo mean of desk(sk(v)) against v."""
    kind = SketchKind(kind).value
    if v is None:
        v = np.random.default_rng([seed, 0x7562]).standard_normal(d)
        v /= np.linalg.norm(v)
    v = np.asarray(v, dtype=np.float64)

    def chunk(i0, i1):
        # moments of the error r - v: exact zeros for the identity kind
        acc = np.zeros((2, d))
        for i in range(i0, i1):
            op = make_operator(kind, d, b, round_seed(seed, i))
            e = op.desk(op.sk(v)) - v
            acc[0] += e
            acc[1] += e * e
        return acc[None]

    parts = _map_trials(chunk, trials, chunk=4096)
    s1, s2 = parts[:, 0].sum(axis=0), parts[:, 1].sum(axis=0)
    err = s1 / trials
    var = np.maximum(s2 - trials * err * err, 0.0) / max(trials - 1, 1)
    se = np.sqrt(var / trials)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, err / se, np.where(err == 0, 0.0, np.inf))
    zmax = float(np.max(np.abs(z)))
    return UnbiasednessReport(kind, d, b, trials, zmax, bool(zmax <= z_max), z.tolist())


# ---------------------------------------------------------------------------
# Hessian spectrum

EXACT_SPECTRUM_MAX_DIM = 512


@dataclass
class SpectrumReport:
    method: str
    d: int
    L: float
    D: float
    L_ref: float | None = None
    D_ref: float | None = None
    eigenvalues: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return asdict(self)


def finite_difference_hessian(grad, x, h=1e-4):
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    H = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        H[:, j] = (grad(x + e) - grad(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def estimate_spectrum(problem, x=None, method="exact", h=1e-4) -> SpectrumReport:
    """L = largest Hessian eigenvalue and D = sum of |eigenvalues| at ``x``.

    ``exact`` eigendecomposes a central-difference Hessian (d <= 512);
    ``analytic`` reads the constructed spectrum of a quadratic.
    """
    x = problem.x0 if x is None else np.asarray(x, dtype=np.float64)
    spec = getattr(problem, "spectrum", None)
    L_ref = spec.L if spec is not None else None
    D_ref = spec.D if spec is not None else None
    if method == "analytic":
        if spec is None:
            raise ValueError("problem has no analytic spectrum")
        lam = np.sort(np.asarray(spec.eigenvalues))
    elif method == "exact":
        if problem.d > EXACT_SPECTRUM_MAX_DIM:
            raise ConfigError("spectrum.d", f"exact mode supports d <= {EXACT_SPECTRUM_MAX_DIM}, got {problem.d}")
        lam = np.linalg.eigvalsh(finite_difference_hessian(problem.grad, x, h))
    else:
        raise ValueError(f"unknown spectrum method {method!r}")
    return SpectrumReport(method, problem.d, float(lam.max()), float(np.abs(lam).sum()), L_ref, D_ref, lam.tolist())


# ---------------------------------------------------------------------------
# convergence slopes

@dataclass
class SlopeReport:
    slope: float
    intercept: float
    target: float
    window: tuple
    n_points: int
    band: float
    statistic: str
    degenerate: bool = False

    def to_dict(self):
        return asdict(self)


def fit_rate_slope(metrics, window=None, target=-0.5, statistic="running_mean") -> SlopeReport:
    """Least-squares slope of log(statistic) against log(round) over ``window``.

    ``metrics`` is a RunResult or a sequence of per-round ||grad||^2 (round 1
    first). ``statistic`` is ``running_mean`` (mean of rounds 1..T, as in the
    averaged-gradient bounds) or ``pointwise``. ``window`` = (first, last)
    round, inclusive; default is the whole run. ``band`` is two standard errors.
    """
    if hasattr(metrics, "records"):
        g = metrics.column("grad_norm_sq")
    else:
        g = np.asarray(metrics, dtype=np.float64)
    T = g.size
    t0, t1 = window if window is not None else (1, T)
    if not 1 <= t0 < t1 <= T:
        raise ValueError(f"window {window} outside rounds 1..{T}")
    if t1 - t0 + 1 < 10:
        raise ValueError("slope window needs at least 10 rounds")
    rounds = np.arange(1, T + 1, dtype=np.float64)
    if statistic == "running_mean":
        series = np.cumsum(g) / rounds
    elif statistic == "pointwise":
        series = g
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    t = rounds[t0 - 1:t1]
    y = series[t0 - 1:t1]
    n = t.size
    if not np.all(y > 0) or not np.all(np.isfinite(y)):
        return SlopeReport(math.nan, math.nan, target, (t0, t1), n, math.nan, statistic, degenerate=True)
    X = np.log(t)
    Y = np.log(y)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    sxx = float(np.sum((X - X.mean()) ** 2))
    se = math.sqrt(float(np.sum(resid ** 2)) / max(n - 2, 1) / sxx) if sxx > 0 else math.nan
    return SlopeReport(float(slope), float(intercept), target, (t0, t1), n, 2.0 * se, statistic)
