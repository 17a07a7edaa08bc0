"""Synthetic objectives and stochastic-gradient noise models.

Every problem exposes ``loss(x)``, ``grad(x)`` and ``stochastic_grad(x, rng)``;
the stochastic gradient is the exact gradient plus a zero-mean draw from the
problem's :class:`NoiseModel`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError

NOISE_KINDS = ("none", "gaussian", "subgaussian", "pareto", "alpha_stable")


@dataclass(frozen=True)
class NoiseModel:
    """Additive gradient noise.

    ``gaussian`` and ``subgaussian`` have per-component standard deviation
    ``sigma`` (the latter is uniform on [-sqrt(3) sigma, sqrt(3) sigma]).
    ``pareto`` draws a Pareto(``tail_index``) magnitude with minimum ``scale``,
    a random sign and a uniform random direction. ``alpha_stable`` draws i.i.d.
    symmetric alpha-stable components (Chambers-Mallows-Stuck).
    """

    kind: str = "none"
    sigma: float = 0.0
    tail_index: float = 1.5
    scale: float = 1.0
    alpha: float = 1.5

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError("noise.kind", f"unknown noise kind {self.kind!r}")
        if self.kind in ("gaussian", "subgaussian") and self.sigma < 0:
            raise ConfigError("noise.sigma", f"must be >= 0, got {self.sigma}")
        if self.kind == "pareto" and not self.tail_index > 1:
            raise ConfigError("noise.tail_index", f"must be > 1, got {self.tail_index}")
        if self.kind == "alpha_stable" and not 0 < self.alpha <= 2:
            raise ConfigError("noise.alpha", f"must lie in (0, 2], got {self.alpha}")
        if self.kind in ("pareto", "alpha_stable") and not self.scale > 0:
            raise ConfigError("noise.scale", f"must be > 0, got {self.scale}")

    def sample(self, d, rng):
        return sample_noise(self, d, rng)


def sample_noise(model: NoiseModel, d: int, rng: np.random.Generator) -> np.ndarray:
    kind = model.kind
    if kind == "none":
        return np.zeros(d)
    if kind == "gaussian":
        return model.sigma * rng.standard_normal(d)
    if kind == "subgaussian":
        half = np.sqrt(3.0) * model.sigma
        return rng.uniform(-half, half, d)
    if kind == "pareto":
        mag = model.scale * (1.0 + rng.pareto(model.tail_index))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        u = rng.standard_normal(d)
        return (sign * mag / np.linalg.norm(u)) * u
    # symmetric alpha-stable, beta = 0
    a = model.alpha
    V = rng.uniform(-np.pi / 2, np.pi / 2, d)
    if a == 1.0:
        return model.scale * np.tan(V)
    W = rng.standard_exponential(d)
    X = np.sin(a * V) / np.cos(V) ** (1.0 / a) * (np.cos((1.0 - a) * V) / W) ** ((1.0 - a) / a)
    return model.scale * X


class Problem:
    """Base objective. Subclasses implement ``loss`` and ``grad``."""

    d: int
    noise: NoiseModel
    x0: np.ndarray
    spectrum: "SpectrumSpec | None" = None
    optimum_value: "float | None" = None

    def loss(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_many(self, X) -> np.ndarray:
        """Gradients at the rows of X."""
        return np.stack([self.grad(x) for x in X])

    def stochastic_grad(self, x, rng) -> np.ndarray:
        return self.grad(x) + self.noise.sample(self.d, rng)


@dataclass(frozen=True)
class SpectrumSpec:
    eigenvalues: np.ndarray

    @classmethod
    def power_law(cls, d, exponent=2.0, scale=1.0):
        """lambda_i = scale * i^-exponent, i = 1..d."""
        return cls(scale * np.arange(1, d + 1, dtype=np.float64) ** -exponent)

    @property
    def L(self) -> float:
        return float(np.max(self.eigenvalues))

    @property
    def D(self) -> float:
        return float(np.sum(np.abs(self.eigenvalues)))


def haar_orthogonal(d, rng):
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


class Quadratic(Problem):
    """L(x) = 1/2 x^T Q diag(lam) Q^T x, minimized at 0 for nonnegative lam."""

    MAX_ROTATED_DIM = 4096

    def __init__(self, spec, seed=0, noise=None, x0_scale=1.0, rotate=True):
        lam = np.asarray(spec.eigenvalues, dtype=np.float64)
        if lam.ndim != 1 or lam.size == 0:
            raise ConfigError("problem.spectrum", "empty spectrum")
        self.spectrum = SpectrumSpec(lam)
        self.lam = lam
        self.d = lam.size
        self.noise = noise or NoiseModel()
        rng = np.random.default_rng(seed)
        self.Q = haar_orthogonal(self.d, rng) if rotate and self.d <= self.MAX_ROTATED_DIM else None
        self.x0 = x0_scale * rng.standard_normal(self.d)
        self.optimum_value = 0.0 if np.all(lam >= 0) else None

    def _to_eig(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x if self.Q is None else self.Q.T @ x

    def loss(self, x):
        y = self._to_eig(x)
        return 0.5 * float(np.dot(self.lam * y, y))

    def grad(self, x):
        g = self.lam * self._to_eig(x)
        return g if self.Q is None else self.Q @ g

    def grad_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.Q is None:
            return X * self.lam
        return ((X @ self.Q) * self.lam) @ self.Q.T

    def hessian(self):
        if self.Q is None:
            return np.diag(self.lam)
        return (self.Q * self.lam) @ self.Q.T

    def solve(self, rhs):
        """H^{-1} rhs for a positive spectrum."""
        y = self._to_eig(rhs) / self.lam
        return y if self.Q is None else self.Q @ y


def make_quadratic(spec: SpectrumSpec, seed=0, noise=None, x0_scale=1.0, rotate=True) -> Quadratic:
    return Quadratic(spec, seed=seed, noise=noise, x0_scale=x0_scale, rotate=rotate)


class Logistic(Problem):
    """Binary logistic regression with an l2 term ``reg * ||x||^2``."""

    def __init__(self, A, y, noise=None, reg=1e-4, data_weight=1.0):
        self.A = np.asarray(A, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.d = self.A.shape[1]
        self.reg = reg
        self.data_weight = data_weight
        self.noise = noise or NoiseModel()
        self.x0 = np.zeros(self.d)

    def loss(self, x):
        z = self.y * (self.A @ x)
        data = float(np.mean(np.logaddexp(0.0, -z)))
        return self.data_weight * data + self.reg * float(np.dot(x, x))

    def grad(self, x):
        z = self.y * (self.A @ x)
        coef = -self.y * expit(-z) / self.y.size
        return self.data_weight * (self.A.T @ coef) + 2.0 * self.reg * x


def make_logistic(n_samples, d, separation=2.0, seed=0, noise=None, data_weight=1.0) -> Logistic:
    """Two Gaussian clusters at +-separation/2 along a random unit direction."""
    if n_samples < 1:
        raise ConfigError("problem.n_samples", f"must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal(d)
    mu /= np.linalg.norm(mu)
    y = np.where(np.arange(n_samples) % 2 == 0, 1.0, -1.0)
    A = rng.standard_normal((n_samples, d)) + (0.5 * separation) * y[:, None] * mu
    return Logistic(A, y, noise=noise, data_weight=data_weight)


class MLP(Problem):
    """One-hidden-layer tanh network, loss = mean_i 1/2 ||f(a_i) - y_i||^2.

    Parameters are packed as [W1 (h x n_in), b1 (h), W2 (n_out x h), b2 (n_out)].
    """

    MAX_PARAMS = 10_000

    def __init__(self, layers, X, Y, noise=None, x0=None):
        n_in, h, n_out = layers
        self.layers = (int(n_in), int(h), int(n_out))
        self.d = h * n_in + h + n_out * h + n_out
        if self.d > self.MAX_PARAMS:
            raise ConfigError("problem.layers", f"{self.d} parameters exceed {self.MAX_PARAMS}")
        self.X = np.asarray(X, dtype=np.float64).reshape(-1, n_in)
        self.Y = np.asarray(Y, dtype=np.float64).reshape(-1, n_out)
        self.noise = noise or NoiseModel()
        self.x0 = np.zeros(self.d) if x0 is None else np.asarray(x0, dtype=np.float64)

    def unpack(self, x):
        n_in, h, n_out = self.layers
        i = 0
        W1 = x[i:i + h * n_in].reshape(h, n_in); i += h * n_in
        b1 = x[i:i + h]; i += h
        W2 = x[i:i + n_out * h].reshape(n_out, h); i += n_out * h
        b2 = x[i:i + n_out]
        return W1, b1, W2, b2

    def sample_losses(self, x):
        W1, b1, W2, b2 = self.unpack(np.asarray(x, dtype=np.float64))
        r = np.tanh(self.X @ W1.T + b1) @ W2.T + b2 - self.Y
        return 0.5 * np.sum(r * r, axis=1)

    def loss(self, x):
        return float(np.mean(self.sample_losses(x)))

    def grad(self, x):
        W1, b1, W2, b2 = self.unpack(np.asarray(x, dtype=np.float64))
        n = self.X.shape[0]
        H = np.tanh(self.X @ W1.T + b1)
        R = (H @ W2.T + b2 - self.Y) / n
        gW2 = R.T @ H
        gb2 = R.sum(axis=0)
        dZ = (R @ W2) * (1.0 - H * H)
        gW1 = dZ.T @ self.X
        gb1 = dZ.sum(axis=0)
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def make_mlp(layers=(8, 16, 1), n_samples=64, seed=0, noise=None) -> MLP:
    """Regression on data from a random teacher network of the same shape."""
    n_in, h, n_out = layers
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, n_in))
    teacher = MLP(layers, X, np.zeros((n_samples, n_out)))
    theta = rng.standard_normal(teacher.d) / np.sqrt(max(n_in, h))
    Wt1, bt1, Wt2, bt2 = teacher.unpack(theta)
    Y = np.tanh(X @ Wt1.T + bt1) @ Wt2.T + bt2 + 0.1 * rng.standard_normal((n_samples, n_out))
    x0 = 0.5 * rng.standard_normal(teacher.d) / np.sqrt(max(n_in, h))
    return MLP(layers, X, Y, noise=noise, x0=x0)


class ClientObjective(Problem):
    """Client objective L^c(x) = L(x) + <shift, x>; shifts sum to zero across clients."""

    def __init__(self, base: Problem, shift):
        self.base = base
        self.shift = np.asarray(shift, dtype=np.float64)
        self.d = base.d
        self.noise = base.noise
        self.x0 = base.x0

    def loss(self, x):
        return self.base.loss(x) + float(np.dot(self.shift, x))

    def grad(self, x):
        return self.base.grad(x) + self.shift

    def grad_many(self, X):
        return self.base.grad_many(X) + self.shift

    def optimum(self):
        if not isinstance(self.base, Quadratic):
            raise NotImplementedError("closed-form optimum only for quadratics")
        return -self.base.solve(self.shift)


def split_clients(problem: Problem, C: int, heterogeneity=0.0, seed=0) -> list:
    """Per-client objectives whose average is ``problem``.

    At heterogeneity 0 every client shares ``problem`` itself. Otherwise each
    client gets a linear tilt of norm about ``heterogeneity`` (centred so the
    tilts cancel on average), which moves the client optimum.
    """
    if C < 1:
        raise ConfigError("federation.clients", f"must be >= 1, got {C}")
    if not 0.0 <= heterogeneity <= 1.0:
        raise ConfigError("problem.heterogeneity", f"must lie in [0, 1], got {heterogeneity}")
    if heterogeneity == 0.0 or C == 1:
        return [problem] * C
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((C, problem.d)) / np.sqrt(problem.d)
    Z -= Z.mean(axis=0)
    return [ClientObjective(problem, heterogeneity * Z[c]) for c in range(C)]
