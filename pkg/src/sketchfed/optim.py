"""Server optimizer steps and learning-rate / clipping schedules.

All steps are pure: they return a new iterate and a new state and never mutate
their arguments, so server and client mirrors can call them independently and
stay bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DivergenceError


@dataclass(frozen=True)
class AmsGradState:
    m: np.ndarray
    v: np.ndarray
    vhat: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.99
    kappa: float = 1.0
    eps: float = 1e-8

    @classmethod
    def zeros(cls, d, **params):
        return cls(np.zeros(d), np.zeros(d), np.zeros(d), **params)

    def copy(self):
        return replace(self, m=self.m.copy(), v=self.v.copy(), vhat=self.vhat.copy())


def _check(state, x, dm, dv):
    d = state.m.shape[0]
    for name, a in (("x", x), ("dm", dm), ("dv", dv)):
        if a.shape != (d,):
            raise ValueError(f"{name} length mismatch: expected ({d},), got {a.shape}")
    if not (np.all(np.isfinite(dm)) and np.all(np.isfinite(dv))):
        raise DivergenceError("non-finite moment in optimizer input")


def _moments(state, dm, dv):
    m = state.beta1 * state.m + (1.0 - state.beta1) * dm
    # desk of a nonnegative sketch need not be nonnegative
    v = state.beta2 * state.v + (1.0 - state.beta2) * np.maximum(dv, 0.0)
    return m, v


def amsgrad_step(state: AmsGradState, x, dm, dv):
    """One AMSGrad step on desketched moments ``dm = desk(m_bar)``, ``dv = desk(v_bar)``.

    Returns ``(x_new, state_new)``.
    """
    x, dm, dv = (np.asarray(a, dtype=np.float64) for a in (x, dm, dv))
    _check(state, x, dm, dv)
    m, v = _moments(state, dm, dv)
    vhat = np.maximum(state.vhat, v)
    x_new = x - state.kappa * m / (np.sqrt(vhat) + state.eps)
    return x_new, replace(state, m=m, v=v, vhat=vhat)


def adam_step(state: AmsGradState, x, dm, dv, t: int | None = None, bias_correction=False):
    """Adam variant: like :func:`amsgrad_step` without the running max.

    With ``bias_correction`` the usual ``1 - beta^t`` corrections are applied
    (``t`` is the 1-based step count). ``vhat`` is carried along unchanged.
    """
    x, dm, dv = (np.asarray(a, dtype=np.float64) for a in (x, dm, dv))
    _check(state, x, dm, dv)
    m, v = _moments(state, dm, dv)
    mh, vh = m, v
    if bias_correction:
        if t is None or t < 1:
            raise ValueError("bias correction needs the step count t >= 1")
        mh = m / (1.0 - state.beta1 ** t)
        vh = v / (1.0 - state.beta2 ** t)
    x_new = x - state.kappa * mh / (np.sqrt(vh) + state.eps)
    return x_new, replace(state, m=m, v=v)


def clip_scale(vbar: float, tau: float) -> float:
    """min(tau / vbar, 1), with 1 at vbar == 0."""
    if not vbar >= 0:
        raise ValueError(f"clip statistic must be >= 0, got {vbar}")
    if tau <= 0:
        raise ValueError(f"clipping threshold must be > 0, got {tau}")
    if vbar == 0:
        return 1.0
    return min(tau / vbar, 1.0)


@dataclass(frozen=True)
class ClipConfig:
    tau: float
    kappa: float
    eta: float
    alpha: float = 2.0


def sacfl_server_step(x, dm, vbar, cfg: ClipConfig):
    x = np.asarray(x, dtype=np.float64)
    dm = np.asarray(dm, dtype=np.float64)
    if dm.shape != x.shape:
        raise ValueError(f"dm length mismatch: expected {x.shape}, got {dm.shape}")
    if not np.all(np.isfinite(dm)) or not math.isfinite(vbar):
        raise DivergenceError("non-finite clipped update")
    return x - (cfg.kappa * clip_scale(vbar, cfg.tau)) * dm


def sacfl_schedule(K: int, T: int, alpha: float) -> ClipConfig:
    """Horizon-dependent (tau, kappa, eta) for heavy-tailed noise with tail exponent alpha."""
    if not 1.0 < alpha <= 2.0:
        raise ConfigError("clip.alpha", f"must lie in (1, 2], got {alpha}")
    if K < 1 or T < 1:
        raise ConfigError("clip", f"K and T must be >= 1, got K={K}, T={T}")
    den = 3.0 * alpha - 2.0
    kappa = K ** ((3.0 * alpha - 6.0) / den) * T ** (-1.0 / den)
    eta = T ** ((1.0 - alpha) / den) * K ** ((4.0 - 4.0 * alpha) / den)
    tau = (K ** 4 * T) ** (1.0 / den)
    return ClipConfig(tau=tau, kappa=kappa, eta=eta, alpha=alpha)


@dataclass(frozen=True)
class LrSchedule:
    """Client learning rate: ``constant`` (eta) or ``decaying`` 1 / (sqrt(t + T0) K)."""

    variant: str = "decaying"
    eta: float = 0.01
    K: int = 1
    beta1: float = 0.9

    @property
    def t0(self) -> int:
        return math.ceil(1.0 / (1.0 - self.beta1 ** 2))


def schedule_eta(t: int, sched: LrSchedule) -> float:
    if sched.variant == "constant":
        return sched.eta
    if sched.variant == "decaying":
        return 1.0 / (math.sqrt(t + sched.t0) * sched.K)
    raise ConfigError("lr.schedule", f"unknown schedule {sched.variant!r}")
