"""Pinned experiment configurations used by the acceptance suite and the CLI.

``convergence`` is the desk-scale SAFL regime (quadratic, d = 1024, 16x
compression); ``heavy_tail`` is the SACFL regime (logistic, Pareto noise).
Hyper-parameters not fixed by the regime were chosen from small sweeps; see
the README for the numbers.
"""
from __future__ import annotations

import copy

from .config import ExperimentConfig, from_dict

CONVERGENCE = {
    "algorithm": "safl",
    "seed": 0,
    "problem": {"kind": "quadratic", "d": 1024, "spectrum": "power_law", "exponent": 2.0, "scale": 1.0},
    "noise": {"kind": "gaussian", "sigma": 0.1},
    "federation": {"clients": 8, "local_steps": 5, "rounds": 300},
    "sketch": {"kind": "srht", "b": 64},
    "optimizer": {"name": "amsgrad", "beta1": 0.9, "beta2": 0.99, "kappa": 0.1, "eps": 0.03},
    "lr": {"schedule": "decaying"},
}

HEAVY_TAIL = {
    "algorithm": "sacfl",
    "seed": 0,
    "problem": {"kind": "logistic", "d": 64, "n_samples": 256, "separation": 4.0, "data_weight": 30.0},
    "noise": {"kind": "pareto", "tail_index": 1.5, "scale": 20.0},
    "federation": {"clients": 8, "local_steps": 2, "rounds": 500},
    "sketch": {"kind": "srht", "b": 16},
    "clip": {"schedule": "theory", "alpha": 1.4, "enabled": True},
}

PRESETS = {"convergence": CONVERGENCE, "heavy_tail": HEAVY_TAIL}


def preset(name: str, **overrides) -> ExperimentConfig:
    """Build a preset with dotted-path overrides, e.g. ``preset("convergence", **{"sketch.kind": "identity"})``."""
    try:
        data = copy.deepcopy(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    for path, value in overrides.items():
        node = data
        *parents, leaf = path.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_dict(data)


def uncompressed_twin(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same run with the identity sketch (b = d)."""
    from .config import problem_dim
    return cfg.replace(**{"sketch.kind": "identity", "sketch.b": problem_dim(cfg.problem)})
