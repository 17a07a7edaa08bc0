import math

import pytest
from hypothesis import given, strategies as st

from sketchfed import ConfigError
from sketchfed import config as C
from sketchfed.config import ExperimentConfig, from_dict, loads


def test_defaults_are_documented_values():
    cfg = from_dict({})
    o = cfg.optimizer
    assert (o.beta1, o.beta2, o.eps, o.kappa) == (0.9, 0.99, 1e-8, 0.01)
    assert cfg.lr.schedule == "decaying" and cfg.algorithm == "safl"
    assert cfg.sketch.kind == "srht" and cfg.sketch.b == 64


def test_toml_round_trip_is_fixed_point():
    text = """
algorithm = "sacfl"
seed = 5
[problem]
kind = "logistic"
d = 40
[sketch]
kind = "countsketch"
b = 16
[clip]
alpha = 1.4
"""
    cfg = loads(text)
    again = loads(cfg.to_toml())
    assert again == cfg
    assert loads(again.to_toml()).to_toml() == cfg.to_toml()


@given(st.sampled_from(["gaussian", "srht", "countsketch"]), st.integers(1, 64), st.integers(0, 10**6),
       st.floats(1e-4, 1.0), st.floats(0.0, 0.99), st.booleans())
def test_round_trip_property(kind, b, seed, kappa, beta1, rotate):
    cfg = from_dict({"seed": seed, "problem": {"d": 64, "rotate": rotate}, "sketch": {"kind": kind, "b": b},
                     "optimizer": {"kappa": kappa, "beta1": beta1}})
    assert loads(cfg.to_toml()) == cfg
    assert from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("data,field", [
    ({"bogus": 1}, "bogus"),
    ({"sketch": {"bb": 3}}, "sketch.bb"),
    ({"sketch": {"b": 0}}, "sketch.b"),
    ({"sketch": {"b": 2048}}, "sketch.b"),
    ({"sketch": {"kind": "identity", "b": 10}}, "sketch.b"),
    ({"sketch": {"kind": "fft"}}, "sketch.kind"),
    ({"sketch": {"b": "64"}}, "sketch.b"),
    ({"algorithm": "sacfl", "clip": {"alpha": 2.5}}, "clip.alpha"),
    ({"algorithm": "sacfl", "clip": {"alpha": 1.0}}, "clip.alpha"),
    ({"optimizer": {"beta1": 1.0}}, "optimizer.beta1"),
    ({"optimizer": {"eps": 0.0}}, "optimizer.eps"),
    ({"optimizer": {"name": "sgd"}}, "optimizer.name"),
    ({"lr": {"schedule": "cosine"}}, "lr.schedule"),
    ({"problem": {"rotate": 1}}, "problem.rotate"),
    ({"problem": {"heterogeneity": 2.0}}, "problem.heterogeneity"),
    ({"problem": {"data_weight": 0.0}}, "problem.data_weight"),
    ({"problem": {"kind": "mlp", "layers": [8, 16]}}, "problem.layers"),
    ({"noise": {"kind": "pareto", "tail_index": 0.5}}, "noise.tail_index"),
    ({"federation": {"clients": 0}}, "federation.clients"),
    ({"algorithm": "sgd"}, "algorithm"),
    ({"problem": "x"}, "problem"),
])
def test_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.field == field


def test_sketch_b_not_checked_for_baselines():
    cfg = from_dict({"algorithm": "fedavg_baseline", "sketch": {"b": 0}})
    assert cfg.sketch.b == 0


def test_alpha_only_checked_for_sacfl_theory():
    assert from_dict({"algorithm": "safl", "clip": {"alpha": 5.0}}).clip.alpha == 5.0
    assert from_dict({"algorithm": "sacfl", "clip": {"alpha": 5.0, "schedule": "fixed"}}).clip.alpha == 5.0


def test_invalid_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        loads("algorithm = ")
    with pytest.raises(ConfigError):
        C.load(tmp_path / "none.toml")


def test_replace_dotted_paths():
    cfg = from_dict({})
    c2 = cfg.replace(**{"sketch.b": 32, "seed": 4})
    assert c2.sketch.b == 32 and c2.seed == 4 and cfg.sketch.b == 64
    with pytest.raises(ConfigError):
        cfg.replace(**{"sketch.bb": 1})


def test_problem_dim():
    assert C.problem_dim(C.ProblemConfig(kind="mlp", layers=[8, 16, 1])) == 161
    assert C.problem_dim(C.ProblemConfig(spectrum="explicit", eigenvalues=[1.0, 2.0])) == 2


def test_infinite_tau_rejected_only_when_nan():
    with pytest.raises(ConfigError):
        from_dict({"clip": {"tau": math.nan}})
    assert isinstance(from_dict({"clip": {"tau": 3}}), ExperimentConfig)
