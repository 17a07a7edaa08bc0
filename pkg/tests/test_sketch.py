import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.linalg import hadamard

from sketchfed import ConfigError, SketchKind, desk, fwht, make_operator, round_seed, sk
from sketchfed.sketch import next_pow2

KINDS = ["gaussian", "srht", "countsketch"]
EPS = np.finfo(float).eps


def vec(d, seed):
    return np.random.default_rng(seed).standard_normal(d)


# --- fwht ------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4, 8, 64, 512])
def test_fwht_matches_dense_hadamard(n):
    v = vec(n, n)
    expected = hadamard(n) @ v / np.sqrt(n)
    np.testing.assert_allclose(fwht(v), expected, rtol=1e-12, atol=1e-12)


def test_fwht_small_examples():
    np.testing.assert_allclose(fwht([1.0, 0.0]), [1 / np.sqrt(2), 1 / np.sqrt(2)])
    np.testing.assert_allclose(fwht([1.0, 1.0, 1.0, 1.0]), [2.0, 0.0, 0.0, 0.0])


@given(st.integers(0, 10), st.integers(0, 2**32 - 1))
def test_fwht_is_an_involution(k, seed):
    v = vec(1 << k, seed)
    np.testing.assert_allclose(fwht(fwht(v)), v, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(fwht(v)), np.linalg.norm(v), rtol=1e-12)


@pytest.mark.parametrize("n", [0, 3, 6, 1000])
def test_fwht_rejects_non_power_of_two(n):
    with pytest.raises(ValueError, match="power of two"):
        fwht(np.ones(n))


def test_fwht_does_not_mutate_input():
    v = vec(16, 0)
    keep = v.copy()
    fwht(v)
    np.testing.assert_array_equal(v, keep)


# --- operators -------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("d,b", [(16, 4), (100, 16), (33, 33), (64, 64)])
def test_desk_is_adjoint_of_sk(kind, d, b):
    op = make_operator(kind, d, b, seed=7)
    R = op.dense()
    assert R.shape == (b, d)
    v, w = vec(d, 1), vec(b, 2)
    np.testing.assert_allclose(op.sk(v), R @ v, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(op.desk(w), R.T @ w, rtol=1e-12, atol=1e-12)
    assert abs(np.dot(op.sk(v), w) - np.dot(v, op.desk(w))) <= 1e-12 * np.linalg.norm(v) * np.linalg.norm(w) * d


@pytest.mark.parametrize("kind", KINDS + ["identity"])
def test_many_matches_single(kind):
    d, b = 50, (50 if kind == "identity" else 12)
    op = make_operator(kind, d, b, seed=3)
    V = np.random.default_rng(0).standard_normal((d, 3))
    W = np.random.default_rng(1).standard_normal((b, 3))
    S = op.sk_many(V)
    D = op.desk_many(W)
    for c in range(3):
        np.testing.assert_allclose(S[:, c], op.sk(V[:, c]), rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(D[:, c], op.desk(W[:, c]), rtol=1e-13, atol=1e-14)


def test_module_level_sk_desk():
    op = make_operator("srht", 20, 8, 1)
    v = vec(20, 0)
    np.testing.assert_array_equal(sk(op, v), op.sk(v))
    np.testing.assert_array_equal(desk(op, sk(op, v)), op.desk(op.sk(v)))


def test_identity_sketch_is_exact():
    op = make_operator("identity", 10, 10, 0)
    v = vec(10, 0)
    np.testing.assert_array_equal(op.sk(v), v)
    np.testing.assert_array_equal(op.desk(op.sk(v)), v)


@given(st.integers(1, 200), st.integers(0, 2**63), st.sampled_from(KINDS))
def test_operator_is_a_pure_function_of_its_arguments(d, seed, kind):
    b = max(1, min(d, 8))
    v = vec(d, 0)
    a = make_operator(kind, d, b, seed).sk(v)
    c = make_operator(kind, d, b, seed).sk(v)
    np.testing.assert_array_equal(a, c)


@pytest.mark.parametrize("kind", KINDS)
def test_different_seeds_give_different_operators(kind):
    R1 = make_operator(kind, 64, 8, 1).dense()
    R2 = make_operator(kind, 64, 8, 2).dense()
    assert not np.array_equal(R1, R2)


# --- linearity ---------------------------------------------------------------

@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=300), st.integers(0, 2**32), st.integers(1, 64))
def test_countsketch_linearity_exact_on_integers(vals, seed, b):
    d = len(vals)
    b = min(b, next_pow2(d))
    u = np.array(vals, dtype=float)
    v = np.roll(u, 1) * 3 - 7
    op = make_operator("countsketch", d, b, seed)
    np.testing.assert_array_equal(op.sk(u + v), op.sk(u) + op.sk(v))
    np.testing.assert_array_equal(op.sk(2.0 * u), 2.0 * op.sk(u))


@given(st.sampled_from(["gaussian", "srht"]), st.integers(1, 300), st.integers(0, 2**32), st.floats(1e-3, 1e3))
def test_linearity_within_rounding(kind, d, seed, scale):
    b = min(next_pow2(d), 16)
    rng = np.random.default_rng(seed)
    u, v = scale * rng.standard_normal(d), rng.standard_normal(d)
    op = make_operator(kind, d, b, seed)
    err = np.max(np.abs(op.sk(u + v) - op.sk(u) - op.sk(v)))
    assert err <= 8 * EPS * (np.abs(u).sum() + np.abs(v).sum())


# --- construction details ------------------------------------------------------

def test_gaussian_entries_are_normal_with_variance_one_over_b():
    d, b = 512, 64
    R = make_operator("gaussian", d, b, seed=11).dense()
    z = (R * np.sqrt(b)).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 5 * np.sqrt(2.0 / z.size)


def test_gaussian_rows_are_nested_across_b():
    d = 40
    R4 = make_operator("gaussian", d, 4, 5).dense() * 2.0
    R8 = make_operator("gaussian", d, 8, 5).dense() * np.sqrt(8.0)
    np.testing.assert_allclose(R4, R8[:4], rtol=1e-14)


@pytest.mark.parametrize("d", [16, 100])
def test_srht_entries_have_constant_magnitude(d):
    b = 8
    R = make_operator("srht", d, b, 9).dense()
    np.testing.assert_allclose(np.abs(R), 1 / np.sqrt(b), rtol=1e-12)


def test_countsketch_columns_have_one_signed_entry():
    R = make_operator("countsketch", 200, 16, 4).dense()
    assert np.all(np.count_nonzero(R, axis=0) == 1)
    assert set(np.unique(R)) <= {-1.0, 0.0, 1.0}


@pytest.mark.parametrize("kind", KINDS)
def test_squared_norm_is_preserved_in_expectation(kind):
    d, b, n = 64, 16, 4000
    v = vec(d, 0)
    v /= np.linalg.norm(v)
    r = np.array([np.sum(make_operator(kind, d, b, round_seed(1, i)).sk(v) ** 2) for i in range(n)])
    # E||Rv||^2 = ||v||^2; std of the mean is at most sqrt(2 (d/b)/n)
    assert abs(r.mean() - 1.0) < 5 * r.std() / np.sqrt(n)


# --- seeds -------------------------------------------------------------------

def test_round_seed_injective_over_rounds():
    seeds = {round_seed(42, t) for t in range(20_000)}
    assert len(seeds) == 20_000


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 2**40))
def test_round_seed_distinct_rounds_distinct_seeds(master, t1, t2):
    if t1 != t2:
        assert round_seed(master, t1) != round_seed(master, t2)
    assert 0 <= round_seed(master, t1) < 2**64


# --- validation ----------------------------------------------------------------

@pytest.mark.parametrize("args,field", [
    (("nope", 8, 4, 0), "sketch.kind"),
    (("srht", 0, 4, 0), "sketch.d"),
    (("srht", 8, 0, 0), "sketch.b"),
    (("gaussian", 100, 129, 0), "sketch.b"),
    (("identity", 8, 4, 0), "sketch.b"),
])
def test_make_operator_errors_name_the_field(args, field):
    with pytest.raises(ConfigError) as exc:
        make_operator(*args)
    assert exc.value.field == field
    assert field in str(exc.value)


def test_b_up_to_padded_dimension_is_allowed():
    op = make_operator("srht", 100, 128, 0)
    assert op.n_pad == 128 and op.sk(vec(100, 0)).shape == (128,)


@pytest.mark.parametrize("kind", KINDS)
def test_length_mismatch_raises(kind):
    op = make_operator(kind, 16, 4, 0)
    with pytest.raises(ValueError, match="length mismatch"):
        op.sk(np.ones(15))
    with pytest.raises(ValueError, match="length mismatch"):
        op.desk(np.ones(5))


def test_kind_enum_values():
    assert [k.value for k in SketchKind] == ["gaussian", "srht", "countsketch", "identity"]
