import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullflow.mink4 import CausalClass, classify, dot, lorentz_generator, lower, norm, vec4

# squares of tiny components underflow, so keep away from that range
finite = st.floats(-1e3, 1e3).filter(lambda x: x == 0 or abs(x) > 1e-60)
vectors = st.tuples(finite, finite, finite, finite).map(np.array)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((1, 0, 0, 0), (1, 0, 0, 0), -1.0),
        ((1, 1, 0, 0), (1, 1, 0, 0), 0.0),
        ((0, 1, 0, 0), (0, 0, 1, 0), 0.0),
    ],
)
def test_dot_examples(a, b, expected):
    assert dot(a, b) == expected


@pytest.mark.parametrize("v, expected", [((1, 0, 0, 0), 1.0), ((1, 1, 0, 0), 0.0), ((0, 3, 4, 0), 5.0)])
def test_norm_examples(v, expected):
    assert norm(v) == expected


@pytest.mark.parametrize(
    "v, expected",
    [
        ((0, 1, 0, 0), CausalClass.SPACELIKE),
        ((2, 1, 1, 1), CausalClass.TIMELIKE),
        ((1, 1, 0, 0), CausalClass.NULL),
        ((0, 0, 0, 0), CausalClass.ZERO),
    ],
)
def test_classify_examples(v, expected):
    assert classify(v, 1e-12) is expected


def test_classify_tolerance_is_relative():
    big_null = np.array([1e8, 1e8, 0, 0]) + np.array([0, 1e-4, 0, 0])
    # |<v,v>| is about 2e4 but tiny next to the squared magnitude 2e16
    assert classify(big_null, 1e-12) is CausalClass.NULL
    assert classify((1.0, 1.0 + 1e-6, 0, 0), 1e-12) is CausalClass.SPACELIKE


def test_classify_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        classify((0, 1, 0, 0), 0.0)


def test_vec4_rejects_non_finite():
    with pytest.raises(ValueError):
        vec4(0, np.nan, 0, 0)
    with pytest.raises(ValueError):
        vec4(np.inf, 0, 0, 0)
    assert vec4(1, 2, 3, 4).tolist() == [1, 2, 3, 4]


def test_dot_broadcasts():
    a = np.random.default_rng(0).normal(size=(7, 3, 4))
    assert dot(a, a).shape == (7, 3)
    assert np.allclose(dot(a, a)[2, 1], a[2, 1] @ np.diag([-1, 1, 1, 1]) @ a[2, 1])
    assert np.allclose(lower(a[0, 0]), a[0, 0] * [-1, 1, 1, 1])


@given(vectors, vectors)
def test_dot_symmetric(a, b):
    assert dot(a, b) == dot(b, a)


@given(vectors, vectors, vectors, st.floats(-10, 10))
def test_dot_bilinear(a, b, c, alpha):
    lhs = dot(alpha * a + b, c)
    rhs = alpha * dot(a, c) + dot(b, c)
    scale = (abs(alpha) * np.abs(a) + np.abs(b)) @ np.abs(c) + 1.0
    assert abs(lhs - rhs) <= 1e-13 * scale


@given(vectors, finite)
def test_norm_homogeneous(v, lam):
    expected = abs(lam) * norm(v)
    got = norm(lam * v)
    # four ulps of the result, plus cancellation inside <v,v> near the light cone
    cancel = np.sqrt(np.finfo(float).eps * (lam * lam) * float(v @ v)) * 4
    assert abs(got - expected) <= 4 * np.spacing(max(expected, 1e-300)) + cancel


@given(vectors, st.floats(0.01, 100))
def test_classify_scale_invariant(v, lam):
    q = float(dot(v, v))
    if not np.any(v) or abs(q) < 1e-6 * max(1.0, float(v @ v)):
        return  # borderline inputs are excluded
    assert classify(lam * v) is classify(v)


def test_lorentz_generator_is_metric_skew():
    rng = np.random.default_rng(3)
    w = lorentz_generator(rng.normal(size=6))
    a, b = rng.normal(size=(2, 4))
    assert abs(dot(w @ a, b) + dot(a, w @ b)) < 1e-12
