import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssdhealth import numerics
from ssdhealth.errors import DimensionError, InvalidInputError, NumericError

finite = st.floats(-50, 50, allow_nan=False)


def test_matmul_matches_hand_product():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0], [6.0]])
    np.testing.assert_array_equal(numerics.matmul(a, b), [[17.0], [39.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        numerics.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_rejects_non_finite():
    with pytest.raises((NumericError, InvalidInputError)):
        numerics.softmax_rows(np.array([[0.0, np.inf]]))


def test_softmax_extreme_values_stay_finite():
    p = numerics.softmax_rows(np.array([[1000.0, -1000.0, 0.0]]))
    assert np.all(np.isfinite(p))
    assert p[0, 0] == pytest.approx(1.0)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(m):
    p = numerics.softmax_rows(m)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 8)), elements=finite))
def test_layer_norm_unit_gain_rows_standardized(x):
    n = x.shape[1]
    y = np.array([numerics.layer_norm(row, np.ones(n), np.zeros(n)) for row in x])
    np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-12)
    var = x.var(axis=1)
    # eps shrinks the variance of nearly constant rows
    np.testing.assert_allclose(y.var(axis=1), var / (var + numerics.LAYER_NORM_EPS), atol=1e-9)


def test_sigmoid_is_stable_for_large_inputs():
    s = numerics.sigmoid(np.array([-800.0, 0.0, 800.0]))
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


def test_elementwise_dispatch_and_shape_check():
    a, b = np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])
    np.testing.assert_array_equal(numerics.elementwise("hadamard", a, b), [[3.0, 8.0]])
    np.testing.assert_array_equal(numerics.elementwise("sub", b, a), [[2.0, 2.0]])
    with pytest.raises(DimensionError):
        numerics.elementwise("add", a, np.ones((2, 2)))
