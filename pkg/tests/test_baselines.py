import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slay.baselines import cosformer_features, elu_plus_one_features, favor_plus_features
from slay.errors import ConfigError, NumericError

values = arrays(np.float64, (4, 3), elements=st.floats(-20, 20))


@given(values)
def test_favor_nonnegative(u):
    omega = np.random.default_rng(0).standard_normal((8, 3))
    assert np.all(favor_plus_features(u, omega) >= 0)


def test_favor_values():
    omega = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    f = favor_plus_features(np.array([[2.0, -1.0]]), omega)
    np.testing.assert_allclose(f, [[1.0, 0.0, 0.0, 0.5]])


def test_favor_normalize_flag():
    omega = np.array([[1.0, 0.0]])
    assert favor_plus_features(np.array([[3.0, 4.0]]), omega, normalize=True)[0, 0] == pytest.approx(0.6)
    with pytest.raises(ConfigError):
        favor_plus_features(np.ones((1, 2)), np.ones((0, 2)))


def test_elu_plus_one_values():
    np.testing.assert_allclose(elu_plus_one_features(np.array([[0.0, 2.0, -1.0]])), [[1.0, 3.0, np.exp(-1.0)]])


@given(values)
def test_elu_plus_one_positive(u):
    assert np.all(elu_plus_one_features(u) > 0)


def test_cosformer_scores_carry_cosine_reweighting(rng):
    u = np.abs(rng.standard_normal((6, 3)))
    f = cosformer_features(u, np.arange(6), 6)
    i, j = np.meshgrid(np.arange(6), np.arange(6), indexing="ij")
    expected = (u @ u.T) * np.cos(np.pi * (i - j) / 12)
    np.testing.assert_allclose(f @ f.T, expected, atol=1e-12)


@given(values)
def test_cosformer_scores_nonnegative(u):
    f = cosformer_features(u, np.arange(4), 4)
    assert (f @ f.T).min() >= -1e-12


@pytest.mark.parametrize("positions, max_len", [([0, 1, 5], 5), ([-1, 0, 1], 5), ([0, 2, 1], 5), ([0, 1], 5)])
def test_cosformer_position_errors(positions, max_len):
    with pytest.raises(NumericError):
        cosformer_features(np.ones((3, 2)), positions, max_len)
