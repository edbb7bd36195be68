import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slay.errors import NumericError
from slay.linear import (
    causal_linear_attention,
    explicit_gram_attention,
    finalize,
    kernel_normalized_attention,
    linear_attention,
)

nonneg = st.floats(0, 4, allow_nan=False)


def masked_oracle(psi_q, psi_k, v, delta):
    """Loop-level causal kernel-normalized attention, written independently of the library."""
    L = psi_q.shape[0]
    y = np.zeros((L, v.shape[1]))
    for i in range(L):
        a = np.array([psi_q[i] @ psi_k[j] for j in range(i + 1)])
        y[i] = (a @ v[: i + 1]) / (a.sum() + delta)
    return y


def test_handcrafted_three_by_two():
    psi_q = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 2.0]])
    psi_k = np.array([[1.0, 1.0], [0.0, 1.0], [2.0, 0.0]])
    v = np.array([[1.0], [2.0], [3.0]])
    out = linear_attention(psi_q, psi_k, v, 0.0)
    gram = psi_q @ psi_k.T
    np.testing.assert_allclose(out.y, (gram @ v) / gram.sum(1, keepdims=True), rtol=1e-12)
    np.testing.assert_allclose(out.denominators, gram.sum(1))


def test_row_constant_keys_give_same_mean(rng):
    psi_q = rng.random((5, 3)) + 0.1
    psi_k = np.tile(rng.random(3) + 0.1, (7, 1))
    v = rng.standard_normal((7, 2))
    y = linear_attention(psi_q, psi_k, v, 0.0).y
    np.testing.assert_allclose(y, np.tile(v.mean(0), (5, 1)), rtol=1e-12)


def test_zero_query_row_is_degenerate():
    psi_q = np.array([[1.0, 1.0], [0.0, 0.0]])
    psi_k = np.ones((2, 2))
    out = linear_attention(psi_q, psi_k, np.ones((2, 1)), 0.0)
    assert out.degenerate_rows.tolist() == [1]
    assert np.all(out.y[1] == 0)


def test_delta_keeps_zero_row_defined_but_flagged():
    out = finalize(np.array([[0.0]]), np.array([0.0]), 1e-6)
    assert out.degenerate_rows.tolist() == [0] and out.y[0, 0] == 0.0
    out = finalize(np.array([[2.0]]), np.array([-0.5]), 1.0)
    assert out.degenerate_rows.tolist() == [0] and out.y[0, 0] == pytest.approx(4.0)
    out = finalize(np.array([[2.0]]), np.array([-2.0]), 1.0)
    assert out.y[0, 0] == 0.0


def test_causal_single_token():
    y = causal_linear_attention(np.array([[0.3, 0.7]]), np.array([[0.4, 0.1]]), np.array([[5.0, -1.0]]), 0.0).y
    np.testing.assert_allclose(y, [[5.0, -1.0]], rtol=1e-15)


@pytest.mark.parametrize("mode", ["serial", "chunked"])
def test_causal_matches_loop_oracle(rng, mode):
    psi_q, psi_k = rng.random((2, 32, 6))
    v = rng.standard_normal((32, 3))
    out = causal_linear_attention(psi_q, psi_k, v, 1e-6, mode=mode, chunk=5)
    np.testing.assert_allclose(out.y, masked_oracle(psi_q, psi_k, v, 1e-6), rtol=1e-10)


def test_chunked_matches_serial(rng):
    psi_q, psi_k = rng.random((2, 300, 8))
    v = rng.standard_normal((300, 4))
    a = causal_linear_attention(psi_q, psi_k, v, mode="serial").y
    for chunk in (1, 7, 128, 512):
        b = causal_linear_attention(psi_q, psi_k, v, mode="chunked", chunk=chunk).y
        np.testing.assert_allclose(b, a, rtol=1e-8, atol=1e-12)


def test_causal_prefix_is_bitwise_stable(rng):
    psi_q, psi_k = rng.random((2, 20, 4))
    v = rng.standard_normal((20, 2))
    full = causal_linear_attention(psi_q, psi_k, v).y
    for p in (1, 7, 19):
        pref = causal_linear_attention(psi_q[:p], psi_k[:p], v[:p]).y
        assert pref.tobytes() == full[:p].tobytes()
    v2 = v.copy()
    v2[10:] = 99.0
    psi_k2 = psi_k.copy()
    psi_k2[10:] = 3.0
    changed = causal_linear_attention(psi_q, psi_k2, v2).y
    assert changed[:10].tobytes() == full[:10].tobytes()


@given(arrays(np.float64, (6, 3), elements=nonneg), arrays(np.float64, (6, 3), elements=nonneg),
       arrays(np.float64, (6, 2), elements=st.floats(-5, 5)), st.booleans())
def test_linear_equals_explicit_gram(psi_q, psi_k, v, causal):
    if causal:
        a = causal_linear_attention(psi_q, psi_k, v, 1e-6).y
    else:
        a = linear_attention(psi_q, psi_k, v, 1e-6).y
    b = explicit_gram_attention(psi_q, psi_k, v, 1e-6, causal).y
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(b).max()))


@given(arrays(np.float64, (5, 3), elements=nonneg), arrays(np.float64, (5, 3), elements=nonneg),
       st.floats(-3, 3), st.floats(-3, 3), st.booleans())
def test_linearity_in_values(psi_q, psi_k, alpha, beta, causal):
    g = np.random.default_rng(0)
    v1, v2 = g.standard_normal((2, 5, 2))

    def run(v):
        return (causal_linear_attention if causal else linear_attention)(psi_q, psi_k, v, 1e-6).y

    lhs = run(alpha * v1 + beta * v2)
    rhs = alpha * run(v1) + beta * run(v2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(rhs).max()) * 10)


@given(arrays(np.float64, (4, 3), elements=nonneg), arrays(np.float64, (4, 3), elements=st.floats(0.01, 4)))
def test_nonneg_features_have_nonneg_denominators(psi_q, psi_k):
    out = linear_attention(psi_q, psi_k, np.ones((4, 1)), 1e-6)
    assert np.all(out.denominators >= 0)
    assert np.all(np.isfinite(out.y))


def test_explicit_causal_masks_in_place(rng):
    s = rng.random((4, 4))
    kernel_normalized_attention(s, np.ones((4, 1)), 0.0, causal=True)
    assert np.all(np.triu(s, 1) == 0)


@pytest.mark.parametrize("args", [
    (np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 1))),
    (np.ones((2, 3)), np.ones((3, 3)), np.ones((2, 1))),
    (np.ones(3), np.ones((2, 3)), np.ones((2, 1))),
])
def test_shape_errors(args):
    with pytest.raises(NumericError):
        linear_attention(*args)


def test_unknown_causal_mode():
    with pytest.raises(NumericError):
        causal_linear_attention(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 1)), mode="parallel")
