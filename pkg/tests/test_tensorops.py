import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovmix.tensorops import (
    frobenius_distance,
    mode_n_unfold,
    multilinear_apply,
    refold,
    tensor_from_bytes,
    tensor_from_json,
    tensor_to_bytes,
    tensor_to_json,
)


def test_unfold_order1_is_column():
    t = np.array([1.0, 2.0, 3.0])
    m = mode_n_unfold(t, 0)
    assert m.shape == (3, 1)
    assert np.array_equal(m[:, 0], t)


def test_unfold_2x2x2_against_index_enumeration():
    t = np.arange(1.0, 9.0).reshape(2, 2, 2)
    m = mode_n_unfold(t, 0)
    # oracle: row i collects t[i, j, k] with (j, k) in row-major order
    expected = np.empty((2, 4))
    for i in range(2):
        for col, (j, k) in enumerate(itertools.product(range(2), range(2))):
            expected[i, col] = t[i, j, k]
    assert np.array_equal(m, expected)

    m1 = mode_n_unfold(t, 1)
    expected1 = np.empty((2, 4))
    for j in range(2):
        for col, (i, k) in enumerate(itertools.product(range(2), range(2))):
            expected1[j, col] = t[i, j, k]
    assert np.array_equal(m1, expected1)


def test_unfold_refold_roundtrip_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        order = rng.integers(2, 5)
        shape = tuple(rng.integers(1, 5, size=order))
        t = rng.normal(size=shape)
        for axis in range(order):
            back = refold(mode_n_unfold(t, axis), axis, shape)
            assert np.array_equal(back, t)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_unfold_refold_roundtrip_up_to_order5(data):
    order = data.draw(st.integers(1, 5))
    shape = tuple(data.draw(st.integers(1, 4)) for _ in range(order))
    flat = data.draw(
        st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=32),
            min_size=int(np.prod(shape)),
            max_size=int(np.prod(shape)),
        )
    )
    t = np.asarray(flat).reshape(shape)
    axis = data.draw(st.integers(0, order - 1))
    assert np.array_equal(refold(mode_n_unfold(t, axis), axis, shape), t)


def test_unfold_axis_out_of_range():
    with pytest.raises(ValueError):
        mode_n_unfold(np.zeros((2, 2)), 2)


def test_multilinear_zero_beta_returns_bias():
    x = np.random.default_rng(1).normal(size=(3, 4))
    bias = np.array([2.0, -1.0])
    out = multilinear_apply(np.zeros((2, 3, 4)), bias, x)
    assert np.array_equal(out, bias)


def test_multilinear_selector_case():
    x = np.random.default_rng(2).normal(size=(3, 4))
    beta = np.zeros((1, 3, 4))
    beta[0, 1, 2] = 1.0
    out = multilinear_apply(beta, np.zeros(1), x)
    assert out[0] == x[1, 2]


def test_multilinear_against_double_loop_oracle():
    rng = np.random.default_rng(3)
    beta = rng.normal(size=(2, 3, 4))
    bias = rng.normal(size=2)
    x = rng.normal(size=(3, 4))
    expected = np.zeros(2)
    for q in range(2):
        acc = 0.0
        for i in range(3):
            for j in range(4):
                acc += beta[q, i, j] * x[i, j]
        expected[q] = acc + bias[q]
    assert np.max(np.abs(multilinear_apply(beta, bias, x) - expected)) < 1e-12


def test_multilinear_linear_in_x():
    rng = np.random.default_rng(4)
    beta = rng.normal(size=(2, 3, 3))
    x1 = rng.normal(size=(3, 3))
    x2 = rng.normal(size=(3, 3))
    alpha = 2.7
    zero = np.zeros(2)
    lhs = multilinear_apply(beta, zero, alpha * x1 + x2)
    rhs = alpha * multilinear_apply(beta, zero, x1) + multilinear_apply(beta, zero, x2)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_multilinear_shape_errors():
    with pytest.raises(ValueError):
        multilinear_apply(np.zeros((2, 3)), np.zeros(2), np.zeros((4,)))
    with pytest.raises(ValueError):
        multilinear_apply(np.zeros((2, 3)), np.zeros(3), np.zeros(3))


def test_frobenius_identity_and_hand_value():
    a = np.random.default_rng(5).normal(size=(3, 2))
    assert frobenius_distance(a, a) == 0.0
    assert frobenius_distance(np.zeros((2, 2)), np.ones((2, 2))) == 2.0


def test_frobenius_symmetry_and_triangle():
    rng = np.random.default_rng(6)
    for _ in range(10):
        a, b, c = rng.normal(size=(3, 2, 3))
        assert frobenius_distance(a, b) == frobenius_distance(b, a)
        assert frobenius_distance(a, c) <= (
            frobenius_distance(a, b) + frobenius_distance(b, c) + 1e-10
        )


def test_frobenius_shape_mismatch():
    with pytest.raises(ValueError):
        frobenius_distance(np.zeros(2), np.zeros(3))


def test_binary_serialization_bit_exact():
    rng = np.random.default_rng(7)
    for shape in [(3,), (2, 5), (2, 3, 4), (1, 2, 1, 2, 2)]:
        t = rng.normal(size=shape)
        back = tensor_from_bytes(tensor_to_bytes(t))
        assert back.shape == t.shape
        assert np.array_equal(back, t)


def test_binary_serialization_zero_size():
    t = np.zeros((3, 0))
    back = tensor_from_bytes(tensor_to_bytes(t))
    assert back.shape == (3, 0)


def test_json_debug_form_roundtrip():
    t = np.random.default_rng(8).normal(size=(2, 3))
    back = tensor_from_json(tensor_to_json(t))
    assert np.array_equal(back, t)


def test_bad_magic_rejected():
    with pytest.raises(ValueError):
        tensor_from_bytes(b"NOPE" + b"\x00" * 32)
