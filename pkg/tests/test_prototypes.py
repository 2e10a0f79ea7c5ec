import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softpl.prototypes import (
    PrototypeBank,
    ema_update,
    feature_weights,
    init_prototypes,
    rectify_soft_label,
    update_prototypes,
)
from softpl.tensor import IGNORE_INDEX, check_probability_map


def bank_of(*rows, tau=1.0, momentum=0.999):
    eta = np.array(rows, dtype=np.float64)
    return PrototypeBank(eta, np.ones(len(rows)), tau, momentum)


def test_init_one_pixel_per_class():
    f = np.array([[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]])
    bank = init_prototypes(f, np.array([[0, 1, 2]]), 3)
    np.testing.assert_array_equal(bank.eta, f[0])
    assert bank.missing == ()


def test_init_missing_class_uses_global_mean():
    f = np.array([[[0.0, 0.0], [2.0, 4.0]]])
    bank = init_prototypes(f, np.array([[0, 0]]), 2)
    np.testing.assert_array_equal(bank.eta[1], [1.0, 2.0])
    assert bank.missing == (1,)


def test_init_mean_of_pixels():
    f = np.array([[[0.0, 0.0], [2.0, 2.0], [9.0, 9.0]]])
    bank = init_prototypes(f, np.array([[1, 1, IGNORE_INDEX]]), 2)
    np.testing.assert_array_equal(bank.eta[1], [1.0, 1.0])


def test_init_accepts_lists_and_rejects_empty():
    f = [np.zeros((1, 1, 2)), np.ones((1, 1, 2))]
    bank = init_prototypes(f, [np.array([[0]]), np.array([[1]])], 2)
    np.testing.assert_array_equal(bank.eta, [[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        init_prototypes(np.zeros((1, 1, 2)), np.full((1, 1), IGNORE_INDEX), 2)


def test_update_momentum_zero_replaces():
    bank = bank_of([0.0], [5.0], momentum=0.0)
    update_prototypes(bank, np.array([[[2.0], [4.0]]]), np.array([[0, 0]]))
    np.testing.assert_array_equal(bank.eta, [[3.0], [5.0]])


def test_update_ema_step():
    m = 0.999
    bank = bank_of([1.0, 1.0], [0.0, 0.0], momentum=m)
    update_prototypes(bank, np.array([[[3.0, -1.0]]]), np.array([[0]]))
    np.testing.assert_allclose(bank.eta[0], [1.0 + (1 - m) * 2.0, 1.0 + (1 - m) * -2.0], rtol=1e-12)
    np.testing.assert_array_equal(bank.eta[1], [0.0, 0.0])


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30)
def test_update_order_independent(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(1, 12, 3))
    y = rng.integers(0, 3, size=(1, 12))
    perm = rng.permutation(12)
    a = update_prototypes(bank_of([0, 0, 0], [1, 1, 1], [2, 2, 2], momentum=0.5), f, y)
    b = update_prototypes(bank_of([0, 0, 0], [1, 1, 1], [2, 2, 2], momentum=0.5), f[:, perm], y[:, perm])
    np.testing.assert_allclose(a.eta, b.eta, rtol=1e-12)


def test_feature_weights_examples():
    np.testing.assert_allclose(feature_weights(np.zeros((1, 1, 1)), bank_of([-1.0], [1.0])).ravel(), [0.5, 0.5])
    omega = feature_weights(np.zeros((1, 1, 1)), bank_of([0.0], [2.0])).ravel()
    e = 1 / (1 + np.exp(-2.0))
    np.testing.assert_allclose(omega, [e, 1 - e], atol=1e-9)
    np.testing.assert_allclose(omega, [0.8808, 0.1192], atol=1e-4)
    hot = feature_weights(np.zeros((1, 1, 1)), bank_of([0.0], [2.0], tau=1e9)).ravel()
    np.testing.assert_allclose(hot, [0.5, 0.5], atol=1e-8)


def test_feature_weights_dimension_check():
    with pytest.raises(ValueError):
        feature_weights(np.zeros((1, 1, 3)), bank_of([0.0], [1.0]))


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100))
@settings(max_examples=30)
def test_feature_weights_valid_distribution(seed, tau):
    rng = np.random.default_rng(seed)
    bank = PrototypeBank(rng.normal(scale=10, size=(4, 3)), np.ones(4), tau)
    check_probability_map(feature_weights(rng.normal(scale=10, size=(3, 3, 3)), bank))


def test_rectify_examples():
    y = np.array([[[0.2, 0.3, 0.5]]])
    assert rectify_soft_label(y, np.full((1, 1, 3), 1 / 3)).tobytes() == y.tobytes()
    out = rectify_soft_label(np.array([[[0.5, 0.5]]]), np.array([[[0.8808, 0.1192]]]))
    np.testing.assert_allclose(out.ravel(), [0.8808, 0.1192], atol=1e-4)
    hot = np.array([[[0.0, 1.0, 0.0]]])
    np.testing.assert_array_equal(rectify_soft_label(hot, np.array([[[0.7, 0.1, 0.2]]])), hot)


def test_rectify_degenerate_keeps_label():
    report = {}
    y = np.array([[[1.0, 0.0]]])
    out = rectify_soft_label(y, np.array([[[0.0, 1.0]]]), report)
    np.testing.assert_array_equal(out, y)
    assert report["degenerate"] == 1


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_rectify_preserves_zeros(seed):
    rng = np.random.default_rng(seed)
    y = rng.dirichlet(np.ones(4), size=(2, 2))
    y[rng.random(size=y.shape) < 0.3] = 0.0
    y[..., 0] += 1e-3
    y /= y.sum(-1, keepdims=True)
    omega = rng.dirichlet(np.ones(4), size=(2, 2))
    out = rectify_soft_label(y, omega)
    assert np.all(out[y == 0] == 0)
    np.testing.assert_allclose(out.sum(-1), 1.0)


def test_ema_update_examples():
    shadow = {"w": np.array(0.0)}
    ema_update({"w": np.array(1.0)}, shadow, 0.999)
    assert float(shadow["w"]) == pytest.approx(0.001)
    shadow = {"w": np.array([3.0, 4.0])}
    ema_update({"w": np.array([1.0, 2.0])}, shadow, 0.0)
    np.testing.assert_array_equal(shadow["w"], [1.0, 2.0])


def test_ema_converges_geometrically():
    m = 0.9
    shadow = {"w": np.array(0.0)}
    for n in range(1, 51):
        ema_update({"w": np.array(1.0)}, shadow, m)
        assert float(shadow["w"]) == pytest.approx(1 - m ** n, rel=1e-12)


def test_ema_shape_checks():
    with pytest.raises(ValueError):
        ema_update({"w": np.zeros(2)}, {"v": np.zeros(2)}, 0.5)
    with pytest.raises(ValueError):
        ema_update({"w": np.zeros(2)}, {"w": np.zeros(3)}, 0.5)


def test_bank_array_round_trip():
    bank = PrototypeBank(np.arange(6.0).reshape(3, 2), np.array([1.0, 0.0, 5.0]), 0.5, 0.99)
    back = PrototypeBank.from_array(bank.to_array())
    np.testing.assert_array_equal(back.eta, bank.eta)
    np.testing.assert_array_equal(back.counts, bank.counts)
    assert (back.tau, back.momentum) == (0.5, 0.99)


def test_bank_validation():
    with pytest.raises(ValueError):
        PrototypeBank(np.array([[np.nan]]), np.ones(1))
    with pytest.raises(ValueError):
        PrototypeBank(np.zeros((2, 1)), np.ones(2), tau=0.0)
    with pytest.raises(ValueError):
        PrototypeBank(np.zeros((2, 1)), np.ones(2), momentum=1.0)
