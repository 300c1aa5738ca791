import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from syncsgd import nn

import oracles


def f64_net(topology, seed):
    return nn.init_params(topology, seed=seed, dtype=np.float64)


def batch(topology, m, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(m, topology[0]))
    y = np.eye(topology[-1])[rng.integers(0, topology[-1], size=m)]
    return x, y


def test_num_params_default_topology():
    assert nn.num_params_for((784, 128, 64, 10)) == 109386
    p = nn.init_params()
    assert p.num_params == 109386
    assert p.byte_size == 437544


def test_zero_weights_give_half_and_uniform():
    p = nn.init_params((5, 4, 3), seed=0)
    for w, b in zip(p.weights, p.biases):
        w[:] = 0
        b[:] = 0
    acts = nn.forward(p, np.random.default_rng(0).uniform(size=(7, 5)))
    np.testing.assert_array_equal(acts.a[1], 0.5)
    np.testing.assert_allclose(acts.output, 1 / 3, rtol=1e-6)


def test_single_unit_sigmoid_output():
    p = nn.ModelParams([np.array([[1.0]], dtype=np.float32)], [np.array([0.0], dtype=np.float32)])
    acts = nn.forward(p, np.array([[0.0]]), output="sigmoid")
    assert acts.output[0, 0] == 0.5


def test_softmax_rows_sum_to_one_default_topology():
    p = nn.init_params(seed=3)
    x, _ = batch((784, 128, 64, 10), 100, 3)
    out = nn.forward(p, x).output
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)


def test_forward_shape_error_names_layer():
    p = nn.init_params((4, 3, 2))
    with pytest.raises(nn.ShapeError, match="layer 0"):
        nn.forward(p, np.zeros((2, 5)))


def test_loss_examples():
    a = np.array([[0.5, 0.5]])
    assert nn.loss(a, np.array([[1.0, 0.0]])) == 0.5
    assert nn.loss(a, a) == 0.0
    with pytest.raises(nn.ShapeError):
        nn.loss(a, np.zeros((1, 3)))


def test_loss_matches_hand_sum():
    rng = np.random.default_rng(11)
    a, y = rng.uniform(size=(9, 4)), rng.uniform(size=(9, 4))
    ref = sum((a[i, j] - y[i, j]) ** 2 for i in range(9) for j in range(4)) / 9
    assert nn.loss(a, y) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("topology", [(4, 3, 2), (8, 5, 3)])
@pytest.mark.parametrize("output", ["softmax", "sigmoid"])
def test_backprop_matches_finite_differences(topology, output):
    for seed in range(10):
        p = f64_net(topology, seed)
        x, y = batch(topology, 6, seed + 100)
        g, _ = nn.gradients(p, x, y, output=output)
        fw, fb = oracles.finite_difference([w.copy() for w in p.weights],
                                           [b.copy() for b in p.biases], x, y, output=output)
        for ours, ref in zip(g.weights + g.biases, fw + fb):
            assert np.all(np.abs(ours - ref) <= 1e-4 * np.maximum(1, np.abs(ours)))


def test_perfect_prediction_zero_gradient():
    p = f64_net((3, 2), 0)
    x = np.random.default_rng(0).uniform(size=(4, 3))
    y = nn.forward(p, x, output="sigmoid").output.copy()
    g, _ = nn.gradients(p, x, y, output="sigmoid")
    assert all(np.all(a == 0) for a in g.weights + g.biases)


def test_duplicated_batch_same_mean_gradient():
    p = f64_net((6, 4, 3), 2)
    x, y = batch((6, 4, 3), 5, 2)
    g1, _ = nn.gradients(p, x, y)
    g2, _ = nn.gradients(p, np.vstack([x, x]), np.vstack([y, y]))
    np.testing.assert_allclose(g1.flatten(), g2.flatten(), rtol=1e-12, atol=1e-15)


def test_apply_update_examples():
    p = nn.ModelParams([np.array([[1.0]], dtype=np.float32)], [np.array([1.0], dtype=np.float32)])
    g = nn.GradientSet([np.array([[0.5]], dtype=np.float32)], [np.array([0.5], dtype=np.float32)])
    assert nn.apply_update(p, g, 0.0).equal(p)
    out = nn.apply_update(p, g, 0.1)
    assert out.weights[0][0, 0] == np.float32(1.0) - np.float32(0.1) * np.float32(0.5)
    assert out.weights[0][0, 0] == pytest.approx(0.95)


@given(st.integers(0, 2**31 - 1), st.floats(0, 1))
def test_update_then_inverse_restores(seed, alpha):
    p = f64_net((4, 3, 2), seed % 1000)
    g = nn.GradientSet.from_flat(np.random.default_rng(seed).standard_normal(p.num_params),
                                 p.topology)
    neg = nn.GradientSet.from_flat(-g.flatten(), p.topology)
    back = nn.apply_update(nn.apply_update(p, g, alpha), neg, alpha)
    np.testing.assert_allclose(back.flatten(), p.flatten(), rtol=0, atol=1e-12)


@given(st.integers(0, 10_000))
def test_flat_roundtrip_and_bytes(seed):
    p = nn.init_params((5, 4, 3), seed=seed)
    assert nn.ModelParams.from_flat(p.flatten(), p.topology).equal(p)
    assert nn.ModelParams.from_bytes(p.to_bytes(), p.topology).equal(p)


def test_gradient_deterministic():
    p = nn.init_params((20, 16, 4), seed=5)
    x, y = batch((20, 16, 4), 10, 5)
    a, _ = nn.gradients(p, x, y)
    b, _ = nn.gradients(p, x, y)
    assert np.array_equal(a.flatten(), b.flatten())


def test_cross_entropy_gradient_finite_difference():
    p = f64_net((4, 3, 2), 9)
    x, y = batch((4, 3, 2), 5, 9)
    g, _ = nn.gradients(p, x, y, kind="cross-entropy")
    flat = p.flatten()
    h = 1e-6
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        lu = nn.loss(nn.forward(nn.ModelParams.from_flat(up, p.topology), x).output, y,
                     "cross-entropy")
        ld = nn.loss(nn.forward(nn.ModelParams.from_flat(dn, p.topology), x).output, y,
                     "cross-entropy")
        assert abs(g.flatten()[i] - (lu - ld) / (2 * h)) <= 1e-4 * max(1, abs(g.flatten()[i]))


def test_measure_t_processing():
    p = nn.init_params((784, 128, 64, 10))
    x, y = batch((784, 128, 64, 10), 200, 0)
    t1 = nn.measure_t_processing(p, x[:100], y[:100], reps=15)
    t2 = nn.measure_t_processing(p, x[:100], y[:100], reps=15)
    assert t1 > 0 and abs(t1 - t2) / max(t1, t2) <= 0.25
    assert nn.measure_t_processing(p, x, y, reps=15) > min(t1, t2)
    with pytest.raises(ValueError):
        nn.measure_t_processing(p, x, y, reps=0)


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        nn.TrainConfig(loss_kind="hinge")
