import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faceimit import errors
from faceimit.nnet import (adam_step, backward, forward, init_adam, init_network, network_from_dict,
                           network_to_dict, predict)


def random_net(rng, max_layers=3, max_units=32, acts=("tanh", "linear")):
    n_layers = int(rng.integers(1, max_layers + 1))
    sizes = [int(rng.integers(1, max_units + 1)) for _ in range(n_layers + 1)]
    return init_network(sizes, [str(rng.choice(acts)) for _ in range(n_layers)],
                        seed=int(rng.integers(1 << 30)))


def fd_check(net, rng, h=1e-5, rtol=1e-4, atol=1e-6):
    """Compare every analytic parameter gradient with central differences."""
    x = rng.normal(size=(3, net.sizes[0]))
    c = rng.normal(size=(3, net.sizes[-1]))
    y, tape = forward(net, x)
    grads, dx = backward(net, tape, c)

    def loss():
        return float((predict(net, x) * c).sum())

    worst = 0.0
    for p, g in zip(net.parameters(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = loss()
            flat[k] = old - h
            down = loss()
            flat[k] = old
            fd = (up - down) / (2 * h)
            err = abs(gflat[k] - fd)
            assert err <= max(atol, rtol * max(abs(fd), abs(gflat[k]))), (gflat[k], fd)
            worst = max(worst, err)
    # input gradient as well
    for k in range(x.shape[1]):
        d = np.zeros_like(x)
        d[:, k] = h
        fd = (((predict(net, x + d) - predict(net, x - d)) * c).sum(axis=1)) / (2 * h)
        np.testing.assert_allclose(dx[:, k], fd, rtol=rtol, atol=atol)
    return worst


def test_init_shapes_and_determinism():
    net = init_network([4, 8, 2], ["tanh", "linear"], seed=3)
    assert [l.W.shape for l in net.layers] == [(8, 4), (2, 8)]
    again = init_network([4, 8, 2], ["tanh", "linear"], seed=3)
    assert net.same_weights(again)
    with pytest.raises(ValueError):
        init_network([4], ["tanh", "linear"])
    with pytest.raises(ValueError):
        init_network([4, 2], ["sigmoid"])


def test_forward_examples(rng):
    net = init_network([3, 3], ["linear"])
    net.layers[0].W[:] = np.eye(3)
    x = rng.normal(size=3)
    assert np.array_equal(predict(net, x), x)
    net = init_network([3, 3], ["tanh"])
    net.layers[0].W[:] = 0
    assert np.array_equal(predict(net, x), np.zeros(3))


def test_forward_matches_straight_line_recompute(rng):
    net = init_network([5, 7, 6, 2], ["tanh", "relu", "linear"], seed=9)
    x = rng.normal(size=(4, 5))
    W0, b0, W1, b1, W2, b2 = net.parameters()
    expect = np.empty((4, 2))
    for i in range(4):
        h = np.tanh(W0 @ x[i] + b0)
        h = np.maximum(W1 @ h + b1, 0)
        expect[i] = W2 @ h + b2
    np.testing.assert_allclose(predict(net, x), expect, rtol=1e-13)
    assert np.array_equal(predict(net, x), predict(net, x))


def test_backward_examples(rng):
    net = init_network([4, 3, 2], ["tanh", "linear"], seed=1)
    y, tape = forward(net, rng.normal(size=4))
    grads, dx = backward(net, tape, np.zeros(2))
    assert all(not g.any() for g in grads) and not dx.any()

    net = init_network([4, 2], ["linear"], seed=1)
    x = rng.normal(size=4)
    _, tape = forward(net, x)
    (gW, gb), _ = backward(net, tape, np.array([1.0, 0.0]))
    assert np.array_equal(gW[0], x) and not gW[1].any()
    assert np.array_equal(gb, [1.0, 0.0])


def test_relu_gradients_away_from_kinks(rng):
    net = init_network([4, 6, 3], ["relu", "linear"], seed=2)
    net.layers[0].b[:] = 0.3
    fd_check(net, rng)


def test_stale_tape_rejected(rng):
    net = init_network([3, 2], ["tanh"], seed=0)
    _, tape = forward(net, rng.normal(size=3))
    state = init_adam(net)
    g, _ = backward(net, tape, np.ones(2))
    adam_step(net, g, state, 0.1)
    with pytest.raises(errors.StaleTapeError):
        backward(net, tape, np.ones(2))


def test_upstream_shape_checked(rng):
    net = init_network([3, 2], ["tanh"], seed=0)
    _, tape = forward(net, rng.normal(size=(5, 3)))
    with pytest.raises(errors.DimensionError):
        backward(net, tape, np.ones((5, 3)))
    with pytest.raises(errors.DimensionError):
        forward(net, np.ones(4))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_gradients_property(seed):
    rng = np.random.default_rng(seed)
    fd_check(random_net(rng, max_units=8), rng)


# Adam ------------------------------------------------------------------------

def scalar_net(w):
    net = init_network([1, 1], ["linear"])
    net.layers[0].W[:] = w
    return net


def test_adam_zero_gradient_keeps_params():
    net = init_network([3, 2], ["tanh"], seed=1)
    before = net.copy()
    state = init_adam(net)
    adam_step(net, [np.zeros_like(p) for p in net.parameters()], state, 0.1)
    assert net.same_weights(before)
    assert state.t == 1


def test_adam_first_step_is_lr_sized():
    for g in (0.3, -7.0, 1e-3):
        net = scalar_net(1.0)
        state = init_adam(net)
        adam_step(net, [np.array([[g]]), np.zeros(1)], state, 0.01)
        step = 1.0 - net.layers[0].W[0, 0]
        assert step == pytest.approx(0.01 * np.sign(g) * abs(g) / (abs(g) + 1e-8), rel=1e-9)


def test_adam_on_quadratic_matches_scalar_recursion():
    net = scalar_net(1.0)
    state = init_adam(net)
    # oracle: the textbook scalar recursion
    w, m, v = 1.0, 0.0, 0.0
    for t in range(1, 101):
        g = 2.0 * net.layers[0].W[0, 0]
        adam_step(net, [np.array([[g]]), np.zeros(1)], state, 0.1)
        gw = 2.0 * w
        m = 0.9 * m + 0.1 * gw
        v = 0.999 * v + 0.001 * gw * gw
        w -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert state.t == t
    assert net.layers[0].W[0, 0] == pytest.approx(w, rel=1e-12, abs=1e-15)
    assert abs(w) < 0.1


def test_adam_rejects_bad_inputs():
    net = init_network([3, 2], ["tanh"], seed=1)
    state = init_adam(net)
    with pytest.raises(ValueError):
        adam_step(net, [np.zeros_like(p) for p in net.parameters()], state, 0.0)
    with pytest.raises(errors.DimensionError):
        adam_step(net, [np.zeros(3)], state, 0.1)


def test_adam_accumulators_finite(rng):
    net = init_network([4, 8, 2], ["tanh", "linear"], seed=4)
    state = init_adam(net)
    for _ in range(50):
        adam_step(net, [1e3 * rng.normal(size=p.shape) for p in net.parameters()], state, 1e-3)
    assert all(np.isfinite(a).all() for a in state.m + state.v)


def test_network_roundtrip(rng):
    net = init_network([4, 8, 2], ["tanh", "linear"], seed=4)
    back = network_from_dict(network_to_dict(net))
    assert back.same_weights(net)
