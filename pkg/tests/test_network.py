import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shallow_denoisers import closed_form as cf
from shallow_denoisers.errors import EmptyBatch
from shallow_denoisers.experiments import gradient_check, random_separated_1d
from shallow_denoisers.geometry import CleanDataset
from shallow_denoisers.network import (
    ShallowNet, balance, balanced_cost, data_loss, dumps, extract_units, forward,
    from_closed_form, init_net, loads, loss_and_grad, penalty, rescale_units,
)

from conftest import equilateral, noisy_with_extremes

seeds = st.integers(0, 2**31 - 1)


def random_net(seed, d=2, K=5, use_skip=True):
    g = np.random.default_rng(seed)
    return ShallowNet(g.standard_normal((K, d)), g.standard_normal((K, d)), g.standard_normal(K),
                      g.standard_normal((d, d)), g.standard_normal(d), use_skip)


def naive_forward(net, y):
    out = net.V @ y + net.c if net.use_skip else np.zeros(net.d)
    for k in range(net.K):
        pre = sum(net.w[k, i] * y[i] for i in range(net.d)) + net.b[k]
        out = out + net.a[k] * max(pre, 0.0)
    return out


def test_identity_map():
    net = ShallowNet(np.zeros((3, 2)), np.ones((3, 2)), np.zeros(3), np.eye(2), np.zeros(2))
    y = np.random.default_rng(0).standard_normal((10, 2))
    assert np.array_equal(forward(net, y), y)


def test_single_relu():
    net = ShallowNet(np.ones((1, 1)), np.ones((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1),
                     use_skip=False)
    y = np.linspace(-2, 2, 9)
    assert np.array_equal(net(y), np.maximum(y, 0))


@settings(max_examples=30, deadline=None)
@given(seeds, st.booleans())
def test_forward_matches_naive_loop(seed, use_skip):
    net = random_net(seed, d=3, K=4, use_skip=use_skip)
    y = np.random.default_rng(seed + 1).standard_normal(3)
    assert np.allclose(forward(net, y), naive_forward(net, y), atol=1e-12)


def test_perfect_fit_zero_loss_and_gradient():
    net = random_net(1)
    Y = np.random.default_rng(2).standard_normal((20, 2))
    loss, grad = loss_and_grad(net, Y, net(Y), 0.0)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_penalty_gradient_of_a():
    net = random_net(3)
    Y = np.random.default_rng(4).standard_normal((20, 2))
    lam = 0.37
    _, grad = loss_and_grad(net, Y, net(Y), lam)
    assert np.array_equal(grad[:net.a.size], lam * net.a.ravel())


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        loss_and_grad(random_net(0), np.zeros((0, 2)), np.zeros((0, 2)), 0.1)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 6), st.booleans())
def test_gradient_matches_finite_differences(seed, d, K, use_skip):
    g = np.random.default_rng(seed)
    net = random_net(seed, d, K, use_skip)
    Y = g.standard_normal((8, d))
    X = g.standard_normal((8, d))
    assert gradient_check(net, Y, X, 1e-3) <= 1e-4


def test_flat_roundtrip():
    net = random_net(5)
    theta = net.to_flat()
    assert theta.size == net.n_params()
    assert np.array_equal(net.copy().set_flat(theta).to_flat(), theta)


def test_penalty_values():
    assert penalty(ShallowNet.zeros(2, 3)) == 0.0
    net = ShallowNet(np.array([[3.0, 4.0]]), np.array([[0.0, 1.0]]), np.zeros(1),
                     np.zeros((2, 2)), np.zeros(2))
    assert penalty(net) == 13.0
    assert balanced_cost(net) == 5.0


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_balancing_reaches_balanced_cost(seed):
    net = random_net(seed)
    bal = balance(net)
    assert penalty(bal) == pytest.approx(balanced_cost(net), rel=1e-12)
    assert penalty(bal) <= penalty(net) + 1e-12
    y = np.random.default_rng(seed).standard_normal((10, 2))
    assert np.allclose(bal(y), net(y), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.1, 10))
def test_rescaling_invariance(seed, t):
    net = random_net(seed)
    out = rescale_units(net, t)
    assert balanced_cost(out) == pytest.approx(balanced_cost(net), rel=1e-12)
    y = np.random.default_rng(seed).standard_normal((10, 2))
    assert np.allclose(out(y), net(y), atol=1e-10)


def test_two_knot_balanced_cost(two_point):
    f = cf.build_1d(two_point)
    net = from_closed_form(f)
    assert net.K == 2
    assert np.allclose(np.abs(net.a[:, 0]), 1.25)
    assert balanced_cost(net) == pytest.approx(2.5, abs=1e-14)


def test_extract_units_significance():
    net = random_net(6)
    net.a[2] = 0.0
    assert 2 not in [u.index for u in extract_units(net, 0.01)]
    assert len(extract_units(net, 0.0)) == net.K


def test_extract_units_from_obtuse_construction():
    pts = np.array([[0, 0], [2, 0], [-1, 2.0]])
    f = cf.build_obtuse_simplex(CleanDataset(pts), 0.2)
    units = extract_units(from_closed_form(f), 0.05)
    dirs = [u.u for u in f.units]
    for unit in units:
        assert min(np.linalg.norm(np.abs(unit.normal) - np.abs(d)) for d in dirs) < 1e-9
        assert max(abs(unit.normal @ d) for d in dirs) == pytest.approx(1, abs=1e-9)


def test_minimal_realization_four_points():
    f = cf.build_1d(noisy_with_extremes([-5, -5 / 3, 5 / 3, 5], -0.5, 0.5))
    net = from_closed_form(f)
    assert net.K == 6
    y = np.linspace(-9, 9, 1000)
    assert np.abs(net(y) - f(y)).max() < 1e-10
    assert balanced_cost(net) == pytest.approx(cf.representation_cost(f), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 10))
def test_minimal_realization_random(seed, N):
    f = cf.build_1d(random_separated_1d(np.random.default_rng(seed), N))
    net = from_closed_form(f)
    assert net.K == 2 * N - 2
    assert abs(balanced_cost(net) - cf.representation_cost(f)) <= 1e-10 * max(1, cf.representation_cost(f))


def test_realization_of_equilateral():
    f = cf.build_acute_simplex(equilateral(), 0.25)
    net = from_closed_form(f)
    y = np.random.default_rng(0).uniform(-2, 2, (200, 2))
    assert np.abs(net(y) - f(y)).max() < 1e-12
    assert balanced_cost(net) == pytest.approx(6.0, abs=1e-12)


def test_init_deterministic_and_json_roundtrip():
    a = init_net(2, 10, 1.0, seed=3)
    b = init_net(2, 10, 1.0, seed=3)
    assert np.array_equal(a.to_flat(), b.to_flat())
    c = loads(dumps(a))
    assert np.array_equal(c.to_flat(), a.to_flat()) and c.use_skip == a.use_skip
    assert np.array_equal(init_net(2, 3, 1.0, 0, skip_init="zero").V, np.zeros((2, 2)))


def test_data_loss_definition():
    net = random_net(7)
    g = np.random.default_rng(8)
    Y, X = g.standard_normal((5, 2)), g.standard_normal((5, 2))
    assert data_loss(net, Y, X) == pytest.approx(np.mean(np.sum((net(Y) - X) ** 2, 1)))
