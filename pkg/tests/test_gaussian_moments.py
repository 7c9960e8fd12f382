import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from shallow_denoisers.errors import IllConditioned, ModelShapeUnsupported
from shallow_denoisers.gaussian_moments import (
    BivariateGaussian, bvn_tail, marginalized_loss, marginalized_terms, mc_normal, mc_oracle,
    moments_bench, relu_gauss_cross, relu_gauss_mean, relu_gauss_second, sobol_normal,
    std_bvn_tail, write_bench_csv,
)
from shallow_denoisers.geometry import CleanDataset
from shallow_denoisers.network import ShallowNet

# Values from 30-digit adaptive quadrature of the defining integrals.
MEAN_ORACLE = {
    (1.0, 5.0): (2.5344731793163824131, 17.015965915293957989),
    (-1.0, 5.0): (1.5344731793163824131, 8.9840340847060420109),
    (0.0, 1.0): (0.39894228040143267794, 0.5),
    (-10.0, 1.0): (7.4745602545893281433e-25, 1.4529276957119797785e-25),
    (2.0, 0.5): (2.0000035726292162028, 4.2499992274479741257),
}
CROSS_ORACLE = {
    ((-4.0, 17.0), (13.0, -9.0, 8.0)): 2.9257494111902836238,
    ((6.0, 2.0), (10.0, 2.0, 1.0)): 14.024390951586542261,
    ((0.0, 0.0), (1.0, 0.0, 1.0)): 0.15915494309189533577,
    ((0.5, -0.3), (2.0, 1.2, 1.0)): 0.59279487379068366476,
}


@pytest.mark.parametrize("key", list(MEAN_ORACLE))
def test_relu_mean_and_second(key):
    mu, s = key
    m1, m2 = MEAN_ORACLE[key]
    assert relu_gauss_mean(mu, s) == pytest.approx(m1, rel=1e-10)
    assert relu_gauss_second(mu, s) == pytest.approx(m2, rel=1e-10)


def test_half_normal_mean():
    assert relu_gauss_mean(0.0, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)


def test_far_tail_positive_and_tiny():
    v = relu_gauss_mean(-10.0, 1.0)
    lead = math.exp(-50) / math.sqrt(2 * math.pi) / 100
    assert 0 < v < 1e-20
    assert v == pytest.approx(lead, rel=0.03)


def test_zero_sigma_limit():
    assert relu_gauss_mean(2.0, 0.0) == 2.0 and relu_gauss_mean(-2.0, 0.0) == 0.0
    assert relu_gauss_second(3.0, 0.0) == 9.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(0.01, 20))
def test_mean_bounds(mu, s):
    m = relu_gauss_mean(mu, s)
    assert m >= max(mu, 0) - 1e-12 * max(1, abs(mu))
    assert relu_gauss_second(mu, s) >= m * m * (1 - 1e-9)


@pytest.mark.parametrize("key", list(CROSS_ORACLE))
def test_relu_cross(key):
    mu, cov = key
    assert relu_gauss_cross(BivariateGaussian(mu, cov)) == pytest.approx(CROSS_ORACLE[key], rel=1e-12)


def test_cross_independent_standard():
    assert relu_gauss_cross(BivariateGaussian((0, 0), (1, 0, 1))) == pytest.approx(1 / (2 * math.pi))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 3), st.floats(0.2, 3), st.floats(-0.95, 0.95))
def test_cross_symmetric_under_swap(m1, m2, s1, s2, r):
    b = BivariateGaussian((m1, m2), (s1 * s1, r * s1 * s2, s2 * s2))
    assert relu_gauss_cross(b) == pytest.approx(relu_gauss_cross(b.swapped()), rel=1e-10, abs=1e-14)


def test_cross_perfect_correlation_is_second_moment():
    b = BivariateGaussian((0.7, 0.7), (2.0, 2.0, 2.0))
    assert relu_gauss_cross(b) == pytest.approx(relu_gauss_second(0.7, math.sqrt(2.0)), rel=1e-12)


def test_orthant_values():
    assert bvn_tail(BivariateGaussian((0, 0), (1, 0, 1))) == pytest.approx(0.25, abs=1e-15)
    assert abs(bvn_tail(BivariateGaussian((0, 0), (1, -0.5, 1))) - 1 / 6) <= 1e-10
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditioned)
        p = bvn_tail(BivariateGaussian((0, 0), (1, 1 - 1e-13, 1)))
    assert p == pytest.approx(0.5, abs=1e-6)


def test_degenerate_correlation_warns():
    with pytest.warns(IllConditioned):
        bvn_tail(BivariateGaussian((0, 0), (1, 1 - 1e-13, 1)))


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.99, 0.99))
def test_std_tail_matches_scipy(h, k, rho):
    want = multivariate_normal(cov=[[1, rho], [rho, 1]]).cdf([-h, -k])
    assert std_bvn_tail(h, k, rho) == pytest.approx(want, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 0.99))
def test_orthant_formula(rho):
    assert std_bvn_tail(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-14)


# --- marginalized loss -------------------------------------------------------------------


def small_net(seed, K=3, d=2):
    g = np.random.default_rng(seed)
    return ShallowNet(g.standard_normal((K, d)), g.standard_normal((K, d)), np.zeros(K),
                      np.zeros((d, d)), np.zeros(d), use_skip=False)


def test_marginalized_zero_noise_is_empirical_mse():
    net = small_net(0)
    prior = CleanDataset(np.array([[1.0, -0.5], [0.2, 2.0]]))
    mse = np.mean(np.sum((net(prior.points) - prior.points) ** 2, 1))
    assert marginalized_loss(net, prior, 0.0) == pytest.approx(mse, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 3))
def test_quadratic_term_nonnegative(seed, sigma):
    prior = CleanDataset(np.random.default_rng(seed + 1).standard_normal((2, 2)))
    _, hq = marginalized_terms(small_net(seed, K=4), prior, sigma)
    assert hq >= -1e-10


def test_marginalized_matches_monte_carlo():
    net = small_net(3)
    prior = CleanDataset(np.array([[1.0, 0.3], [-0.4, 1.1]]))
    m, se = mc_oracle(net, prior, 0.5, 1_000_000, seed=0)
    assert abs(marginalized_loss(net, prior, 0.5) - m) <= 4 * se


def test_parallel_weights_degenerate_case():
    net = small_net(4)
    net.w[1] = 2.5 * net.w[0]
    prior = CleanDataset(np.array([[1.0, 0.3], [-0.4, 1.1]]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditioned)
        value = marginalized_loss(net, prior, 0.5)
    m, se = mc_oracle(net, prior, 0.5, 400_000, seed=1)
    assert abs(value - m) <= 4 * se


def test_unsupported_shapes():
    net = small_net(0)
    net.b[0] = 0.1
    with pytest.raises(ModelShapeUnsupported):
        marginalized_loss(net, CleanDataset(np.eye(2)), 0.5)


# --- Monte Carlo helpers -------------------------------------------------------------------


def test_identity_mse_chi_square():
    prior = CleanDataset(np.array([[0.7]]))
    m, se = mc_oracle(lambda y: y, prior, 2.0, 100_000, seed=0)
    assert abs(m - 4.0) <= 4 * se


def test_constant_denoiser_on_its_point():
    prior = CleanDataset(np.array([[0.7]]))
    assert mc_oracle(lambda y: np.full_like(y, 0.7), prior, 2.0, 1000, seed=0) == (0.0, 0.0)


def test_mc_deterministic_and_chunk_consistent():
    fn = lambda z: np.maximum(z[:, 0], 0)
    a = mc_normal(fn, 1, 200_000, seed=3)
    b = mc_normal(fn, 1, 200_000, seed=3)
    assert a == b
    assert abs(a[0] - 1 / math.sqrt(2 * math.pi)) <= 4 * a[1]
    s = sobol_normal(fn, 1, 1 << 14, seed=3)
    assert abs(s[0] - 1 / math.sqrt(2 * math.pi)) <= 4 * s[1] + 1e-9


def test_bench_rows_and_csv(tmp_path):
    rows = moments_bench(1 << 14, seed=0, method="sobol")
    assert len(rows) == 4
    assert all(abs(r.mc_mean - r.analytic) <= 4 * r.mc_se + 1e-12 for r in rows)
    write_bench_csv(tmp_path / "b.csv", rows)
    assert (tmp_path / "b.csv").read_text().startswith("case,analytic,mc_mean,mc_se,normalized_error")
