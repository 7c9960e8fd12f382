import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shallow_denoisers import closed_form as cf
from shallow_denoisers.analysis import (
    DiscretePrior, PiecewiseConstantPrior, alignment_report, contraction_ratios, contractivity_1d,
    fixed_points_1d, mse_vs_prior, reference_directions, subspace_property_check, svg_overlay,
    uniform_prior, write_alignment_csv,
)
from shallow_denoisers.baselines import EmmseDenoiser
from shallow_denoisers.errors import NoSignificantUnits, UnsupportedDensity
from shallow_denoisers.experiments import line_points, random_separated_1d
from shallow_denoisers.geometry import CleanDataset, check_rays, classify_simplex, fit_subspace
from shallow_denoisers.network import ShallowNet, from_closed_form, init_net
from shallow_denoisers.training import gen_noisy

from conftest import equilateral, noisy_with_extremes

OBTUSE = CleanDataset(np.array([[0, 0], [2, 0], [-1, 2.0]]))


# --- MSE against a prior -----------------------------------------------------------------


@pytest.mark.parametrize("sigma", [0.1, 0.3, 2.0])
@pytest.mark.parametrize("method", ["quadrature", "hermite"])
def test_identity_mse_is_noise_variance(sigma, method):
    value, _ = mse_vs_prior(lambda y: y, uniform_prior(-5, 5), sigma, method=method)
    assert value == pytest.approx(sigma**2, abs=1e-8)


def test_identity_mse_monte_carlo():
    m, se = mse_vs_prior(lambda y: y, uniform_prior(-5, 5), 0.3, method="mc", S=200_000)
    assert abs(m - 0.09) <= 4 * se


def test_constant_mean_on_symmetric_two_points():
    prior = DiscretePrior(CleanDataset(np.array([[-1.0], [1.0]])))
    value, _ = mse_vs_prior(lambda y: np.zeros_like(y), prior, 0.0)
    assert value == 1.0


def test_piecewise_prior_normalized():
    p = PiecewiseConstantPrior((0.0, 1.0, 3.0), (2.0, 2.0))
    assert sum(w * (hi - lo) for lo, hi, w in p.pieces()) == pytest.approx(1.0)


def test_multivariate_quadrature_unsupported():
    with pytest.raises(UnsupportedDensity):
        mse_vs_prior(lambda y: y, DiscretePrior(equilateral()), 0.1)


def _grid_mse(f, lo, hi, sigma, n=100_000, order=40):
    x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    t, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    total = 0.0
    for tj, wj in zip(t, w):
        total += wj * np.mean((f(x + sigma * tj) - x) ** 2)
    return total


def test_closed_form_beats_emmse_low_noise():
    clean = line_points()
    sigma = 0.01
    f = cf.build_1d(gen_noisy(clean, 9000, sigma, seed=0))
    e = EmmseDenoiser(clean, sigma)
    prior = uniform_prior(-5, 5)
    a, _ = mse_vs_prior(f, prior, sigma)
    b, _ = mse_vs_prior(e, prior, sigma)
    assert a < b
    assert a == pytest.approx(_grid_mse(f, -5, 5, sigma), rel=1e-3)
    assert b == pytest.approx(_grid_mse(e, -5, 5, sigma), rel=1e-3)


# --- contractivity -----------------------------------------------------------------------


def test_fixed_point_two_point():
    fp = fixed_points_1d(np.array([0.0, 1.0]), np.array([-0.1, -0.1]), np.array([0.1, 0.1]))
    assert fp == pytest.approx([0.5])


def test_ratio_zero_inside_noise_interval(two_point):
    f = cf.build_1d(two_point)
    r = contraction_ratios(f, np.array([0.0, 1.0]), np.array([0.05, 1.02]))
    assert np.all(r == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 8))
def test_contractive_toward_points(seed, N):
    ds = random_separated_1d(np.random.default_rng(seed), N)
    rep = contractivity_1d(cf.build_1d(ds), ds)
    assert rep.passed and rep.alpha_observed < 1


def test_identity_not_contractive():
    ds = noisy_with_extremes([0, 1], -0.1, 0.1)
    assert not contractivity_1d(lambda y: y, ds).passed


# --- subspace -------------------------------------------------------------------------------


def test_subspace_property_rays():
    ang = np.deg2rad([0.0, 130.0, 245.0])
    tips = np.stack([np.cos(ang), np.sin(ang), np.zeros(3)], 1)
    ds = CleanDataset(np.vstack([np.zeros(3), tips, 2 * tips]))
    f = cf.build_rays(check_rays(ds), 0.2)
    sub = fit_subspace(ds)
    assert sub.rank == 2
    Y = np.random.default_rng(0).standard_normal((200, 3)) * 10
    assert subspace_property_check(f, sub.basis, Y) < 1e-10


def test_subspace_property_in_higher_dimension():
    u = np.array([1.0, 2.0, 2.0]) / 3
    f = cf.build_colinear(CleanDataset(np.array([0 * u, 2 * u, 5 * u])), 0.3)
    Y = np.random.default_rng(1).standard_normal((100, 3)) * 20
    assert subspace_property_check(f, u, Y) < 1e-10


def test_identity_fails_subspace_property():
    Y = np.random.default_rng(0).standard_normal((10, 3))
    assert subspace_property_check(lambda y: y, np.array([1.0, 0, 0]), Y) > 0


# --- alignment ------------------------------------------------------------------------------


def test_alignment_exact_obtuse_construction():
    net = from_closed_form(cf.build_obtuse_simplex(OBTUSE, 0.2))
    rep = alignment_report(net, OBTUSE, classify_simplex(OBTUSE))
    assert rep.min_abs_cos == pytest.approx(1.0, abs=1e-9)
    assert rep.label == "edges"


def test_alignment_exact_equilateral_construction():
    clean = equilateral()
    net = from_closed_form(cf.build_acute_simplex(clean, 0.25))
    rep = alignment_report(net, clean, classify_simplex(clean))
    assert rep.min_abs_cos == pytest.approx(1.0, abs=1e-9)


def test_alignment_random_net_well_formed(tmp_path):
    net = init_net(2, 20, 1.0, seed=0)
    rep = alignment_report(net, OBTUSE, classify_simplex(OBTUSE), significance=0.0)
    assert all(0 <= u.abs_cos <= 1 for u in rep.units)
    write_alignment_csv(tmp_path / "a.csv", rep)
    assert len((tmp_path / "a.csv").read_text().splitlines()) == len(rep.units) + 1


def test_alignment_no_units():
    with pytest.raises(NoSignificantUnits):
        alignment_report(ShallowNet.zeros(2, 3), OBTUSE, classify_simplex(OBTUSE))


def test_reference_directions_unit_length():
    refs, _ = reference_directions(equilateral(), classify_simplex(equilateral()))
    assert np.allclose(np.linalg.norm(refs, axis=1), 1)


def test_svg_is_well_formed():
    net = from_closed_form(cf.build_obtuse_simplex(OBTUSE, 0.2))
    svg = svg_overlay(OBTUSE, 0.2, net, 0.05, edges=[(0, 1), (0, 2)],
                      predicted=[(np.array([1.0, 0.0]), 0.2)], title="obtuse")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len(root.findall(".//{http://www.w3.org/2000/svg}circle")) >= 3
