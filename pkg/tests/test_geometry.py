import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shallow_denoisers.errors import EmptyDataset, NotRays, RaysNotObtuse
from shallow_denoisers.geometry import (
    AcuteSimplex, CleanDataset, Equilateral, NoisyDataset, ObtuseSimplex, check_rays,
    check_well_separated, classify_simplex, face_feet, fit_subspace, load_clean_csv,
    load_noisy_csv, save_clean_csv, save_noisy_csv, weighted_geometric_median,
)
from shallow_denoisers.training import gen_noisy

from conftest import equilateral, noisy_with_extremes


def test_separated_small_noise():
    rep = check_well_separated(noisy_with_extremes([0, 1], -0.1, 0.1))
    assert rep.ok
    assert rep.min_gap == pytest.approx(0.8)


def test_not_separated_large_noise():
    rep = check_well_separated(noisy_with_extremes([0, 1], -0.6, 0.6))
    assert not rep.ok
    assert rep.failing_pairs


def test_separation_matches_raw_scan():
    clean = CleanDataset(np.array([-5, -5 / 3, 5 / 3, 5])[:, None])
    ds = gen_noisy(clean, 9000, 1.5, seed=0)
    raw = ds.samples[:, :, 0] - clean.points[:, :1]
    assert np.array_equal(ds.eps_max, raw.max(axis=1))
    assert np.array_equal(ds.eps_min, raw.min(axis=1))
    x = clean.points[:, 0]
    gaps = (x[1:] + raw[1:].min(1)) - (x[:-1] + raw[:-1].max(1))
    rep = check_well_separated(ds)
    assert rep.ok == bool(np.all(gaps > 0))
    assert not rep.ok


def test_empty_dataset_rejected_by_operations():
    empty = CleanDataset(np.zeros((0, 2)))
    with pytest.raises(EmptyDataset):
        fit_subspace(empty)


def test_classify_obtuse():
    tag = classify_simplex(CleanDataset(np.array([[0, 0], [2, 0], [-1, 2.0]])))
    assert isinstance(tag, ObtuseSimplex) and tag.apex == 0


def test_classify_equilateral():
    assert isinstance(classify_simplex(equilateral()), Equilateral)


def test_classify_acute():
    pts = np.array([[0, 0], [3, 0], [1, 2.0]])
    for n in range(3):
        for i in range(3):
            for j in range(3):
                if len({n, i, j}) == 3:
                    assert (pts[i] - pts[n]) @ (pts[j] - pts[n]) > 0
    assert isinstance(classify_simplex(CleanDataset(pts)), AcuteSimplex)


def test_subspace_colinear():
    u = np.array([0.6, 0.8])
    sub = fit_subspace(CleanDataset(np.array([1.0, -2.0, 3.5])[:, None] * u))
    assert sub.rank == 1
    assert abs(abs(sub.basis[:, 0] @ u) - 1) < 1e-12


def test_subspace_projector_identity():
    rng = np.random.default_rng(3)
    sub = fit_subspace(CleanDataset(rng.standard_normal((3, 5))))
    P = sub.projector
    assert sub.rank == 3
    assert np.allclose(P @ P, P, atol=1e-12)
    assert np.trace(P) == pytest.approx(3)


def test_subspace_rank_under_perturbation():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    X += 1e-12 * rng.standard_normal(X.shape)
    sv = np.linalg.svd(X, compute_uv=False)
    assert np.sum(sv > 1e-8 * sv[0]) == 2
    assert fit_subspace(CleanDataset(X), tol=1e-8).rank == 2


def test_rays_two_obtuse():
    d = np.array([-1, 1]) / np.sqrt(2)
    pts = np.array([[0, 0], [1, 0], [2, 0], d, 2 * d])
    rays = check_rays(CleanDataset(pts))
    assert len(rays.directions) == 2


def test_rays_three_at_120():
    ang = np.deg2rad([0, 120, 240])
    pts = np.vstack([[0, 0], np.stack([np.cos(ang), np.sin(ang)], 1)])
    assert len(check_rays(CleanDataset(pts)).directions) == 3


def test_rays_at_60_rejected():
    ang = np.deg2rad([0, 60])
    pts = np.vstack([[0, 0], np.stack([np.cos(ang), np.sin(ang)], 1)])
    with pytest.raises(RaysNotObtuse):
        check_rays(CleanDataset(pts))


def test_rays_need_origin_sample():
    with pytest.raises(NotRays):
        check_rays(CleanDataset(np.array([[1, 0], [0, 1.0]])))


def test_median_equilateral_is_centroid():
    pts = equilateral().points
    assert np.allclose(weighted_geometric_median(pts), pts.mean(0), atol=1e-9)


def test_median_two_points_midpoint():
    pts = np.array([[0, 0], [2, 4.0]])
    assert np.allclose(weighted_geometric_median(pts), [1, 2])


def _grid_min(pts, w, lo, hi, h):
    xs = np.arange(lo[0], hi[0] + h / 2, h)
    ys = np.arange(lo[1], hi[1] + h / 2, h)
    G = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
    obj = sum(wi * np.linalg.norm(G - p, axis=1) for p, wi in zip(pts, w))
    k = np.argmin(obj)
    return G[k], obj[k]


def test_median_matches_grid_search():
    pts = np.array([[0, 0], [4, 0], [0, 3.0]])
    w = 1 / np.linalg.norm(pts - face_feet(pts), axis=1)
    z = weighted_geometric_median(pts, w)
    g, _ = _grid_min(pts, w, [0, 0], [4, 3], 1e-2)
    g, best = _grid_min(pts, w, g - 0.02, g + 0.02, 1e-3)
    obj = sum(wi * np.linalg.norm(z - p) for p, wi in zip(pts, w))
    assert obj <= best + 1e-9
    assert np.linalg.norm(z - g) < 2e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_median_not_worse_than_vertices(seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((4, 2))
    w = rng.uniform(0.1, 2, 4)
    z = weighted_geometric_median(pts, w)
    obj = lambda q: float(sum(wi * np.linalg.norm(q - p) for p, wi in zip(pts, w)))
    assert obj(z) <= min(obj(p) for p in pts) + 1e-9


def test_csv_roundtrip(tmp_path):
    ds = gen_noisy(equilateral(), 5, 0.1, seed=2)
    save_clean_csv(tmp_path / "c.csv", ds.clean)
    save_noisy_csv(tmp_path / "n.csv", ds)
    clean = load_clean_csv(tmp_path / "c.csv")
    back = load_noisy_csv(tmp_path / "n.csv", clean)
    assert np.array_equal(clean.points, ds.clean.points)
    assert np.array_equal(back.samples, ds.samples)
    assert isinstance(back, NoisyDataset)
