"""Datasets, geometric predicates and the constructions that decide which
closed-form denoiser applies to a given set of clean points."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSimplex,
    DimensionMismatch,
    EmptyDataset,
    NoConvergence,
    NotRays,
    RaysNotObtuse,
)

ANGLE_TOL = 1e-9
SUBSPACE_TOL = 1e-8


def _frozen(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CleanDataset:
    """N distinct clean points in R^d, stored as an (N, d) array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise DimensionMismatch(f"points must be (N, d), got shape {pts.shape}")
        if pts.shape[0] and pts.shape[1] < 1:
            raise DimensionMismatch("dimension must be at least 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if pts.shape[0] > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.sqrt((diff**2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 0:
                raise ValueError("clean points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def scale(self):
        return float(max(1.0, np.abs(self.points).max(initial=0.0)))


@dataclass(frozen=True)
class NoisyDataset:
    """M noisy replicates per clean point: ``samples`` has shape (N, M, d)."""

    clean: CleanDataset
    samples: np.ndarray
    sigma: float = float("nan")

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim == 2 and self.clean.d == 1:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[0] != self.clean.N or s.shape[2] != self.clean.d:
            raise DimensionMismatch(
                f"samples shape {s.shape} does not match clean data {self.clean.points.shape}"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def M(self):
        return self.samples.shape[1]

    @property
    def noise(self):
        return self.samples - self.clean.points[:, None, :]

    @property
    def eps_max(self):
        self._require_1d()
        return self.noise[:, :, 0].max(axis=1)

    @property
    def eps_min(self):
        self._require_1d()
        return self.noise[:, :, 0].min(axis=1)

    def ball_radius(self):
        """Largest observed noise norm: the data-driven radius for norm-ball builders."""
        return float(np.sqrt((self.noise**2).sum(-1)).max())

    def pairs(self):
        """Flatten to (N*M, d) inputs and matching clean targets."""
        N, M, d = self.samples.shape
        y = self.samples.reshape(N * M, d)
        x = np.repeat(self.clean.points, M, axis=0)
        return y, x

    def _require_1d(self):
        if self.clean.d != 1:
            raise DimensionMismatch("noise extremes are defined for univariate data only")


# --- geometry tags -----------------------------------------------------------


@dataclass(frozen=True)
class GeometryTag:
    pass


def _check_unit(vectors):
    v = np.atleast_2d(vectors)
    if v.size and np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > 1e-12:
        raise ValueError("direction vectors must have unit norm")


@dataclass(frozen=True)
class Univariate(GeometryTag):
    pass


@dataclass(frozen=True)
class Colinear(GeometryTag):
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u, 1))
        _check_unit(self.u)


@dataclass(frozen=True)
class Subspace(GeometryTag):
    basis: np.ndarray  # (d, r), orthonormal columns

    @property
    def projector(self):
        return self.basis @ self.basis.T

    @property
    def rank(self):
        return self.basis.shape[1]


@dataclass(frozen=True)
class Rays(GeometryTag):
    origin: np.ndarray
    directions: np.ndarray  # (L, d)
    indices: tuple  # per ray, dataset indices sorted by distance from origin
    coords: tuple  # per ray, the increasing positive c_n along u_l
    origin_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin, 1))
        object.__setattr__(self, "directions", _frozen(self.directions, 2))
        object.__setattr__(self, "coords", tuple(_frozen(c, 1) for c in self.coords))
        _check_unit(self.directions)

    @property
    def L(self):
        return self.directions.shape[0]


@dataclass(frozen=True)
class ObtuseSimplex(GeometryTag):
    apex: int


@dataclass(frozen=True)
class AcuteSimplex(GeometryTag):
    pass


@dataclass(frozen=True)
class Equilateral(AcuteSimplex):
    pass


@dataclass(frozen=True)
class PerturbedRays(GeometryTag):
    origin: np.ndarray
    chains: tuple  # per chain, dataset indices ordered outward from the origin


@dataclass(frozen=True)
class General(GeometryTag):
    pass


# --- univariate separation ---------------------------------------------------


@dataclass(frozen=True)
class SeparationReport:
    ok: bool
    min_gap: float
    failing_pairs: tuple = ()
    bad_extremes: tuple = ()
    order: np.ndarray = field(default=None, repr=False)

    def __bool__(self):
        return self.ok


def check_well_separated(ds: NoisyDataset) -> SeparationReport:
    """Test that the noise intervals [x_n + eps_min, x_n + eps_max] are disjoint
    and that every interval strictly contains its clean point."""
    if ds.clean.N == 0 or ds.M == 0:
        raise EmptyDataset("need at least one clean point and one noisy sample")
    if ds.clean.d != 1:
        raise DimensionMismatch("well-separation is a univariate criterion")
    x = ds.clean.points[:, 0]
    order = np.argsort(x, kind="stable")
    x = x[order]
    emax = ds.eps_max[order]
    emin = ds.eps_min[order]
    gaps = (x[1:] + emin[1:]) - (x[:-1] + emax[:-1])
    failing = tuple((int(order[i]), int(order[i + 1])) for i in np.flatnonzero(gaps <= 0))
    bad = tuple(int(order[i]) for i in np.flatnonzero((emax <= 0) | (emin >= 0)))
    min_gap = float(gaps.min()) if gaps.size else float("inf")
    return SeparationReport(not failing and not bad, min_gap, failing, bad, order)


# --- simplices ---------------------------------------------------------------


def affine_rank(points, tol=SUBSPACE_TOL):
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0
    diffs = pts[1:] - pts[0]
    s = np.linalg.svd(diffs, compute_uv=False)
    scale = max(1.0, np.abs(pts).max())
    return int((s > tol * scale).sum())


def _unit_rows(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def vertex_cosines(points, n):
    """Cosines of the angles at vertex n between edges to every other vertex."""
    pts = np.asarray(points, dtype=float)
    others = np.delete(pts, n, axis=0)
    e = _unit_rows(others - pts[n])
    return e @ e.T


def classify_simplex(ds: CleanDataset, tol: float = ANGLE_TOL) -> GeometryTag:
    """Sort a simplex into ObtuseSimplex / AcuteSimplex / Equilateral / General.

    Inner-product tests are made on normalized edge vectors with a dead band of
    width ``tol``; right angles and mixed vertices come back as General.
    """
    pts = ds.points
    N, d = pts.shape
    if N == 0:
        raise EmptyDataset("empty simplex")
    if N > d + 1 or affine_rank(pts, SUBSPACE_TOL) < N - 1:
        raise DegenerateSimplex(f"{N} points do not span an {N - 1}-simplex")
    if N <= 2:
        return ObtuseSimplex(0)
    acute = []
    for n in range(N):
        G = vertex_cosines(pts, n)
        off = G[~np.eye(N - 1, dtype=bool)]
        if np.all(off < -tol):
            return ObtuseSimplex(n)
        acute.append(np.all(off > tol))
    if not all(acute):
        return General()
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))[np.triu_indices(N, 1)]
    if dist.max() - dist.min() <= tol * max(ds.scale, dist.max()):
        return Equilateral()
    return AcuteSimplex()


def face_feet(points):
    """Orthogonal projection of each vertex onto the affine hull of the others."""
    pts = np.asarray(points, dtype=float)
    N = len(pts)
    feet = np.empty_like(pts)
    for n in range(N):
        others = np.delete(pts, n, axis=0)
        base = others[0]
        if len(others) == 1:
            feet[n] = base
            continue
        A = (others[1:] - base).T
        coef, *_ = np.linalg.lstsq(A, pts[n] - base, rcond=None)
        feet[n] = base + A @ coef
    return feet


# --- subspaces ---------------------------------------------------------------


def fit_subspace(ds: CleanDataset, tol: float = SUBSPACE_TOL) -> Subspace:
    """Smallest orthonormal basis B with ||(I - B B^T) x_n|| <= tol ||x_n|| for all n."""
    pts = ds.points
    if ds.N == 0:
        raise EmptyDataset("need at least one point")
    _, _, Vt = np.linalg.svd(pts, full_matrices=True)
    norms = np.linalg.norm(pts, axis=1)
    for r in range(0, ds.d + 1):
        B = Vt[:r].T
        resid = np.linalg.norm(pts - (pts @ B) @ B.T, axis=1)
        if np.all(resid <= tol * norms):
            return Subspace(_frozen(B, 2))
    return Subspace(_frozen(np.eye(ds.d), 2))  # pragma: no cover


# --- rays --------------------------------------------------------------------


def check_rays(ds: CleanDataset, tol: float = ANGLE_TOL, origin=None) -> Rays:
    """Decompose the points into an origin sample plus pairwise-obtuse rays.

    Directions are clustered greedily (angular threshold ``acos(1 - tol)``) in
    order of distance from the origin, then each cluster is refit by least
    squares and every member is checked to lie on its ray.
    """
    pts = ds.points
    origin = np.zeros(ds.d) if origin is None else np.asarray(origin, dtype=float)
    rel = pts - origin
    norms = np.linalg.norm(rel, axis=1)
    at_origin = np.flatnonzero(norms <= tol * ds.scale)
    if len(at_origin) != 1:
        raise NotRays(f"expected exactly one sample at the origin, found {len(at_origin)}")
    o_idx = int(at_origin[0])
    rest = [i for i in np.argsort(norms, kind="stable") if i != o_idx]
    clusters = []
    for i in rest:
        u = rel[i] / norms[i]
        for cl in clusters:
            if 1.0 - float(cl["u"] @ u) <= tol:
                cl["idx"].append(int(i))
                break
        else:
            clusters.append({"u": u, "idx": [int(i)]})

    directions, indices, coords = [], [], []
    for cl in clusters:
        P = rel[cl["idx"]]
        _, _, Vt = np.linalg.svd(P, full_matrices=False)
        u = Vt[0]
        if u @ P.sum(0) < 0:
            u = -u
        u = u / np.linalg.norm(u)
        c = P @ u
        off = np.linalg.norm(P - c[:, None] * u, axis=1)
        bad = np.flatnonzero(off > tol * np.linalg.norm(P, axis=1))
        if bad.size or np.any(c <= 0):
            raise NotRays(f"point {cl['idx'][int(bad[0]) if bad.size else 0]} is off its ray")
        order = np.argsort(c, kind="stable")
        directions.append(u)
        indices.append(tuple(cl["idx"][j] for j in order))
        coords.append(c[order])
    D = np.array(directions).reshape(len(directions), ds.d)
    G = D @ D.T
    for l in range(len(D)):
        for k in range(l + 1, len(D)):
            if not G[l, k] < -tol:
                raise RaysNotObtuse((l, k), G[l, k])
    return Rays(origin, D, tuple(indices), tuple(coords), o_idx)


# --- weighted geometric median ----------------------------------------------


def _median_objective(points, weights, x):
    return float((weights * np.linalg.norm(points - x, axis=1)).sum())


def _vertex_residual(points, weights, n):
    others = np.arange(len(points)) != n
    e = points[others] - points[n]
    R = (weights[others, None] * e / np.linalg.norm(e, axis=1)[:, None]).sum(0)
    return float(np.linalg.norm(R))


def _collinear_median(points, weights):
    base = points[0]
    _, _, Vt = np.linalg.svd(points - points.mean(0), full_matrices=False)
    u = Vt[0]
    t = (points - base) @ u
    order = np.argsort(t, kind="stable")
    t, w = t[order], weights[order]
    total = w.sum()
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, total / 2.0))
    if k < len(t) - 1 and np.isclose(cum[k], total / 2.0, rtol=1e-14, atol=0.0):
        # flat segment of minimizers: weighted midpoint of its two ends
        tm = (w[k] * t[k] + w[k + 1] * t[k + 1]) / (w[k] + w[k + 1])
    else:
        tm = t[k]
    return base + tm * u


def weighted_geometric_median(points, weights=None, tol=1e-10, max_iter=10_000, trace=None):
    """Minimize sum_n w_n ||x_n - x|| by Weiszfeld iteration.

    When an iterate lands on a data point the vertex optimality condition is
    tested and, if it fails, the iterate steps off along the descent direction
    (Vardi-Zhang step). Collinear inputs are solved exactly; a flat segment of
    minimizers returns the weighted midpoint of its end points. If ``trace`` is
    a list, the objective after every iterate is appended to it.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.ones(len(P)) if weights is None else np.asarray(weights, dtype=float)
    if len(P) == 0:
        raise EmptyDataset("no points")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if len(P) == 1:
        return P[0].copy()
    if affine_rank(P) <= 1:
        x = _collinear_median(P, w)
        if trace is not None:
            trace.append(_median_objective(P, w, x))
        return x

    scale = max(1.0, np.abs(P).max())
    for n in range(len(P)):
        if _vertex_residual(P, w, n) <= w[n] * (1 + 1e-12) + tol * w.sum():
            if trace is not None:
                trace.append(_median_objective(P, w, P[n]))
            return P[n].copy()
    x = (w[:, None] * P).sum(0) / w.sum()
    best, best_f = x, _median_objective(P, w, x)
    if trace is not None:
        trace.append(best_f)
    for _ in range(max_iter):
        diff = P - x
        dist = np.linalg.norm(diff, axis=1)
        near = int(np.argmin(dist))
        if dist[near] <= tol * scale:
            others = np.arange(len(P)) != near
            e = P[others] - P[near]
            de = np.linalg.norm(e, axis=1)
            R = (w[others, None] * e / de[:, None]).sum(0)
            nR = np.linalg.norm(R)
            if nR <= w[near]:
                x = P[near].copy()
                if trace is not None:
                    trace.append(_median_objective(P, w, x))
                return x
            step = (nR - w[near]) / (w[others] / de).sum()
            x_new = P[near] + step * R / nR
        else:
            grad = (w[:, None] * (x - P) / dist[:, None]).sum(0)
            if np.linalg.norm(grad) <= tol * w.sum():
                return x
            inv = w / dist
            x_new = (inv[:, None] * P).sum(0) / inv.sum()
        f_new = _median_objective(P, w, x_new)
        if trace is not None:
            trace.append(f_new)
        if f_new < best_f:
            best, best_f = x_new, f_new
        x = x_new
    raise NoConvergence(max_iter, best)


# --- CSV formats -------------------------------------------------------------


def _fmt(v):
    return format(float(v), ".17g")


def save_clean_csv(path, ds: CleanDataset):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n"] + [f"dim{j}" for j in range(ds.d)])
        for n, p in enumerate(ds.points):
            wr.writerow([n] + [_fmt(v) for v in p])


def load_clean_csv(path) -> CleanDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "n" or not all(h.startswith("dim") for h in header[1:]):
        raise ValueError(f"unexpected header {header}")
    body.sort(key=lambda r: int(r[0]))
    return CleanDataset(np.array([[float(v) for v in r[1:]] for r in body]))


def save_noisy_csv(path, ds: NoisyDataset):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "m"] + [f"dim{j}" for j in range(ds.clean.d)])
        for n in range(ds.clean.N):
            for m in range(ds.M):
                wr.writerow([n, m] + [_fmt(v) for v in ds.samples[n, m]])


def load_noisy_csv(path, clean: CleanDataset, sigma=float("nan")) -> NoisyDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    N = clean.N
    M = 1 + max(int(r[1]) for r in body)
    out = np.full((N, M, clean.d), np.nan)
    for r in body:
        out[int(r[0]), int(r[1])] = [float(v) for v in r[2:]]
    return NoisyDataset(clean, out, sigma)
