"""Exact minimum-representation-cost denoisers for structured clean data.

Every multivariate construction is a sum of rank-one piecewise-linear
interpolators ``v * phi(u^T (y - z))`` plus a constant offset; the univariate
one is a single piecewise-linear function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    A1Violated,
    A2Violated,
    AssumptionViolated,
    BallsOverlap,
    DimensionMismatch,
    NotAcute,
    NotObtuse,
    NotRays,
)
from .geometry import (
    ANGLE_TOL,
    AcuteSimplex,
    CleanDataset,
    Colinear,
    Equilateral,
    NoisyDataset,
    ObtuseSimplex,
    Rays,
    check_well_separated,
    classify_simplex,
    face_feet,
    fit_subspace,
    weighted_geometric_median,
)
from .textio import dump_json

KNOT_MERGE = 1e-12


@dataclass(frozen=True)
class PiecewiseLinear1D:
    """Continuous piecewise-linear function on the real line.

    Linear between ``knots``; affine beyond the end knots with the given slopes.
    Knots closer than 1e-12 (relative to their scale) are merged.
    """

    knots: np.ndarray
    values: np.ndarray
    left_slope: float = 0.0
    right_slope: float = 0.0

    def __post_init__(self):
        t = np.array(self.knots, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if t.shape != v.shape or t.size == 0:
            raise ValueError("knots and values must be non-empty and of equal length")
        scale = max(1.0, np.abs(t).max())
        keep = np.ones(t.size, dtype=bool)
        keep[1:] = np.diff(t) > KNOT_MERGE * scale
        if np.any(np.diff(t) < -KNOT_MERGE * scale):
            raise ValueError("knots must be increasing")
        t, v = t[keep], v[keep]
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "left_slope", float(self.left_slope))
        object.__setattr__(self, "right_slope", float(self.right_slope))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.knots, self.values)
        lo = t < self.knots[0]
        hi = t > self.knots[-1]
        if self.left_slope:
            out = np.where(lo, self.values[0] + self.left_slope * (t - self.knots[0]), out)
        if self.right_slope:
            out = np.where(hi, self.values[-1] + self.right_slope * (t - self.knots[-1]), out)
        return out

    def slopes(self):
        """Slopes of the K + 1 linear pieces, left tail first."""
        inner = np.diff(self.values) / np.diff(self.knots)
        return np.concatenate([[self.left_slope], inner, [self.right_slope]])

    def slope_changes(self):
        return np.diff(self.slopes())

    def cost(self):
        """Univariate representation cost: max(int |f''|, |f'(-inf) + f'(+inf)|)."""
        tv = float(np.abs(self.slope_changes()).sum())
        return max(tv, abs(self.left_slope + self.right_slope))

    def is_monotone(self):
        return bool(np.all(self.slopes() >= 0))


def ramp(a, b, s):
    """The profile s * ([t - a]_+ - [t - b]_+): 0 below a, s (b - a) above b."""
    if not b > a:
        raise ValueError(f"ramp needs b > a, got a={a}, b={b}")
    return PiecewiseLinear1D([a, b], [0.0, s * (b - a)])


def univariate_minimizer(x, eps_min, eps_max):
    """Min-cost interpolant of clean points x_n given their noise extremes.

    Constant x_n on [x_n + eps_min_n, x_n + eps_max_n], linear between
    neighbouring intervals, constant x_1 / x_N beyond the ends.
    """
    x = np.asarray(x, dtype=float)
    eps_min = np.asarray(eps_min, dtype=float)
    eps_max = np.asarray(eps_max, dtype=float)
    order = np.argsort(x, kind="stable")
    x, eps_min, eps_max = x[order], eps_min[order], eps_max[order]
    for n in range(len(x)):
        if not (eps_max[n] > 0 and eps_min[n] < 0):
            raise AssumptionViolated((int(order[n]), int(order[n])),
                                     f"noise interval of point {int(order[n])} does not straddle it")
    for n in range(len(x) - 1):
        if not x[n] + eps_max[n] < x[n + 1] + eps_min[n + 1]:
            raise AssumptionViolated((int(order[n]), int(order[n + 1])))
    knots = np.column_stack([x + eps_min, x + eps_max]).ravel()
    values = np.repeat(x, 2)
    return PiecewiseLinear1D(knots, values)


def build_1d(ds: NoisyDataset) -> PiecewiseLinear1D:
    report = check_well_separated(ds)
    if not report.ok:
        pair = report.failing_pairs[0] if report.failing_pairs else (report.bad_extremes[0],) * 2
        raise AssumptionViolated(pair)
    return univariate_minimizer(ds.clean.points[:, 0], ds.eps_min, ds.eps_max)


# --- multivariate ------------------------------------------------------------


@dataclass(frozen=True)
class RankOneUnit:
    """y -> v * profile(u^T (y - z)) with unit vectors u (in) and v (out)."""

    u: np.ndarray
    v: np.ndarray
    profile: PiecewiseLinear1D
    z: np.ndarray

    def __post_init__(self):
        for name in ("u", "v", "z"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("u", "v"):
            if abs(np.linalg.norm(getattr(self, name)) - 1.0) > 1e-12:
                raise ValueError(f"{name} must have unit norm")
        if not (self.u.shape == self.v.shape == self.z.shape):
            raise DimensionMismatch("u, v, z must share a dimension")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.profile((y - self.z) @ self.u)[..., None] * self.v


@dataclass(frozen=True)
class RankOneSumDenoiser:
    offset: np.ndarray
    units: tuple = ()
    conjectural: bool = False
    kind: str = ""

    def __post_init__(self):
        off = np.array(self.offset, dtype=float).ravel()
        off.setflags(write=False)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "units", tuple(self.units))
        for unit in self.units:
            if unit.u.shape != off.shape:
                raise DimensionMismatch("unit dimension differs from offset dimension")

    @property
    def d(self):
        return self.offset.shape[0]

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.d:
            raise DimensionMismatch(f"query has dimension {y.shape[-1]}, expected {self.d}")
        out = np.broadcast_to(self.offset, y.shape).copy()
        for unit in self.units:
            out += unit(y)
        return out

    def lipschitz_bound(self):
        return float(sum(np.abs(u.profile.slopes()).max() for u in self.units))


def evaluate(f, y):
    """Evaluate a closed-form denoiser (univariate or rank-one sum) at y."""
    if isinstance(f, PiecewiseLinear1D):
        y = np.asarray(y, dtype=float)
        if y.ndim and y.shape[-1] != 1 and y.ndim > 1:
            raise DimensionMismatch("univariate function takes scalar inputs")
        return f(y)
    return f(y)


def representation_cost(f) -> float:
    if isinstance(f, PiecewiseLinear1D):
        return f.cost()
    return float(sum(unit.profile.cost() for unit in f.units))


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _segment_unit(start, end, rho, where):
    diff = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
    length = float(np.linalg.norm(diff))
    if not length > 2 * rho:
        raise BallsOverlap(where, f"balls of radius {rho} at distance {length:.6g} overlap ({where})")
    u = diff / length
    return RankOneUnit(u, u, ramp(rho, length - rho, length / (length - 2 * rho)), start)


def rho_from_samples(ds: NoisyDataset) -> float:
    """Data-driven ball radius: largest observed noise norm."""
    return ds.ball_radius()


def build_colinear(ds, rho: float, tag: Colinear | None = None) -> RankOneSumDenoiser:
    """Min-cost norm-ball interpolant for clean points x_n = c_n u."""
    clean = ds.clean if isinstance(ds, NoisyDataset) else ds
    if tag is None:
        sub = fit_subspace(clean)
        if sub.rank != 1:
            raise ValueError(f"points span a rank-{sub.rank} subspace, not a line")
        u = sub.basis[:, 0]
    else:
        u = tag.u
    u = _unit(u)
    c = clean.points @ u
    if np.max(np.linalg.norm(clean.points - c[:, None] * u, axis=1), initial=0) > 1e-8 * clean.scale:
        raise ValueError("points are not multiples of u")
    order = np.argsort(c, kind="stable")
    gaps = np.diff(c[order])
    if rho <= 0:
        raise ValueError("rho must be positive")
    bad = np.flatnonzero(gaps <= 2 * rho)
    if bad.size:
        raise BallsOverlap(int(order[bad[0]]))
    profile = univariate_minimizer(c, -rho * np.ones_like(c), rho * np.ones_like(c))
    unit = RankOneUnit(u, u, profile, np.zeros_like(u))
    return RankOneSumDenoiser(np.zeros_like(u), (unit,), kind="colinear")


def build_rays(tag: Rays, rho: float) -> RankOneSumDenoiser:
    """Sum of one f_1D-shaped profile per ray, origin sample included."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    units = []
    for l, (u, c) in enumerate(zip(tag.directions, tag.coords)):
        pos = np.concatenate([[0.0], c])
        gaps = np.diff(pos)
        bad = np.flatnonzero(gaps <= 2 * rho)
        if bad.size:
            raise BallsOverlap((l, int(bad[0])))
        profile = univariate_minimizer(pos, -rho * np.ones_like(pos), rho * np.ones_like(pos))
        units.append(RankOneUnit(u, u, profile, tag.origin))
    return RankOneSumDenoiser(tag.origin, tuple(units), kind="rays")


def build_obtuse_simplex(ds: CleanDataset, rho: float, tag: ObtuseSimplex | None = None,
                         tol: float = ANGLE_TOL) -> RankOneSumDenoiser:
    tag = classify_simplex(ds, tol) if tag is None else tag
    if not isinstance(tag, ObtuseSimplex):
        raise NotObtuse(f"simplex classified as {type(tag).__name__}")
    apex = ds.points[tag.apex]
    units = [
        _segment_unit(apex, p, rho, n)
        for n, p in enumerate(ds.points) if n != tag.apex
    ]
    return RankOneSumDenoiser(apex, tuple(units), kind="obtuse_simplex")


def build_acute_simplex(ds: CleanDataset, rho: float, tol: float = ANGLE_TOL,
                        median_tol: float = 1e-12, max_iter: int = 100_000) -> RankOneSumDenoiser:
    """Face-normal construction for a simplex whose vertices are all acute.

    The result carries ``conjectural=True`` unless the simplex is an
    equilateral triangle, the only case with a known optimality proof.
    """
    tag = classify_simplex(ds, tol)
    if not isinstance(tag, AcuteSimplex):
        raise NotAcute(f"simplex classified as {type(tag).__name__}")
    X = ds.points
    Z = face_feet(X)
    heights = np.linalg.norm(X - Z, axis=1)
    for n, h in enumerate(heights):
        if not h > 2 * rho:
            raise BallsOverlap(n, f"rho={rho} too large for height {h:.6g} at vertex {n}")
    center = weighted_geometric_median(X, 1.0 / heights, tol=median_tol, max_iter=max_iter)
    units = []
    for n in range(len(X)):
        u = (X[n] - Z[n]) / heights[n]
        reach = float(np.linalg.norm(X[n] - center))
        if reach == 0.0:
            continue
        v = (X[n] - center) / reach
        a, b = rho, heights[n] - rho
        units.append(RankOneUnit(u, v, ramp(a, b, reach / (b - a)), Z[n]))
    proven = isinstance(tag, Equilateral) and len(X) == 3
    return RankOneSumDenoiser(center, tuple(units), conjectural=not proven, kind="acute_simplex")


def _chains_from_directions(rel, idx):
    """Group points whose directions from the origin make acute angles (single linkage)."""
    dirs = rel[idx] / np.linalg.norm(rel[idx], axis=1, keepdims=True)
    G = dirs @ dirs.T
    label = list(range(len(idx)))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            if G[i, j] > 0:
                label[find(i)] = find(j)
    groups = {}
    for i in range(len(idx)):
        groups.setdefault(find(i), []).append(idx[i])
    norms = np.linalg.norm(rel, axis=1)
    chains = [sorted(g, key=lambda k: norms[k]) for g in groups.values()]
    chains.sort(key=lambda ch: ch[0])
    return tuple(tuple(int(k) for k in ch) for ch in chains)


def check_perturbed_rays(ds: CleanDataset, rho: float, tol: float = ANGLE_TOL, origin=None,
                         chains=None):
    """Split points into origin + chains and verify the obtuseness (A1) and
    halfspace-nesting (A2) conditions. Returns ``(origin_index, chains)``."""
    X = ds.points
    origin = np.zeros(ds.d) if origin is None else np.asarray(origin, dtype=float)
    rel = X - origin
    norms = np.linalg.norm(rel, axis=1)
    at_origin = np.flatnonzero(norms <= tol * ds.scale)
    if len(at_origin) != 1:
        raise NotRays(f"expected exactly one sample at the origin, found {len(at_origin)}")
    o_idx = int(at_origin[0])
    rest = [i for i in range(ds.N) if i != o_idx]
    if chains is None:
        chains = _chains_from_directions(rel, rest)
    diffs = []
    for ch in chains:
        prev = np.zeros(ds.d)
        row = []
        for k in ch:
            row.append(rel[k] - prev)
            prev = rel[k]
        diffs.append(row)
    for l in range(len(chains)):
        for k in range(l + 1, len(chains)):
            for n, dl in enumerate(diffs[l]):
                for m, dk in enumerate(diffs[k]):
                    if not _unit(dl) @ _unit(dk) < -tol:
                        raise A1Violated(((l, n), (k, m)))
    for l, ch in enumerate(chains):
        for n, k in enumerate(ch):
            r = norms[k]
            if r <= rho:
                continue
            cap = np.arccos(rho / r)
            for later in ch[n + 1:]:
                q = rel[later] - rel[k]
                ang = np.arccos(np.clip(_unit(q) @ (rel[k] / r), -1.0, 1.0))
                if ang + cap > np.pi / 2 + tol:
                    raise A2Violated((l, n))
    return o_idx, tuple(tuple(ch) for ch in chains)


def build_perturbed_rays(ds: CleanDataset, tol: float, rho: float, origin=None,
                         chains=None) -> RankOneSumDenoiser:
    """Units aligned with the segments joining successive points along each chain."""
    o_idx, chains = check_perturbed_rays(ds, rho, tol, origin, chains)
    X = ds.points
    units = []
    for l, ch in enumerate(chains):
        prev = X[o_idx]
        for n, k in enumerate(ch):
            units.append(_segment_unit(prev, X[k], rho, (l, n)))
            prev = X[k]
    return RankOneSumDenoiser(X[o_idx], tuple(units), kind="perturbed_rays")


# --- serialization -----------------------------------------------------------


def _profile_fields(p: PiecewiseLinear1D):
    return {"knots": p.knots, "values": p.values,
            "left_slope": p.left_slope, "right_slope": p.right_slope}


def _profile_from(d):
    return PiecewiseLinear1D(d["knots"], d["values"], d.get("left_slope", 0.0),
                             d.get("right_slope", 0.0))


def dumps(f) -> str:
    """Serialize a closed-form denoiser to JSON text with 17 significant digits."""
    if isinstance(f, PiecewiseLinear1D):
        return dump_json({"type": "piecewise_linear_1d", **_profile_fields(f)})
    units = [{"u": u.u, "v": u.v, "z": u.z, **_profile_fields(u.profile)} for u in f.units]
    return dump_json({"type": "rank_one_sum", "kind": f.kind, "conjectural": f.conjectural,
                  "offset": f.offset, "units": units})


def loads(text: str):
    d = json.loads(text)
    if d["type"] == "piecewise_linear_1d":
        return _profile_from(d)
    if d["type"] != "rank_one_sum":
        raise ValueError(f"unknown denoiser type {d['type']!r}")
    units = tuple(RankOneUnit(u["u"], u["v"], _profile_from(u), u["z"]) for u in d["units"])
    return RankOneSumDenoiser(d["offset"], units, bool(d.get("conjectural", False)),
                              d.get("kind", ""))
