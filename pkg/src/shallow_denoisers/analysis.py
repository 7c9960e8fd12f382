"""Numerical checks of denoiser behaviour: MSE under a prior, contractivity,
the subspace property, and alignment of trained units with the data geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .baselines import EmmseDenoiser
from .closed_form import PiecewiseLinear1D
from .errors import NoSignificantUnits, UnsupportedDensity
from .gaussian_moments import ncdf, npdf, nsf
from .geometry import (
    AcuteSimplex,
    CleanDataset,
    Colinear,
    NoisyDataset,
    ObtuseSimplex,
    Rays,
    face_feet,
)
from .network import ShallowNet, extract_units
from .rng import MONTE_CARLO, stream
from .textio import fmt

# --- priors -----------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstantPrior:
    """Univariate density constant on each [edges[i], edges[i+1]); weights need not be normalized."""

    edges: tuple
    weights: tuple

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if e.ndim != 1 or len(e) != len(w) + 1 or np.any(np.diff(e) <= 0) or np.any(w < 0):
            raise ValueError("need increasing edges and one non-negative weight per piece")
        mass = w * np.diff(e)
        object.__setattr__(self, "edges", tuple(e))
        object.__setattr__(self, "weights", tuple(w / mass.sum()))

    @property
    def d(self):
        return 1

    def pieces(self):
        e = self.edges
        return [(e[i], e[i + 1], self.weights[i]) for i in range(len(self.weights))]


def uniform_prior(lo, hi):
    return PiecewiseConstantPrior((lo, hi), (1.0,))


@dataclass(frozen=True)
class DiscretePrior:
    """Uniform over the points of a clean dataset."""

    clean: CleanDataset

    @property
    def d(self):
        return self.clean.d


def _kinks(f):
    if isinstance(f, PiecewiseLinear1D):
        return list(f.knots)
    if isinstance(f, EmmseDenoiser):
        x = np.sort(f.clean.points[:, 0])
        return list(0.5 * (x[1:] + x[:-1]))
    if isinstance(f, ShallowNet) and f.d == 1:
        w, b = f.w[:, 0], f.b
        return list(-b[w != 0] / w[w != 0])
    return list(getattr(f, "kinks", []))


def _scalar_fn(f):
    return lambda y: float(np.asarray(f(np.array([y]))).ravel()[0])


def _panels(lo, hi, cuts):
    pts = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
    return list(zip(pts[:-1], pts[1:]))


def _quad(g, panels, tol):
    each = tol / max(1, len(panels))
    total = 0.0
    for a, b in panels:
        val, _ = integrate.quad(g, a, b, epsabs=each, epsrel=1e-13, limit=400)
        total += val
    return total


def _window(lo, hi, z, sigma):
    """Integrals of 1, u, u^2 against phi over [(lo - z)/sigma, (hi - z)/sigma]."""
    a, b = (lo - z) / sigma, (hi - z) / sigma
    m0 = float(nsf(a) - nsf(b)) if a > 0 else float(ncdf(b) - ncdf(a))
    pa, pb = float(npdf(a)), float(npdf(b))
    return m0, pa - pb, m0 + a * pa - b * pb


def mse_vs_prior(f, prior, sigma: float, method: str = "quadrature", S: int = 100_000,
                 seed: int = 0, tol: float = 1e-8, gh_order: int = 64):
    """E |f(x + sigma eps) - x|^2 for x from ``prior``.

    ``quadrature`` integrates over y = x + sigma eps with adaptive quadrature,
    doing the inner Gaussian integral over each prior piece in closed form; its
    panels break at the kinks of f. ``hermite`` uses Gauss-Hermite in the noise
    and Gauss-Legendre panels over the prior. ``mc`` returns a Monte-Carlo mean
    and works in any dimension; the others return ``(value, 0.0)`` and are 1-D only.
    """
    if method == "mc":
        return _mse_mc(f, prior, sigma, S, seed)
    if prior.d != 1:
        raise UnsupportedDensity(f"{method} integration supports 1-D priors only")
    if method == "hermite":
        return _mse_hermite(f, prior, sigma, gh_order), 0.0
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    fs = _scalar_fn(f)
    kinks = _kinks(f)
    if isinstance(prior, DiscretePrior):
        xs = prior.clean.points[:, 0]
        if sigma == 0:
            return float(np.mean([(fs(x) - x) ** 2 for x in xs])), 0.0
        total = 0.0
        for x in xs:
            def g(y, x=x):
                return (fs(y) - x) ** 2 * npdf((y - x) / sigma) / sigma
            total += _quad(g, _panels(x - 12 * sigma, x + 12 * sigma, kinks), tol / len(xs))
        return total / len(xs), 0.0
    pieces = prior.pieces()
    if sigma == 0:
        return sum(_quad(lambda x: w * (fs(x) - x) ** 2, _panels(lo, hi, kinks), tol / len(pieces))
                   for lo, hi, w in pieces), 0.0

    def g(y):
        r = fs(y) - y
        val = 0.0
        for lo, hi, w in pieces:
            m0, m1, m2 = _window(lo, hi, y, sigma)
            val += w * (r * r * m0 - 2 * sigma * r * m1 + sigma * sigma * m2)
        return val

    lo, hi = prior.edges[0] - 12 * sigma, prior.edges[-1] + 12 * sigma
    return _quad(g, _panels(lo, hi, kinks + list(prior.edges)), tol), 0.0


def _mse_hermite(f, prior, sigma, order):
    t, wt = np.polynomial.hermite_e.hermegauss(order)
    wt = wt / wt.sum()
    if isinstance(prior, DiscretePrior):
        xs = prior.clean.points[:, 0]
        vals = [(np.asarray(f(x + sigma * t)).ravel() - x) ** 2 @ wt for x in xs]
        return float(np.mean(vals))
    gx, gw = np.polynomial.legendre.leggauss(20)
    total = 0.0
    for lo, hi, w in prior.pieces():
        cuts = np.linspace(lo, hi, 65)
        for a, b in zip(cuts[:-1], cuts[1:]):
            xs = 0.5 * (a + b) + 0.5 * (b - a) * gx
            y = xs[:, None] + sigma * t[None, :]
            err = (np.asarray(f(y)).reshape(y.shape) - xs[:, None]) ** 2 @ wt
            total += w * 0.5 * (b - a) * (gw @ err)
    return float(total)


def _mse_mc(f, prior, sigma, S, seed):
    g = stream(seed, MONTE_CARLO, 7)
    if isinstance(prior, DiscretePrior):
        X = prior.clean.points[g.integers(0, prior.clean.N, S)]
    else:
        pieces = prior.pieces()
        mass = np.array([w * (hi - lo) for lo, hi, w in pieces])
        k = g.choice(len(pieces), S, p=mass / mass.sum())
        lo = np.array([p[0] for p in pieces])[k]
        hi = np.array([p[1] for p in pieces])[k]
        X = (lo + (hi - lo) * g.random(S))[:, None]
    Y = X + sigma * g.standard_normal(X.shape)
    out = np.asarray(f(Y[:, 0] if X.shape[1] == 1 else Y), dtype=float).reshape(X.shape)
    err = ((out - X) ** 2).sum(1)
    return float(err.mean()), float(err.std(ddof=1) / math.sqrt(S))


# --- contractivity ----------------------------------------------------------------


@dataclass(frozen=True)
class ContractionReport:
    alpha_observed: float
    worst_query: float
    excluded_fixed_points: tuple

    @property
    def passed(self):
        return self.alpha_observed < 1


def fixed_points_1d(x, eps_min, eps_max):
    """The fixed points of the univariate min-cost denoiser between neighbouring clusters."""
    order = np.argsort(x, kind="stable")
    x, lo, hi = (np.asarray(v, dtype=float)[order] for v in (x, eps_min, eps_max))
    return tuple((x[1:] * hi[:-1] - x[:-1] * lo[1:]) / (hi[:-1] - lo[1:]))


def contraction_ratios(f, clean_points, queries):
    """min_i |f(y) - f(x_i)| / |y - x_i| per query (0 when f(y) = f(x_i))."""
    x = np.asarray(clean_points, dtype=float).ravel()
    y = np.asarray(queries, dtype=float).ravel()
    fy = np.asarray(f(y), dtype=float).ravel()
    fx = np.asarray(f(x), dtype=float).ravel()
    num = np.abs(fy[:, None] - fx[None, :])
    den = np.abs(y[:, None] - x[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num == 0, 0.0, num / den)
    return r.min(1)


def contractivity_1d(f, ds: NoisyDataset, queries=None, delta=None, n_queries=1000):
    """Largest observed contraction ratio on a query grid, fixed-point bands excluded.

    This is a lower bound on the best constant alpha: only finitely many
    queries are examined.
    """
    x = ds.clean.points[:, 0]
    fixed = fixed_points_1d(x, ds.eps_min, ds.eps_max)
    scale = ds.clean.scale
    delta = 1e-3 * scale if delta is None else delta
    if queries is None:
        lo = x.min() + ds.eps_min.min() - 0.5 * scale
        hi = x.max() + ds.eps_max.max() + 0.5 * scale
        queries = np.linspace(lo, hi, n_queries)
    q = np.asarray(queries, dtype=float).ravel()
    keep = np.ones(q.size, dtype=bool)
    for p in fixed:
        keep &= np.abs(q - p) > delta
    q = q[keep]
    if q.size == 0:
        return ContractionReport(0.0, float("nan"), fixed)
    r = contraction_ratios(f, x, q)
    k = int(np.argmax(r))
    return ContractionReport(float(r[k]), float(q[k]), fixed)


# --- subspace property --------------------------------------------------------------


def subspace_property_check(f, basis, queries) -> float:
    """max_y |f(y) - P f(P y)| with P the orthogonal projector onto span(basis)."""
    B = np.asarray(basis, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    P = B @ B.T
    Y = np.atleast_2d(np.asarray(queries, dtype=float))
    lhs = np.asarray(f(Y), dtype=float)
    rhs = np.asarray(f(Y @ P.T), dtype=float) @ P.T
    return float(np.linalg.norm(lhs - rhs, axis=1).max())


# --- alignment ------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitAlignment:
    index: int
    normal: np.ndarray
    reference: int
    abs_cos: float
    strength: float


@dataclass(frozen=True)
class AlignmentReport:
    label: str
    references: np.ndarray
    units: tuple = field(default_factory=tuple)

    @property
    def min_abs_cos(self):
        return min(u.abs_cos for u in self.units)


def reference_directions(clean: CleanDataset, tag):
    """Unit directions the theory predicts for unit boundaries, with a label."""
    X = clean.points
    if isinstance(tag, ObtuseSimplex):
        apex = X[tag.apex]
        dirs = [X[n] - apex for n in range(clean.N) if n != tag.apex]
        label = "edges"
    elif isinstance(tag, AcuteSimplex):
        dirs = list(X - face_feet(X))
        label = "face-normals"
    elif isinstance(tag, Rays):
        dirs = list(tag.directions)
        label = "rays"
    elif isinstance(tag, Colinear):
        dirs = [tag.u]
        label = "line"
    else:
        raise ValueError(f"no reference directions for {type(tag).__name__}")
    D = np.array(dirs, dtype=float)
    return D / np.linalg.norm(D, axis=1, keepdims=True), label


def alignment_report(net: ShallowNet, clean: CleanDataset, tag, significance: float = 0.05):
    """Best |cos| between each significant unit's boundary normal and the reference set."""
    refs, label = reference_directions(clean, tag)
    units = extract_units(net, significance)
    if not units:
        raise NoSignificantUnits(f"no unit carries {significance:.0%} of the total strength")
    rows = []
    for u in units:
        c = np.abs(refs @ u.normal)
        j = int(np.argmax(c))
        rows.append(UnitAlignment(u.index, u.normal, j, float(min(1.0, c[j])), u.strength))
    return AlignmentReport(label, refs, tuple(rows))


# --- report files -----------------------------------------------------------------------


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) if isinstance(v, float)
                              else str(v) for v in row) + "\n")


def write_alignment_csv(path, report: AlignmentReport):
    write_csv(path, ["unit", "normal_x", "normal_y", "reference", "abs_cos", "strength"],
              [(u.index, *[float(v) for v in u.normal[:2]], u.reference, u.abs_cos, u.strength)
               for u in report.units])


def svg_overlay(clean: CleanDataset, rho=None, net: ShallowNet | None = None, significance=0.05,
                edges=(), predicted=(), size=480, margin=0.6, title=""):
    """Self-contained SVG of 2-D data: points, balls, unit boundary lines and edges.

    ``edges`` are pairs of point indices drawn in grey; ``predicted`` are
    ``(normal, offset)`` boundary lines drawn dashed.
    """
    if clean.d != 2:
        raise ValueError("overlay is 2-D only")
    X = clean.points
    pad = (rho or 0) + margin
    lo = X.min(0) - pad
    hi = X.max(0) + pad
    span = float(max(hi - lo))
    s = size / span

    def px(p):
        return (p[0] - lo[0]) * s, size - (p[1] - lo[1]) * s

    def line(n, off, style):
        # clip {y : n.y = off} to the view box by sampling along its direction
        n = np.asarray(n, dtype=float)
        base = n * off
        t = np.array([-n[1], n[0]])
        a, b = px(base - 2 * span * t), px(base + 2 * span * t)
        return (f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                f'{style}/>')

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="8" y="18" font-family="sans-serif" font-size="13">{title}</text>')
    for i, j in edges:
        a, b = px(X[i]), px(X[j])
        out.append(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                   'stroke="#999" stroke-width="1.5"/>')
    for n, off in predicted:
        out.append(line(n, off, 'stroke="#2a7" stroke-width="1.5" stroke-dasharray="6,4"'))
    if net is not None:
        for u in extract_units(net, significance):
            out.append(line(u.normal, u.offset, 'stroke="#c33" stroke-width="1.2"'))
    for p in X:
        c = px(p)
        if rho:
            out.append(f'<circle cx="{c[0]:.2f}" cy="{c[1]:.2f}" r="{rho * s:.2f}" '
                       'fill="#36c" fill-opacity="0.15" stroke="#36c"/>')
        out.append(f'<circle cx="{c[0]:.2f}" cy="{c[1]:.2f}" r="3.5" fill="#036"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
