"""Experiment specs, synthetic geometries, property suites and figure runs.

Everything here is deterministic given a seed; the CLI is a thin layer on top.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import closed_form as cf
from .analysis import (
    alignment_report,
    contractivity_1d,
    mse_vs_prior,
    uniform_prior,
)
from .baselines import EmmseDenoiser, nn1
from .errors import ConfigParse, DenoiserError, NoSignificantUnits
from .gaussian_moments import marginalized_terms, mc_oracle, moments_bench
from .geometry import (
    AcuteSimplex,
    CleanDataset,
    NoisyDataset,
    ObtuseSimplex,
    check_rays,
    check_well_separated,
    classify_simplex,
)
from .network import (
    ShallowNet,
    balanced_cost,
    from_closed_form,
    init_net,
    loss_and_grad,
)
from .rng import DATA, stream
from .training import TrainConfig, coerce, config_from_kv, gen_noisy, gen_sphere, parse_kv, train

# --- named geometries ---------------------------------------------------------------


def equilateral_triangle():
    ang = np.deg2rad([90.0, 210.0, 330.0])
    return CleanDataset(np.column_stack([np.cos(ang), np.sin(ang)]))


def obtuse_triangle():
    return CleanDataset([[0.0, 0.0], [2.0, 0.0], [-1.0, 2.0]])


def line_points(n=4, lo=-5.0, hi=5.0):
    return CleanDataset(np.linspace(lo, hi, n)[:, None])


def parse_points(text: str):
    """'x,y; x,y; ...' -> array."""
    rows = [r.strip() for r in text.split(";") if r.strip()]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


GEOMETRIES = ("line", "obtuse", "equilateral", "points")


# --- experiment spec ----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    geometry: str = "line"
    n: int = 4
    lo: float = -5.0
    hi: float = 5.0
    points: str = ""
    K: int = 100
    use_skip: bool = True
    skip_init: str = "identity"
    data: str = "gaussian"  # "gaussian" | "sphere"
    rho: float = 0.0  # ball radius for multivariate closed forms; 0 = from the samples
    comparisons: tuple = ("closed_form", "emmse")
    outputs: tuple = ("csv",)
    grid_n: int = 0
    significance: float = 0.05
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.name:
            raise ValueError("name must be non-empty")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.data not in ("gaussian", "sphere"):
            raise ValueError(f"unknown data {self.data!r}")
        bad = set(self.comparisons) - {"closed_form", "emmse", "nn1", "marginalized"}
        if bad:
            raise ValueError(f"unknown comparisons {sorted(bad)}")
        bad = set(self.outputs) - {"csv", "svg"}
        if bad:
            raise ValueError(f"unknown outputs {sorted(bad)}")
        if len(set(self.outputs)) != len(self.outputs):
            raise ValueError("output targets must be distinct")
        if self.K < 1:
            raise ValueError("K must be positive")

    def clean(self) -> CleanDataset:
        if self.geometry == "line":
            return line_points(self.n, self.lo, self.hi)
        if self.geometry == "obtuse":
            return obtuse_triangle()
        if self.geometry == "equilateral":
            return equilateral_triangle()
        if not self.points:
            raise ValueError("geometry 'points' needs a points entry")
        return CleanDataset(parse_points(self.points))

    def scaled(self, budget_scale: float):
        it = max(1, int(round(self.train.iterations * budget_scale)))
        return replace(self, train=replace(self.train, iterations=it,
                                           trace_every=max(1, min(self.train.trace_every, it))))


_SPEC_TYPES = {"name": str, "geometry": str, "n": int, "lo": float, "hi": float, "points": str,
               "K": int, "use_skip": bool, "skip_init": str, "data": str, "rho": float,
               "grid_n": int, "significance": float}
_LIST_KEYS = ("comparisons", "outputs")


def spec_from_text(text: str, seed: int | None = None) -> ExperimentSpec:
    kv = parse_kv(text)
    own, rest = {}, {}
    for key, (value, line) in kv.items():
        if key in _SPEC_TYPES:
            own[key] = coerce(value, _SPEC_TYPES[key], line, key)
        elif key in _LIST_KEYS:
            own[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        else:
            rest[key] = (value, line)
    if "name" not in own:
        raise ConfigParse(0, "missing required key 'name'")
    cfg = config_from_kv(rest)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    try:
        return ExperimentSpec(train=cfg, **own)
    except ValueError as err:
        raise ConfigParse(0, str(err)) from None


# --- running a spec ------------------------------------------------------------------


@dataclass
class RunResult:
    spec: ExperimentSpec
    clean: CleanDataset
    noisy: NoisyDataset | None
    net: ShallowNet
    trace: list
    closed: object = None
    closed_error: str = ""
    summary: dict = field(default_factory=dict)
    alignment: object = None
    contraction: object = None
    seconds: float = 0.0


def _closed_form_for(clean, noisy, rho):
    if clean.d == 1:
        return cf.build_1d(noisy)
    tag = classify_simplex(clean)
    rho = rho or noisy.ball_radius()
    if isinstance(tag, ObtuseSimplex):
        return cf.build_obtuse_simplex(clean, rho, tag)
    if isinstance(tag, AcuteSimplex):
        return cf.build_acute_simplex(clean, rho)
    raise ValueError(f"no closed form for a {type(tag).__name__} configuration")


def run_spec(spec: ExperimentSpec, noisy: NoisyDataset | None = None) -> RunResult:
    """Train a net for ``spec`` and evaluate the requested comparisons."""
    t0 = time.perf_counter()
    clean = spec.clean()
    cfg = spec.train
    if noisy is None and (cfg.mode == "offline" or "closed_form" in spec.comparisons):
        if spec.data == "sphere":
            noisy = gen_sphere(clean, cfg.M, spec.rho, cfg.seed)
        else:
            noisy = gen_noisy(clean, cfg.M, cfg.sigma, cfg.seed)
    radius = float(np.linalg.norm(clean.points, axis=1).max())
    net0 = init_net(clean.d, spec.K, radius, cfg.seed, spec.use_skip, spec.skip_init)
    net, trace = train(net0, clean, cfg, noisy=noisy if cfg.mode == "offline" else None)
    res = RunResult(spec, clean, noisy, net, trace)
    s = res.summary
    s["final_loss"] = trace[-1].loss
    s["balanced_cost"] = balanced_cost(net)
    if noisy is not None:
        Y, X = noisy.pairs()
        s["train_mse"] = float(((net(Y) - X) ** 2).sum(-1).mean()) if clean.d > 1 else \
            float(((net(Y[:, 0]) - X[:, 0]) ** 2).mean())
        if clean.d == 1:
            sep = check_well_separated(noisy)
            s["well_separated"] = bool(sep.ok)
            s["min_gap"] = sep.min_gap
    if "closed_form" in spec.comparisons:
        try:
            res.closed = _closed_form_for(clean, noisy, spec.rho)
        except DenoiserError as err:
            res.closed_error = f"{type(err).__name__}: {err}"
            s["closed_form"] = "unavailable"
        else:
            s["closed_form_cost"] = cf.representation_cost(res.closed)
            s["conjectural"] = bool(getattr(res.closed, "conjectural", False))
            if clean.d == 1:
                res.contraction = contractivity_1d(res.closed, noisy)
                s["alpha_observed"] = res.contraction.alpha_observed
            else:
                tag = classify_simplex(clean)
                try:
                    res.alignment = alignment_report(net, clean, tag, spec.significance)
                except NoSignificantUnits:
                    s["alignment"] = "no significant units"
                else:
                    s["min_abs_cos"] = res.alignment.min_abs_cos
    if "marginalized" in spec.comparisons:
        m, se = mc_oracle(net, clean, cfg.sigma, 100_000, cfg.seed)
        s["mc_mse"], s["mc_se"] = m, se
        if not net.use_skip and not np.any(net.b):
            first, hq = marginalized_terms(net, clean, cfg.sigma)
            s["marginalized_loss"] = first + hq
    res.seconds = time.perf_counter() - t0
    return res


def function_grid(res: RunResult):
    """Query grid and the columns of denoiser outputs for the function-space CSV."""
    spec, clean = res.spec, res.clean
    cols = {}
    if clean.d == 1:
        n = spec.grid_n or 1801
        pad = 0.4 * (spec.hi - spec.lo) if spec.geometry == "line" else 1.0
        y = np.linspace(clean.points.min() - pad, clean.points.max() + pad, n)
        cols["net"] = res.net(y)
        if res.closed is not None:
            cols["closed_form"] = res.closed(y)
        if "emmse" in spec.comparisons and res.spec.train.sigma > 0:
            cols["emmse"] = EmmseDenoiser(clean, res.spec.train.sigma)(y)
        if "nn1" in spec.comparisons:
            cols["nn1"] = nn1(clean, y)
        return ["y"], y[:, None], cols
    n = spec.grid_n or 61
    lo = clean.points.min(0) - 1.0
    hi = clean.points.max(0) + 1.0
    axes = [np.linspace(lo[i], hi[i], n) for i in range(clean.d)]
    Y = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, clean.d)
    names = [f"y{i}" for i in range(clean.d)]

    def add(label, out):
        for i in range(clean.d):
            cols[f"{label}{i}"] = out[:, i]

    add("net", res.net(Y))
    if res.closed is not None:
        add("closed_form", res.closed(Y))
    if "emmse" in spec.comparisons and res.spec.train.sigma > 0:
        add("emmse", EmmseDenoiser(clean, res.spec.train.sigma)(Y))
    if "nn1" in spec.comparisons:
        add("nn1", nn1(clean, Y))
    return names, Y, cols


# --- builtin specs -------------------------------------------------------------------

FIG2_ITERS = 80_000


def fig1_specs(seed=0):
    common = dict(geometry="line", n=4, lo=-5.0, hi=5.0, K=200, comparisons=("closed_form", "emmse"))
    online = ExperimentSpec("fig1_online", train=TrainConfig(
        mode="online", iterations=100_000, batch_size=64, learning_rate=1e-3, lam=1e-5, sigma=1.5,
        seed=seed, trace_every=1000), **common)
    offline = ExperimentSpec("fig1_offline", train=TrainConfig(
        mode="offline", M=9000, iterations=20_000, learning_rate=1e-3, lam=1e-5, sigma=1.5,
        seed=seed, trace_every=100), **common)
    return online, offline


def fig2_spec(kind: str, seed=0):
    """Three-point training runs in the plane: obtuse, or equilateral triangle."""
    sigma = {"obtuse": 0.1, "equilateral": 0.08}[kind]
    return ExperimentSpec(f"fig2_{kind}_seed{seed}", geometry=kind, K=100, skip_init="zero",
                          comparisons=("closed_form",), outputs=("csv", "svg"), grid_n=41,
                          train=TrainConfig(mode="offline", M=100, iterations=FIG2_ITERS,
                                            learning_rate=3e-2, lr_schedule="cosine", lam=1e-5,
                                            sigma=sigma, seed=seed, trace_every=1000))


def equilateral_cost_spec(seed=0, rho=0.25):
    """Equilateral triangle with samples on the rho-circles, standing in for the balls."""
    spec = fig2_spec("equilateral", seed)
    return replace(spec, name=f"equilateral_cost_seed{seed}", data="sphere", rho=rho,
                   train=replace(spec.train, sigma=0.0))


# --- random instances for the property suites --------------------------------------------


def random_separated_1d(g, N):
    """Sorted clean points with noise extremes that satisfy the separation assumption."""
    gaps = g.uniform(0.5, 3.0, N - 1)
    x = np.concatenate([[0.0], np.cumsum(gaps)]) + g.uniform(-5, 5)
    left = np.concatenate([[1.0], gaps])
    right = np.concatenate([gaps, [1.0]])
    eps_min = -g.uniform(0.02, 0.45, N) * left
    eps_max = g.uniform(0.02, 0.45, N) * right
    inner = eps_min[:, None] + g.uniform(0, 1, (N, 3)) * (eps_max - eps_min)[:, None]
    samples = np.column_stack([eps_min, eps_max, inner])
    order = g.permutation(N)
    clean = CleanDataset(x[order][:, None])
    return NoisyDataset(clean, (x[:, None] + samples)[order][:, :, None])


def _random_rotation(g, d):
    q, r = np.linalg.qr(g.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _obtuse_directions(g, L, d):
    """L unit vectors in R^d with pairwise negative inner products (rotated regular simplex)."""
    E = np.eye(L) - 1.0 / L
    U, s, _ = np.linalg.svd(E)
    V = (E @ U[:, : L - 1])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    if L == 2:
        V = np.array([[1.0], [-1.0]])
    D = np.zeros((L, d))
    D[:, : V.shape[1]] = V
    D = D + 0.05 * g.standard_normal(D.shape)
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    return D @ _random_rotation(g, d).T


def random_colinear(g):
    d = int(g.integers(1, 5))
    u = g.standard_normal(d)
    u /= np.linalg.norm(u)
    N = int(g.integers(2, 7))
    c = np.cumsum(g.uniform(0.5, 2.0, N)) - g.uniform(0, 3)
    rho = 0.45 * float(np.diff(c).min())
    return CleanDataset(c[:, None] * u), rho


def random_rays(g):
    L = int(g.integers(2, 5))
    d = max(2, L - 1 + int(g.integers(0, 2)))
    D = _obtuse_directions(g, L, d)
    pts = [np.zeros(d)]
    spacing = []
    for u in D:
        c = np.cumsum(g.uniform(0.5, 2.0, int(g.integers(1, 4))))
        spacing.append(np.diff(np.concatenate([[0.0], c])).min())
        pts.extend(ci * u for ci in c)
    rho = 0.45 * float(min(spacing))
    origin = g.standard_normal(d)
    return CleanDataset(np.array(pts) + origin), rho, origin


def random_obtuse_simplex(g):
    N = int(g.integers(3, 6))
    d = N - 1 + int(g.integers(0, 2))
    D = _obtuse_directions(g, N - 1, d)
    lengths = g.uniform(1.0, 3.0, N - 1)
    pts = np.vstack([np.zeros(d), D * lengths[:, None]]) + g.standard_normal(d)
    rho = 0.45 * float(lengths.min())
    return CleanDataset(pts), rho


def random_acute_simplex(g):
    N = int(g.integers(3, 6))
    d = N - 1 + int(g.integers(0, 2))
    base = np.eye(N) - 1.0 / N
    U, _, _ = np.linalg.svd(base)
    V = base @ U[:, : N - 1]
    V = V + 0.04 * g.standard_normal(V.shape)
    pts = np.zeros((N, d))
    pts[:, : N - 1] = V
    pts = g.uniform(0.5, 2.0) * pts @ _random_rotation(g, d).T + g.standard_normal(d)
    ds = CleanDataset(pts)
    heights = np.linalg.norm(ds.points - cf.face_feet(ds.points), axis=1)
    return ds, 0.45 * float(heights.min())


def random_perturbed_rays(g, tries=100):
    for _ in range(tries):
        ds, rho, origin = random_rays(g)
        rel = ds.points - origin
        moved = rel.copy()
        moved[1:] += 0.03 * g.standard_normal(rel[1:].shape)
        pert = CleanDataset(moved + origin)
        try:
            cf.check_perturbed_rays(pert, 0.5 * rho, origin=origin)
        except DenoiserError:
            continue
        return pert, 0.5 * rho, origin
    raise RuntimeError("could not draw a perturbed-rays instance")


# --- property suites ----------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    passed: bool
    header: list
    rows: list
    detail: str = ""
    seconds: float = 0.0


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def suite_minimal_representation(n=100, seed=0):
    """Exact network realization of f_1D: 2N - 2 units and balanced cost equal to the closed-form cost."""
    rows = []
    ok = True
    for i in range(n):
        g = stream(seed, DATA, 1, i)
        N = int(g.integers(2, 11))
        f = cf.build_1d(random_separated_1d(g, N))
        net = from_closed_form(f)
        diff = abs(balanced_cost(net) - cf.representation_cost(f))
        good = net.K == 2 * N - 2 and diff <= 1e-10
        ok &= good
        rows.append((i, N, net.K, cf.representation_cost(f), diff, int(good)))
    return SuiteResult("minimal_representation", ok, ["case", "N", "units", "cost", "cost_diff", "pass"],
                       rows, f"{sum(r[-1] for r in rows)}/{n} pass")


@_timed
def suite_contractivity(n=1000, seed=0, queries=1000):
    """Largest contraction ratio of f_1D over random separated datasets."""
    rows = []
    for i in range(n):
        g = stream(seed, DATA, 2, i)
        N = int(g.integers(2, 9))
        nd = random_separated_1d(g, N)
        f = cf.build_1d(nd)
        rep = contractivity_1d(f, nd, n_queries=queries)
        rows.append((i, N, rep.alpha_observed, rep.worst_query, int(rep.passed)))
    passed = all(r[-1] for r in rows)
    worst = max(r[2] for r in rows)
    return SuiteResult("contractivity", passed, ["case", "N", "alpha_observed", "worst_query", "pass"],
                       rows, f"max alpha {worst:.6f}")


def _interp_errors(f, ds, rho, g, dirs=20):
    X = ds.points
    err_pts = float(np.abs(f(X) - X).max())
    r = g.standard_normal((dirs, ds.d))
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    err_ball = 0.0
    for x in X:
        err_ball = max(err_ball, float(np.abs(f(x + 0.9 * rho * r) - x).max()))
    return err_pts, err_ball


@_timed
def suite_interpolation(n=50, seed=0):
    """Every builder maps clean points, and 0.9 rho balls around them, to the clean point."""
    rows = []
    kinds = ("colinear", "rays", "obtuse_simplex", "acute_simplex", "perturbed_rays")
    for k, kind in enumerate(kinds):
        for i in range(n):
            g = stream(seed, DATA, 3, k, i)
            if kind == "colinear":
                ds, rho = random_colinear(g)
                f = cf.build_colinear(ds, rho)
            elif kind == "rays":
                ds, rho, origin = random_rays(g)
                f = cf.build_rays(check_rays(ds, origin=origin), rho)
            elif kind == "obtuse_simplex":
                ds, rho = random_obtuse_simplex(g)
                f = cf.build_obtuse_simplex(ds, rho)
            elif kind == "acute_simplex":
                ds, rho = random_acute_simplex(g)
                f = cf.build_acute_simplex(ds, rho)
            else:
                ds, rho, origin = random_perturbed_rays(g)
                f = cf.build_perturbed_rays(ds, 1e-9, rho, origin=origin)
            e1, e2 = _interp_errors(f, ds, rho, g)
            rows.append((kind, i, ds.N, ds.d, rho, e1, e2, int(e1 <= 1e-10 and e2 <= 1e-10)))
    passed = all(r[-1] for r in rows)
    return SuiteResult("interpolation", passed,
                       ["geometry", "case", "N", "d", "rho", "point_error", "ball_error", "pass"], rows,
                       f"{sum(r[-1] for r in rows)}/{len(rows)} pass")


def reference_loss(net: ShallowNet, Y, X, lam):
    """The training objective recomputed independently in extended precision."""
    ld = np.longdouble
    Y, X = np.asarray(Y, dtype=ld), np.asarray(X, dtype=ld)
    a, w, b = net.a.astype(ld), net.w.astype(ld), net.b.astype(ld)
    h = np.maximum(Y @ w.T + b, ld(0)) @ a
    if net.use_skip:
        h = h + Y @ net.V.astype(ld).T + net.c.astype(ld)
    pen = ((a * a).sum() + (w * w).sum()) / 2
    return ((h - X) ** 2).sum() / len(Y) + ld(lam) * pen


def gradient_check(net: ShallowNet, Y, X, lam):
    """Worst relative gap between the analytic gradient and central differences
    (step 1e-6 (1 + |theta_i|)) of the extended-precision objective."""
    _, grad = loss_and_grad(net, Y, X, lam)
    theta = net.to_flat()
    worst = 0.0
    for i in range(theta.size):
        h = 1e-6 * (1 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = h
        up = reference_loss(net.with_flat(theta + e), Y, X, lam)
        down = reference_loss(net.with_flat(theta - e), Y, X, lam)
        fd = float((up - down) / (2 * np.longdouble(h)))
        scale = max(abs(fd), abs(grad[i]), 1e-12)
        worst = max(worst, abs(fd - grad[i]) / scale)
    return worst


@_timed
def suite_gradients(n=60, seed=0):
    """Finite-difference check of loss_and_grad on random shapes."""
    rows = []
    for i in range(n):
        g = stream(seed, DATA, 4, i)
        d = int(g.choice([1, 2, 8]))
        K = int(g.choice([1, 4, 32]))
        skip = bool(g.integers(0, 2))
        net = ShallowNet(g.standard_normal((K, d)), g.standard_normal((K, d)), g.standard_normal(K),
                         g.standard_normal((d, d)), g.standard_normal(d), skip)
        B = int(g.integers(1, 16))
        worst = gradient_check(net, g.standard_normal((B, d)), g.standard_normal((B, d)),
                               float(g.uniform(0, 0.1)))
        rows.append((i, d, K, int(skip), worst, int(worst <= 1e-4)))
    return SuiteResult("gradients", all(r[-1] for r in rows),
                       ["case", "d", "K", "use_skip", "max_rel_error", "pass"], rows,
                       f"max rel error {max(r[4] for r in rows):.2e}")


@_timed
def suite_mse_ordering(seed=0, sigmas=(0.3, 0.1, 0.03), M=9000):
    """Quadrature MSE of f_1D and eMMSE under the uniform prior on [-5, 5]."""
    clean = line_points()
    prior = uniform_prior(-5.0, 5.0)
    rows = []
    for s in sigmas:
        f = cf.build_1d(gen_noisy(clean, M, s, seed))
        a = mse_vs_prior(f, prior, s)[0]
        b = mse_vs_prior(EmmseDenoiser(clean, s), prior, s)[0]
        rows.append((s, a, b, b / a))
    ratios = [r[3] for r in rows]
    passed = all(r[2] > r[1] for r in rows) and all(
        ratios[i + 1] >= ratios[i] for i in range(len(ratios) - 1))
    return SuiteResult("mse_ordering", passed, ["sigma", "mse_f1d", "mse_emmse", "ratio"], rows,
                       "ratios " + ", ".join(f"{r:.3f}" for r in ratios))


@_timed
def suite_moments(S=1_000_000, seed=0):
    """ReLU moment formulas against randomized quasi-Monte Carlo, plus the orthant check."""
    from .gaussian_moments import BivariateGaussian, bvn_tail

    rows = []
    ok = True
    for r in moments_bench(S, seed, "sobol"):
        z = abs(r.mc_mean - r.analytic) / r.mc_se
        good = z <= 4 and r.normalized_error <= 5e-4
        ok &= good
        rows.append((r.case, r.analytic, r.mc_mean, r.mc_se, r.normalized_error, z, int(good)))
    for r in moments_bench(S, seed, "plain"):
        z = abs(r.mc_mean - r.analytic) / r.mc_se
        rows.append((r.case, r.analytic, r.mc_mean, r.mc_se, r.normalized_error, z, int(z <= 4)))
    p = bvn_tail(BivariateGaussian((0.0, 0.0), (1.0, -0.5, 1.0)))
    good = abs(p - 1 / 6) <= 1e-10
    ok &= good
    rows.append(("bvn_tail_rho-0.5", 1 / 6, p, 0.0, abs(p - 1 / 6) * 6, 0.0, int(good)))
    worst = max(r[4] for r in rows if r[0].endswith("/sobol"))
    return SuiteResult("moments", ok, ["case", "analytic", "mc_mean", "mc_se", "normalized_error",
                                       "z_score", "pass"], rows,
                       f"max normalized error {worst:.3g}")


@_timed
def suite_marginalized(n=20, S=1_000_000, seed=0, sigma=0.5):
    """Exact marginalized loss against Monte Carlo on small random nets."""
    rows = []
    for i in range(n):
        g = stream(seed, DATA, 5, i)
        K = int(g.integers(1, 5))
        net = ShallowNet(g.standard_normal((K, 2)), g.standard_normal((K, 2)), np.zeros(K),
                         np.zeros((2, 2)), np.zeros(2), use_skip=False)
        prior = CleanDataset(g.standard_normal((2, 2)))
        first, hq = marginalized_terms(net, prior, sigma)
        m, se = mc_oracle(net, prior, sigma, S, seed + i)
        z = abs(first + hq - m) / se
        rows.append((i, K, first + hq, hq, m, se, z, int(z <= 4 and hq >= -1e-10)))
    return SuiteResult("marginalized", all(r[-1] for r in rows),
                       ["case", "K", "analytic", "h_term", "mc_mean", "mc_se", "z_score", "pass"], rows,
                       f"{sum(r[-1] for r in rows)}/{n} pass, max z {max(r[6] for r in rows):.3g}")


SUITES = {
    "minimal_representation": suite_minimal_representation,
    "contractivity": suite_contractivity,
    "interpolation": suite_interpolation,
    "gradients": suite_gradients,
    "mse_ordering": suite_mse_ordering,
    "moments": suite_moments,
    "marginalized": suite_marginalized,
}


def run_suite(name, seed=0, budget_scale=1.0):
    """Run one property suite; ``budget_scale`` shrinks case counts and sample sizes."""
    fn = SUITES[name]
    if budget_scale >= 1 or name == "mse_ordering":
        return fn(seed=seed)
    k = max(budget_scale, 1e-3)
    sizes = {"minimal_representation": {"n": max(2, int(100 * k))},
             "contractivity": {"n": max(2, int(1000 * k))},
             "interpolation": {"n": max(1, int(50 * k))},
             "gradients": {"n": max(2, int(60 * k))},
             "moments": {"S": max(1 << 12, int(1_000_000 * k))},
             "marginalized": {"n": max(1, int(20 * k)), "S": max(10_000, int(1_000_000 * k))}}
    return fn(seed=seed, **sizes[name])


# --- four-point line run helpers -------------------------------------------------------------------------


def fig1_deviation(net_fn, f1d: cf.PiecewiseLinear1D, grid=None, kink_gap=0.2):
    """Max |net - f_1D| on [-9, 9] at points at least ``kink_gap`` from every knot."""
    y = np.linspace(-9, 9, 3601) if grid is None else np.asarray(grid)
    keep = np.min(np.abs(y[:, None] - f1d.knots[None, :]), axis=1) >= kink_gap
    y = y[keep]
    return float(np.abs(net_fn(y) - f1d(y)).max())


def emmse_gap(clean: CleanDataset, sigma: float, f1d: cf.PiecewiseLinear1D):
    """Max |eMMSE - f_1D| on a grid between the noise clusters."""
    y = np.linspace(f1d.knots[0], f1d.knots[-1], 4001)
    return float(np.abs(EmmseDenoiser(clean, sigma)(y) - f1d(y)).max())


def separation_margin(clean: CleanDataset, sigma: float, M: int, seed: int):
    nd = gen_noisy(clean, M, sigma, seed)
    return nd, check_well_separated(nd)
