"""ReLU moments of Gaussians and the exact Gaussian-marginalized training loss.

For z ~ N(mu, Sigma) in R^2 with A = {z_1 > 0, z_2 > 0} and P = P(A), Stein's
identity gives

    E[[z_1]_+ [z_2]_+] = s12 P + det(Sigma) f(0) + s11 g_1 mu_2 + mu_1 s22 g_2 + mu_1 mu_2 P

where f is the joint density and g_k = p_k(0) P(z_other > 0 | z_k = 0). This is
the truncated-normal formula written without dividing by P, so it stays finite
when P underflows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcinv, ndtr
from scipy.stats import qmc

from .errors import IllConditioned, ModelShapeUnsupported
from .geometry import CleanDataset
from .network import ShallowNet
from .rng import MONTE_CARLO, stream
from .textio import fmt

SQRT2PI = math.sqrt(2 * math.pi)
TAIL = 8.5
DEGENERATE = 1e-12
EXTREME = 37.0

_GL10 = np.polynomial.legendre.leggauss(10)
_GL20 = np.polynomial.legendre.leggauss(20)


def npdf(t):
    return np.exp(-0.5 * np.square(t)) / SQRT2PI


def ncdf(t):
    return ndtr(t)


def nsf(t):
    """Upper tail 1 - Phi(t), accurate for large t."""
    return ndtr(-np.asarray(t, dtype=float))


def relu_gauss_mean(mu, sigma):
    """E[z]_+ for z ~ N(mu, sigma^2): mu Phi(mu/sigma) + sigma phi(mu/sigma); [mu]_+ at sigma = 0."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mu / sigma
        out = mu * ncdf(t) + sigma * npdf(t)
    out = np.where(t > EXTREME, mu, out)
    out = np.where(t < -EXTREME, 0.0, out)
    out = np.where(sigma == 0, np.maximum(mu, 0.0), out)
    return out[()] if out.ndim == 0 else out


def relu_gauss_second(mu, sigma):
    """E[z]_+^2 for z ~ N(mu, sigma^2)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mu / sigma
        out = (mu**2 + sigma**2) * ncdf(t) + mu * sigma * npdf(t)
    out = np.where(t > EXTREME, mu**2 + sigma**2, out)
    out = np.where(t < -EXTREME, 0.0, out)
    out = np.where(sigma == 0, np.maximum(mu, 0.0) ** 2, out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class BivariateGaussian:
    mu: tuple
    cov: tuple  # (s11, s12, s22)

    def __post_init__(self):
        mu = tuple(float(m) for m in np.ravel(self.mu))
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape == (2, 2):
            if cov[0, 1] != cov[1, 0]:
                raise ValueError("covariance must be symmetric")
            cov = (cov[0, 0], cov[0, 1], cov[1, 1])
        cov = tuple(float(c) for c in np.ravel(cov))
        if len(mu) != 2 or len(cov) != 3:
            raise ValueError("need a 2-vector mean and (s11, s12, s22)")
        s11, s12, s22 = cov
        if not (s11 > 0 and s22 > 0 and s11 * s22 - s12 * s12 >= 0):
            raise ValueError("covariance must be positive semidefinite with positive variances")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def det(self):
        s11, s12, s22 = self.cov
        return s11 * s22 - s12 * s12

    @property
    def rho(self):
        s11, s12, s22 = self.cov
        return max(-1.0, min(1.0, s12 / math.sqrt(s11 * s22)))

    def swapped(self):
        s11, s12, s22 = self.cov
        return BivariateGaussian(self.mu[::-1], (s22, s12, s11))


def _gl_adaptive(f, a, b, tol, depth=0):
    """Adaptive Gauss-Legendre: accept a panel when the 10- and 20-point rules agree."""
    half, mid = 0.5 * (b - a), 0.5 * (a + b)
    coarse = half * (_GL10[1] @ f(mid + half * _GL10[0]))
    fine = half * (_GL20[1] @ f(mid + half * _GL20[0]))
    if abs(fine - coarse) <= tol or depth >= 40:
        return fine
    return _gl_adaptive(f, a, mid, tol / 2, depth + 1) + _gl_adaptive(f, mid, b, tol / 2, depth + 1)


def std_bvn_tail(h, k, rho, tol=1e-14):
    """P(Z_1 > h, Z_2 > k) for standard margins with correlation rho."""
    if rho > 1 - DEGENERATE:
        return float(nsf(max(h, k)))
    if rho < -1 + DEGENERATE:
        return float(max(0.0, ncdf(-k) - ncdf(h)))
    if rho == 0:
        return float(nsf(h) * nsf(k))
    r = math.sqrt((1 - rho) * (1 + rho))
    lo = max(k, -TAIL)
    hi = max(lo, 0.0) + TAIL

    def f(s):
        return npdf(s) * nsf((h - rho * s) / r)

    # the inner tail switches from 0 to 1 around s = h / rho; split there
    cuts = [lo, hi]
    step = h / rho
    if lo < step < hi:
        cuts.insert(1, step)
    return float(sum(_gl_adaptive(f, a, b, tol) for a, b in zip(cuts[:-1], cuts[1:])))


def bvn_tail(b: BivariateGaussian, thresholds=(0.0, 0.0)) -> float:
    """P(z_1 > t_1, z_2 > t_2) for z ~ b.

    Correlations within 1e-12 of +-1 are treated as exactly degenerate, with an
    ``IllConditioned`` warning.
    """
    s11, s12, s22 = b.cov
    h = (thresholds[0] - b.mu[0]) / math.sqrt(s11)
    k = (thresholds[1] - b.mu[1]) / math.sqrt(s22)
    rho = b.rho
    if abs(rho) > 1 - DEGENERATE:
        warnings.warn(IllConditioned(f"correlation {rho!r} treated as degenerate"), stacklevel=2)
    return std_bvn_tail(h, k, rho)


def _interval_moments(lo, hi):
    """Integrals of 1, s, s^2 against phi over (lo, hi)."""
    m0 = max(0.0, float(ncdf(hi) - ncdf(lo))) if lo < hi else 0.0
    if m0 == 0.0:
        return 0.0, 0.0, 0.0
    plo = 0.0 if math.isinf(lo) else float(npdf(lo))
    phi = 0.0 if math.isinf(hi) else float(npdf(hi))
    tlo = 0.0 if math.isinf(lo) else lo * plo
    thi = 0.0 if math.isinf(hi) else hi * phi
    return m0, plo - phi, m0 + tlo - thi


def _degenerate_cross(mu1, mu2, s1, s2, sign):
    """E[[z_1]_+ [z_2]_+] when z_1 = mu1 + s1 S and z_2 = mu2 + sign s2 S."""
    lo, hi = -mu1 / s1, math.inf
    if sign > 0:
        lo = max(lo, -mu2 / s2)
    else:
        hi = mu2 / s2
    m0, m1, m2 = _interval_moments(lo, hi)
    c2 = sign * s2
    return mu1 * mu2 * m0 + (mu1 * c2 + mu2 * s1) * m1 + s1 * c2 * m2


def relu_gauss_cross(b: BivariateGaussian) -> float:
    """E[[z_1]_+ [z_2]_+] for z ~ b."""
    mu1, mu2 = b.mu
    s11, s12, s22 = b.cov
    s1, s2 = math.sqrt(s11), math.sqrt(s22)
    rho = b.rho
    if abs(rho) > 1 - DEGENERATE:
        return _degenerate_cross(mu1, mu2, s1, s2, 1 if rho > 0 else -1)
    if mu1 / s1 < -EXTREME or mu2 / s2 < -EXTREME:
        return 0.0
    P = std_bvn_tail(-mu1 / s1, -mu2 / s2, rho)
    # conditional laws: z_2 | z_1 = 0 and z_1 | z_2 = 0
    sc2 = math.sqrt(s22 - s12 * s12 / s11)
    sc1 = math.sqrt(s11 - s12 * s12 / s22)
    mc2 = mu2 - s12 * mu1 / s11
    mc1 = mu1 - s12 * mu2 / s22
    p1 = float(npdf(mu1 / s1)) / s1
    p2 = float(npdf(mu2 / s2)) / s2
    g1 = p1 * float(ncdf(mc2 / sc2))
    g2 = p2 * float(ncdf(mc1 / sc1))
    # det * f(0) = s11 * sc2 * p1 * phi(mc2 / sc2)
    dens = s11 * sc2 * p1 * float(npdf(mc2 / sc2))
    return s12 * P + dens + s11 * g1 * mu2 + mu1 * s22 * g2 + mu1 * mu2 * P


def _pair_moment(m_i, m_j, v_i, v_j, c_ij):
    """E[[z_i]_+ [z_j]_+] for scalar Gaussians with variances v and covariance c."""
    if v_i == 0 or v_j == 0:
        if v_i == 0 and v_j == 0:
            return max(m_i, 0.0) * max(m_j, 0.0)
        if v_i == 0:
            return max(m_i, 0.0) * float(relu_gauss_mean(m_j, math.sqrt(v_j)))
        return max(m_j, 0.0) * float(relu_gauss_mean(m_i, math.sqrt(v_i)))
    return relu_gauss_cross(BivariateGaussian((m_i, m_j), (v_i, c_ij, v_j)))


def _require_plain(net: ShallowNet):
    if net.use_skip or np.any(net.b != 0):
        raise ModelShapeUnsupported("marginalized loss needs a net without skip connection or biases")


def marginalized_terms(net: ShallowNet, prior: CleanDataset, sigma: float):
    """The two parts of the exact loss: the mean-prediction error and sum_ij a_i^T a_j H_ij."""
    _require_plain(net)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    W, A = net.w, net.a
    G = A @ A.T  # a_i^T a_j
    C = sigma**2 * (W @ W.T)  # covariances of the pre-activations
    first = 0.0
    hquad = 0.0
    K = net.K
    for x in prior.points:
        mean = W @ x
        m = np.array([float(relu_gauss_mean(mean[k], math.sqrt(C[k, k]))) for k in range(K)])
        first += float(np.sum((m @ A - x) ** 2))
        if sigma == 0:
            continue
        for i in range(K):
            for j in range(i, K):
                if G[i, j] == 0:
                    continue
                if i == j:
                    e = float(relu_gauss_second(mean[i], math.sqrt(C[i, i])))
                else:
                    e = _pair_moment(mean[i], mean[j], C[i, i], C[j, j], C[i, j])
                hquad += (1 if i == j else 2) * G[i, j] * (e - m[i] * m[j])
    return first / prior.N, hquad / prior.N


def marginalized_loss(net: ShallowNet, prior: CleanDataset, sigma: float) -> float:
    """E_x E_eps |h(x + sigma eps) - x|^2 in closed form, x uniform over ``prior``."""
    first, hquad = marginalized_terms(net, prior, sigma)
    return first + hquad


# --- Monte Carlo ---------------------------------------------------------------

CHUNK = 1 << 16


def _merge(stats, values):
    """Chan's parallel update of (count, mean, M2)."""
    n, mean, m2 = stats
    nb = values.size
    mb = float(values.mean())
    m2b = float(((values - mb) ** 2).sum())
    tot = n + nb
    delta = mb - mean
    return tot, mean + delta * nb / tot, m2 + m2b + delta**2 * n * nb / tot


def mc_normal(fn, dim, S, seed, path=(1,)):
    """Plain Monte Carlo of E fn(g), g ~ N(0, I_dim); fn maps (n, dim) draws to n values.

    Draws come in fixed-size chunks from keyed streams and are reduced in order.
    Returns ``(mean, standard_error)``.
    """
    if S < 2:
        raise ValueError("need at least two samples")
    stats = (0, 0.0, 0.0)
    for chunk, start in enumerate(range(0, S, CHUNK)):
        n = min(CHUNK, S - start)
        g = stream(seed, MONTE_CARLO, *path, chunk).standard_normal((n, dim))
        stats = _merge(stats, np.asarray(fn(g), dtype=float))
    n, mean, m2 = stats
    return mean, math.sqrt(m2 / (n - 1) / n)


def sobol_normal(fn, dim, S, seed, replicates=16, path=()):
    """Randomized quasi-Monte Carlo of E fn(g): independent scrambled Sobol' replicates.

    Each replicate uses the first 2^m points with 2^m >= S / replicates; the
    standard error comes from the spread of the replicate means.
    """
    per = 1 << max(1, math.ceil(math.log2(max(2, S / replicates))))
    means = []
    for r in range(replicates):
        key = int(stream(seed, MONTE_CARLO, *path, r).integers(2**63))
        eng = qmc.Sobol(dim, scramble=True, seed=key)
        u = eng.random(per)
        g = -np.sqrt(2) * erfcinv(2 * u)
        means.append(float(np.mean(fn(g))))
    means = np.array(means)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(replicates))


def mc_oracle(f, prior: CleanDataset, sigma: float, S: int, seed: int):
    """Mean and standard error of |f(x + sigma g) - x|^2 with x uniform over ``prior``."""
    if S < 2:
        raise ValueError("need at least two samples")
    X = prior.points
    stats = (0, 0.0, 0.0)
    for chunk, start in enumerate(range(0, S, CHUNK)):
        n = min(CHUNK, S - start)
        g = stream(seed, MONTE_CARLO, 0, chunk)
        x = X[g.integers(0, prior.N, n)]
        y = x + sigma * g.standard_normal(x.shape)
        out = np.asarray(f(y), dtype=float).reshape(x.shape)
        stats = _merge(stats, ((out - x) ** 2).sum(1))
    n, mean, m2 = stats
    return mean, math.sqrt(m2 / (n - 1) / n)


# --- accuracy benchmark ----------------------------------------------------------

MEAN_CASES = {"mean_mu1_sigma5": (1.0, 5.0), "mean_mu-1_sigma5": (-1.0, 5.0)}
CROSS_CASES = {
    "cross_mu(-4,17)": ((-4.0, 17.0), ((13.0, -9.0), (-9.0, 8.0))),
    "cross_mu(6,2)": ((6.0, 2.0), ((10.0, 2.0), (2.0, 1.0))),
}


@dataclass(frozen=True)
class BenchRow:
    case: str
    analytic: float
    mc_mean: float
    mc_se: float

    @property
    def normalized_error(self):
        return abs(self.mc_mean - self.analytic) / abs(self.analytic)


def moments_bench(S=1_000_000, seed=0, method="sobol"):
    """Analytic ReLU moments against Monte Carlo on the reference cases."""
    est = sobol_normal if method == "sobol" else mc_normal
    rows = []
    for i, (name, (mu, s)) in enumerate(MEAN_CASES.items()):
        m, se = est(lambda g: np.maximum(mu + s * g[:, 0], 0.0), 1, S, seed, path=(1, i))
        rows.append(BenchRow(f"{name}/{method}", float(relu_gauss_mean(mu, s)), m, se))
    for i, (name, (mu, cov)) in enumerate(CROSS_CASES.items()):
        L = np.linalg.cholesky(np.array(cov))
        mu_v = np.array(mu)

        def prod(g, L=L, mu_v=mu_v):
            z = mu_v + g @ L.T
            return np.maximum(z[:, 0], 0.0) * np.maximum(z[:, 1], 0.0)

        m, se = est(prod, 2, S, seed, path=(2, i))
        rows.append(BenchRow(f"{name}/{method}", relu_gauss_cross(BivariateGaussian(mu, cov)), m, se))
    return rows


def write_bench_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("case,analytic,mc_mean,mc_se,normalized_error\n")
        for r in rows:
            fh.write(f"{r.case},{fmt(r.analytic)},{fmt(r.mc_mean)},{fmt(r.mc_se)},"
                     f"{fmt(r.normalized_error)}\n")
