"""One-hidden-layer ReLU network with a linear skip connection.

    h(y) = sum_k a_k [w_k^T y + b_k]_+ + V y + c

Only the outer and inner weights are penalized: C = 1/2 sum_k (|a_k|^2 + |w_k|^2).

Flat parameter layout (row-major throughout)::

    a (K*d) | w (K*d) | b (K) | V (d*d) | c (d)

The V and c blocks are present only when ``use_skip`` is true.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .closed_form import PiecewiseLinear1D, RankOneSumDenoiser
from .errors import DimensionMismatch, EmptyBatch
from .rng import INIT, stream
from .textio import dump_json


@dataclass
class ShallowNet:
    a: np.ndarray  # (K, d)
    w: np.ndarray  # (K, d)
    b: np.ndarray  # (K,)
    V: np.ndarray  # (d, d)
    c: np.ndarray  # (d,)
    use_skip: bool = True

    def __post_init__(self):
        self.a = np.array(self.a, dtype=float, ndmin=2)
        self.w = np.array(self.w, dtype=float, ndmin=2)
        K, d = self.w.shape
        self.b = np.array(self.b, dtype=float).reshape(K)
        self.V = np.array(self.V, dtype=float).reshape(d, d)
        self.c = np.array(self.c, dtype=float).reshape(d)
        if self.a.shape != (K, d):
            raise DimensionMismatch(f"a has shape {self.a.shape}, expected {(K, d)}")
        for name in ("a", "w", "b", "V", "c"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def K(self):
        return self.w.shape[0]

    @property
    def d(self):
        return self.w.shape[1]

    @classmethod
    def zeros(cls, d, K, use_skip=True):
        return cls(np.zeros((K, d)), np.zeros((K, d)), np.zeros(K), np.zeros((d, d)), np.zeros(d),
                   use_skip)

    def copy(self):
        return ShallowNet(self.a.copy(), self.w.copy(), self.b.copy(), self.V.copy(),
                          self.c.copy(), self.use_skip)

    # flat view -----------------------------------------------------------

    def n_params(self):
        K, d = self.K, self.d
        return 2 * K * d + K + (d * d + d if self.use_skip else 0)

    def to_flat(self):
        parts = [self.a.ravel(), self.w.ravel(), self.b]
        if self.use_skip:
            parts += [self.V.ravel(), self.c]
        return np.concatenate(parts)

    def set_flat(self, theta):
        K, d = self.K, self.d
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params(),):
            raise DimensionMismatch(f"expected {self.n_params()} parameters, got {theta.shape}")
        i = 0
        self.a = theta[i:i + K * d].reshape(K, d).copy(); i += K * d
        self.w = theta[i:i + K * d].reshape(K, d).copy(); i += K * d
        self.b = theta[i:i + K].copy(); i += K
        if self.use_skip:
            self.V = theta[i:i + d * d].reshape(d, d).copy(); i += d * d
            self.c = theta[i:i + d].copy()
        return self

    def with_flat(self, theta):
        return self.copy().set_flat(theta)

    def __call__(self, y):
        return forward(self, y)


def _batch(net, y):
    """Coerce queries to shape (B, d); also report how to shape the answer back."""
    y = np.asarray(y, dtype=float)
    if net.d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        return y.reshape(-1, 1), y.shape
    if y.shape[-1] != net.d:
        raise DimensionMismatch(f"query has dimension {y.shape[-1]}, expected {net.d}")
    return y.reshape(-1, net.d), y.shape


def forward(net: ShallowNet, y):
    Y, shape = _batch(net, y)
    out = np.maximum(Y @ net.w.T + net.b, 0.0) @ net.a
    if net.use_skip:
        out += Y @ net.V.T + net.c
    return out.reshape(shape)


def penalty(net: ShallowNet) -> float:
    return 0.5 * float((net.a**2).sum() + (net.w**2).sum())


def balanced_cost(net: ShallowNet) -> float:
    """sum_k |a_k| |w_k|: the penalty after rebalancing every unit."""
    return float((np.linalg.norm(net.a, axis=1) * np.linalg.norm(net.w, axis=1)).sum())


def data_loss(net: ShallowNet, Y, X) -> float:
    Y = np.asarray(Y, dtype=float).reshape(-1, net.d)
    X = np.asarray(X, dtype=float).reshape(-1, net.d)
    return float(((forward(net, Y) - X) ** 2).sum(1).mean())


def loss_and_grad(net: ShallowNet, Y, X, lam: float):
    """Mean squared error plus lam * C, and its gradient in the flat layout.

    The ReLU derivative at exactly zero pre-activation is taken to be 0.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1, net.d)
    X = np.asarray(X, dtype=float).reshape(-1, net.d)
    B = Y.shape[0]
    if B == 0:
        raise EmptyBatch("loss needs at least one sample")
    pre = Y @ net.w.T + net.b
    act = np.maximum(pre, 0.0)
    h = act @ net.a
    if net.use_skip:
        h += Y @ net.V.T + net.c
    R = h - X
    loss = float((R**2).sum() / B) + lam * penalty(net)

    dh = (2.0 / B) * R
    G = (dh @ net.a.T) * (pre > 0)
    parts = [act.T @ dh + lam * net.a, G.T @ Y + lam * net.w, G.sum(0)]
    if net.use_skip:
        parts += [dh.T @ Y, dh.sum(0)]
    return loss, np.concatenate([p.ravel() for p in parts])


@dataclass(frozen=True)
class Unit:
    """A hidden unit in normalized form: boundary {y : normal^T y = offset}."""

    index: int
    normal: np.ndarray
    offset: float
    strength: float
    out_dir: np.ndarray


def extract_units(net: ShallowNet, significance: float = 0.0):
    """Units with strength |a_k||w_k| at least ``significance`` times the total."""
    if not 0 <= significance < 1:
        raise ValueError("significance must lie in [0, 1)")
    wn = np.linalg.norm(net.w, axis=1)
    an = np.linalg.norm(net.a, axis=1)
    strength = wn * an
    total = strength.sum()
    units = []
    for k in range(net.K):
        if wn[k] == 0:
            continue
        if significance > 0 and not (strength[k] > 0 and strength[k] >= significance * total):
            continue
        out = net.a[k] / an[k] if an[k] > 0 else np.zeros(net.d)
        units.append(Unit(k, net.w[k] / wn[k], float(-net.b[k] / wn[k]), float(strength[k]), out))
    return units


def rescale_units(net: ShallowNet, t):
    """Per-unit rescaling (a, w, b) -> (a / t, t w, t b); leaves the function unchanged."""
    t = np.broadcast_to(np.asarray(t, dtype=float), (net.K,))
    out = net.copy()
    out.a = net.a / t[:, None]
    out.w = net.w * t[:, None]
    out.b = net.b * t
    return out


def balance(net: ShallowNet):
    """Rescale each unit so |a_k| = |w_k|; then penalty equals balanced_cost."""
    an = np.linalg.norm(net.a, axis=1)
    wn = np.linalg.norm(net.w, axis=1)
    ok = (an > 0) & (wn > 0)
    t = np.ones(net.K)
    t[ok] = np.sqrt(an[ok] / wn[ok])
    return rescale_units(net, t)


def _profile_units(p: PiecewiseLinear1D, rel_tol=1e-14):
    """Knots with a nonzero slope change, and the jumps there."""
    jumps = p.slope_changes()
    scale = max(1.0, np.abs(p.slopes()).max())
    keep = np.abs(jumps) > rel_tol * scale
    return p.knots[keep], jumps[keep]


def from_closed_form(f) -> ShallowNet:
    """Exact network realization, one unit per slope change of each profile.

    phi(s) = phi(t_0) + left_slope (s - t_0) + sum_i jump_i [s - t_i]_+, so a
    unit v phi(u^T (y - z)) contributes ReLUs with w = u, b = -u^T z - t_i,
    a = jump_i v; the affine part goes to V and c.
    """
    if isinstance(f, PiecewiseLinear1D):
        knots, jumps = _profile_units(f)
        t0, v0 = f.knots[0], f.values[0]
        K = len(knots)
        return ShallowNet(jumps.reshape(K, 1), np.ones((K, 1)), -knots,
                          [[f.left_slope]], [v0 - f.left_slope * t0], use_skip=True)
    if not isinstance(f, RankOneSumDenoiser):
        raise TypeError(f"cannot realize {type(f).__name__} as a network")
    d = f.d
    A, W, b = [], [], []
    V = np.zeros((d, d))
    c = f.offset.copy()
    for unit in f.units:
        p = unit.profile
        uz = float(unit.u @ unit.z)
        knots, jumps = _profile_units(p)
        for t, jump in zip(knots, jumps):
            A.append(jump * unit.v)
            W.append(unit.u)
            b.append(-uz - t)
        V += p.left_slope * np.outer(unit.v, unit.u)
        c += unit.v * (p.values[0] - p.left_slope * (uz + p.knots[0]))
    K = len(A)
    A = np.array(A).reshape(K, d)
    W = np.array(W).reshape(K, d)
    return ShallowNet(A, W, np.array(b), V, c, use_skip=True)


def init_net(d: int, K: int, radius: float, seed: int, use_skip: bool = True,
             skip_init: str = "identity") -> ShallowNet:
    """Random start: w on the unit sphere, b ~ U[-radius, radius], a ~ N(0, 1/K), c = 0.

    The skip matrix starts at the identity, or at zero with ``skip_init="zero"``.
    """
    if skip_init not in ("identity", "zero"):
        raise ValueError(f"unknown skip_init {skip_init!r}")
    g = stream(seed, INIT)
    w = g.standard_normal((K, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    b = g.uniform(-radius, radius, K)
    a = g.standard_normal((K, d)) / np.sqrt(K)
    V = np.eye(d) if use_skip and skip_init == "identity" else np.zeros((d, d))
    return ShallowNet(a, w, b, V, np.zeros(d), use_skip)


def dumps(net: ShallowNet) -> str:
    return dump_json({"type": "shallow_net", "d": net.d, "K": net.K, "use_skip": net.use_skip,
                      "a": net.a, "w": net.w, "b": net.b, "V": net.V, "c": net.c})


def loads(text: str) -> ShallowNet:
    d = json.loads(text)
    if d.get("type") != "shallow_net":
        raise ValueError("not a shallow_net weight file")
    dim, K = int(d["d"]), int(d["K"])
    return ShallowNet(np.reshape(d["a"], (K, dim)), np.reshape(d["w"], (K, dim)),
                      np.reshape(d["b"], (K,)), np.reshape(d["V"], (dim, dim)), d["c"],
                      bool(d["use_skip"]))
