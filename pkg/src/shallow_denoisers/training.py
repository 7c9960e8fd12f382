"""Weight-decay training of a ShallowNet on noisy copies of clean points.

Two regimes:

* online: every step draws a batch of clean indices with replacement and
  fresh Gaussian noise;
* offline: a fixed set of M noisy copies per point, visited in epochs that are
  reshuffled from the seed.

All randomness comes from keyed streams (see ``rng``), so a run is a pure
function of its config.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigParse, DivergedLoss, DimensionMismatch
from .geometry import CleanDataset, NoisyDataset
from .network import ShallowNet, balanced_cost, loss_and_grad, penalty
from .rng import NOISE, ONLINE_INDEX, ONLINE_NOISE, SHUFFLE, stream
from .textio import fmt

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "offline"  # "online" | "offline"
    M: int = 100  # noisy copies per point (offline)
    iterations: int = 1000  # steps (online) or epochs (offline)
    batch_size: int = 0  # 0 means the whole dataset (offline) or N (online)
    learning_rate: float = 1e-3
    lam: float = 1e-5
    sigma: float = 0.1
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_schedule: str = "constant"  # "constant" | "cosine"
    trace_every: int = 1

    def __post_init__(self):
        if self.mode not in ("online", "offline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0 or self.sigma < 0:
            raise ValueError("lam and sigma must be non-negative")
        if self.iterations < 1 or self.M < 1 or self.batch_size < 0 or self.trace_every < 1:
            raise ValueError("iterations, M, trace_every must be >= 1 and batch_size >= 0")


def gen_noisy(ds: CleanDataset, M: int, sigma: float, seed: int) -> NoisyDataset:
    """y_nm = x_n + sigma g_nm; the noise of point n comes from the stream (seed, NOISE, n)."""
    if M < 1 or sigma < 0:
        raise ValueError("need M >= 1 and sigma >= 0")
    g = np.stack([stream(seed, NOISE, n).standard_normal((M, ds.d)) for n in range(ds.N)])
    return NoisyDataset(ds, ds.points[:, None, :] + sigma * g, sigma)


def gen_sphere(ds: CleanDataset, M: int, rho: float, seed: int) -> NoisyDataset:
    """M points on the sphere of radius rho around each clean point.

    A stand-in for norm-ball data: a net constant on these samples is, at
    minimal cost, constant on the balls they bound.
    """
    if M < 1 or not rho > 0:
        raise ValueError("need M >= 1 and rho > 0")
    g = np.stack([stream(seed, NOISE, n).standard_normal((M, ds.d)) for n in range(ds.N)])
    g /= np.linalg.norm(g, axis=2, keepdims=True)
    return NoisyDataset(ds, ds.points[:, None, :] + rho * g)


@dataclass(frozen=True)
class TraceRow:
    step: int
    loss: float
    penalty: float
    balanced_cost: float


class _Optimizer:
    def __init__(self, cfg: TrainConfig, n, total_steps):
        self.cfg = cfg
        self.total = total_steps
        self.t = 0
        if cfg.optimizer == "adam":
            self.m = np.zeros(n)
            self.v = np.zeros(n)

    def lr(self):
        cfg = self.cfg
        if cfg.lr_schedule == "cosine":
            return cfg.learning_rate * 0.5 * (1 + math.cos(math.pi * self.t / self.total))
        return cfg.learning_rate

    def step(self, theta, grad):
        cfg = self.cfg
        eta = self.lr()
        self.t += 1
        if cfg.optimizer == "sgd":
            return theta - eta * grad
        self.m = cfg.beta1 * self.m + (1 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1 - cfg.beta2) * grad * grad
        mhat = self.m / (1 - cfg.beta1**self.t)
        vhat = self.v / (1 - cfg.beta2**self.t)
        return theta - eta * mhat / (np.sqrt(vhat) + cfg.eps)


def train(net0: ShallowNet, ds: CleanDataset, cfg: TrainConfig, noisy: NoisyDataset | None = None,
          callback=None):
    """Minimize mean squared error + lam * C(theta). Returns ``(net, trace)``.

    Offline mode uses ``noisy`` if given, else ``gen_noisy(ds, cfg.M, cfg.sigma, cfg.seed)``.
    The trace holds one row every ``trace_every`` steps (online) or epochs
    (offline); the loss recorded is the objective on the batch (online) or the
    mean of the epoch's batch objectives (offline), both before the update.
    ``callback(net, row)`` is invoked with every trace row.
    """
    if net0.d != ds.d:
        raise DimensionMismatch(f"net has d={net0.d}, data has d={ds.d}")
    net = net0.copy()
    theta = net.to_flat()
    trace = []
    initial = None

    def record(step, loss):
        nonlocal initial
        if initial is None:
            initial = max(loss, 1e-12)
        if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial:
            raise DivergedLoss(step, trace)
        if step % cfg.trace_every == 0 or step == cfg.iterations - 1:
            net.set_flat(theta)
            row = TraceRow(step, loss, penalty(net), balanced_cost(net))
            trace.append(row)
            if callback is not None:
                callback(net, row)

    if cfg.mode == "online":
        B = cfg.batch_size or ds.N
        opt = _Optimizer(cfg, theta.size, cfg.iterations)
        for t in range(cfg.iterations):
            idx = stream(cfg.seed, ONLINE_INDEX, t).integers(0, ds.N, B)
            x = ds.points[idx]
            y = x + cfg.sigma * stream(cfg.seed, ONLINE_NOISE, t).standard_normal(x.shape)
            loss, grad = loss_and_grad(net.set_flat(theta), y, x, cfg.lam)
            record(t, loss)
            theta = opt.step(theta, grad)
    else:
        noisy = gen_noisy(ds, cfg.M, cfg.sigma, cfg.seed) if noisy is None else noisy
        if noisy.clean.d != ds.d:
            raise DimensionMismatch("noisy dataset dimension differs from clean dataset")
        Y, X = noisy.pairs()
        P = len(Y)
        B = min(cfg.batch_size or P, P)
        per_epoch = -(-P // B)
        opt = _Optimizer(cfg, theta.size, cfg.iterations * per_epoch)
        for epoch in range(cfg.iterations):
            if B < P:
                order = stream(cfg.seed, SHUFFLE, epoch).permutation(P)
            total = 0.0
            for s in range(per_epoch):
                if B < P:
                    sel = order[s * B:(s + 1) * B]
                    yb, xb = Y[sel], X[sel]
                else:
                    yb, xb = Y, X
                loss, grad = loss_and_grad(net.set_flat(theta), yb, xb, cfg.lam)
                total += loss
                theta = opt.step(theta, grad)
            record(epoch, total / per_epoch)
    return net.set_flat(theta), trace


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["step", "loss", "penalty", "balanced_cost"])
        for r in trace:
            out.writerow([r.step, fmt(r.loss), fmt(r.penalty), fmt(r.balanced_cost)])


# --- flat key-value config ----------------------------------------------------


def parse_kv(text: str):
    """Parse ``key = value`` lines ('#' starts a comment). Returns {key: (value, line)}."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else (":" if ":" in line else None)
        if sep is None:
            raise ConfigParse(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        if not key:
            raise ConfigParse(lineno, "empty key")
        if key in out:
            raise ConfigParse(lineno, f"duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def coerce(value: str, typ, lineno: int, key: str):
    try:
        if typ is bool:
            return _BOOL[value.lower()]
        if typ is int:
            return int(float(value)) if "e" in value.lower() else int(value)
        return typ(value)
    except (ValueError, KeyError):
        raise ConfigParse(lineno, f"bad value {value!r} for {key}") from None


def config_from_kv(kv, base: TrainConfig | None = None, strict=True) -> TrainConfig:
    """Build a TrainConfig from parsed key-values; unknown keys raise if ``strict``."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    cast = {"str": str, "int": int, "float": float, "bool": bool}
    updates = {}
    for key, (value, lineno) in kv.items():
        if key not in types:
            if strict:
                raise ConfigParse(lineno, f"unknown key {key!r}")
            continue
        updates[key] = coerce(value, cast[types[key]], lineno, key)
    try:
        return replace(base or TrainConfig(), **updates)
    except ValueError as err:
        line = min((kv[k][1] for k in updates), default=0)
        raise ConfigParse(line, str(err)) from None


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        return config_from_kv(parse_kv(fh.read()))
