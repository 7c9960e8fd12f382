import numpy as np
import pytest

from shallow_denoisers.geometry import CleanDataset, NoisyDataset


def noisy_with_extremes(xs, lo, hi):
    """1-D noisy dataset whose per-point noise extremes are exactly (lo, hi)."""
    xs = np.asarray(xs, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), xs.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), xs.shape)
    samples = np.stack([xs + lo, xs, xs + hi], axis=1)[:, :, None]
    return NoisyDataset(CleanDataset(xs[:, None]), samples)


def equilateral():
    ang = np.deg2rad([90.0, 210.0, 330.0])
    return CleanDataset(np.stack([np.cos(ang), np.sin(ang)], axis=1))


@pytest.fixture
def two_point():
    return noisy_with_extremes([0.0, 1.0], -0.1, 0.1)
