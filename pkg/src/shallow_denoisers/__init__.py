"""Shallow ReLU denoisers: minimal-cost closed forms, training, and Gaussian-moment losses."""

from .baselines import EmmseDenoiser, emmse, nn1
from .closed_form import (
    PiecewiseLinear1D,
    RankOneSumDenoiser,
    RankOneUnit,
    build_1d,
    build_acute_simplex,
    build_colinear,
    build_obtuse_simplex,
    build_perturbed_rays,
    build_rays,
    evaluate,
    representation_cost,
    univariate_minimizer,
)
from .geometry import CleanDataset, NoisyDataset, check_well_separated, classify_simplex
from .network import ShallowNet, balance, balanced_cost, from_closed_form, init_net, loss_and_grad
from .training import TrainConfig, gen_noisy, train

__version__ = "0.1.0"
