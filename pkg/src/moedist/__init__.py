"""Mixture-of-experts distributional regression fitted by first-order methods."""
from .api import (FittedModel, coef, component_means, fit_spec, get_pis, get_stats, inflareg,
                  inflareg_spec, mixdistreg, mixdistreg_spec, oinreg, sammer, sammer_spec,
                  zinreg, zoinreg)
from .deepnet import LayerSpec, default_architecture
from .distributions import Bernoulli, Family, Laplace, Normal, PointMass, Poisson
from .exceptions import MoeDistError
from .formula import parse_formula
from .mixture import MixtureModel, MixtureSpec, assemble, make_mixture
from .simulate import simulate
from .train import OptimizerConfig, TrainConfig, train

__all__ = [
    "Bernoulli", "Family", "FittedModel", "LayerSpec", "Laplace", "MixtureModel", "MixtureSpec",
    "MoeDistError", "Normal", "OptimizerConfig", "PointMass", "Poisson", "TrainConfig",
    "assemble", "coef", "component_means", "default_architecture", "fit_spec", "get_pis",
    "get_stats", "inflareg", "inflareg_spec", "make_mixture", "mixdistreg", "mixdistreg_spec",
    "oinreg", "parse_formula", "sammer", "sammer_spec", "simulate", "train", "zinreg", "zoinreg",
]
