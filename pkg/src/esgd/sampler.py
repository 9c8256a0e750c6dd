"""Per-generation randomized optimizer assignment with annealed ranges.

Each generation, every individual draws a fresh optimizer: a base family
(sgd or adam), a learning rate from an annealed range, and for sgd a
momentum/nesterov configuration. Annealing shrinks the learning-rate range
geometrically (gamma**k) and the mutation strength harmonically (sigma0/k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import OptimizerSpec

__all__ = [
    "SamplerConfig",
    "PRESETS",
    "annealed_lr_range",
    "mutation_strength",
    "sample_optimizer",
]

BASE_FAMILIES = ("sgd", "adam")


@dataclass(frozen=True)
class SamplerConfig:
    """Ranges and probabilities governing optimizer sampling.

    families maps base family name to a selection weight. lr ranges are
    the initial (a0, b0) per family; generation k draws from
    (gamma**k * a0, gamma**k * b0). lr_scale chooses uniform sampling on a
    linear or log axis within that range.
    """

    families: dict[str, float] = field(
        default_factory=lambda: {"sgd": 0.5, "adam": 0.5}
    )
    sgd_lr_range: tuple[float, float] = (1e-4, 2e-3)
    adam_lr_range: tuple[float, float] = (1e-4, 1e-3)
    gamma: float = 0.9
    sigma0: float = 0.01
    p_use_momentum: float = 0.8
    p_nesterov_given_momentum: float = 0.5
    momentum_range: tuple[float, float] = (0.1, 0.9)
    lr_scale: str = "linear"

    def __post_init__(self) -> None:
        if not self.families:
            raise ValueError("optimizer family mix must not be empty")
        for name, weight in self.families.items():
            if name not in BASE_FAMILIES:
                raise ValueError(f"unknown base family {name!r}")
            if weight < 0:
                raise ValueError(f"negative weight for family {name!r}")
        if sum(self.families.values()) <= 0:
            raise ValueError("family weights must sum to a positive value")
        for lo, hi in (self.sgd_lr_range, self.adam_lr_range):
            if not 0 < lo <= hi:
                raise ValueError(f"invalid lr range ({lo}, {hi})")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")
        for p in (self.p_use_momentum, self.p_nesterov_given_momentum):
            if not 0 <= p <= 1:
                raise ValueError(f"probability out of [0, 1]: {p}")
        lo, hi = self.momentum_range
        if not 0 <= lo <= hi < 1:
            raise ValueError(f"invalid momentum range ({lo}, {hi})")
        if self.lr_scale not in ("linear", "log"):
            raise ValueError(f"lr_scale must be linear or log, got {self.lr_scale!r}")


# Stock configurations. bn50/swb300 carry the speech-task ranges (sgd+adam
# mix); cifar10-style is sgd-only with the fixed 0.9-1.1 multiplicative
# jitter around base rate 0.1, always nesterov with momentum 0.9.
PRESETS: dict[str, SamplerConfig] = {
    "bn50": SamplerConfig(
        families={"sgd": 0.5, "adam": 0.5},
        sgd_lr_range=(1e-4, 2e-3),
        adam_lr_range=(1e-4, 1e-3),
        gamma=0.9,
        sigma0=0.01,
    ),
    "swb300": SamplerConfig(
        families={"sgd": 0.5, "adam": 0.5},
        sgd_lr_range=(1e-2, 3e-2),
        adam_lr_range=(5e-5, 1e-3),
        gamma=0.9,
        sigma0=0.01,
    ),
    "cifar10-style": SamplerConfig(
        families={"sgd": 1.0},
        sgd_lr_range=(0.09, 0.11),
        gamma=1.0,
        sigma0=0.01,
        p_use_momentum=1.0,
        p_nesterov_given_momentum=1.0,
        momentum_range=(0.9, 0.9),
    ),
}


def _base_family(family: str) -> str:
    return "adam" if family == "adam" else "sgd"


def annealed_lr_range(cfg: SamplerConfig, family: str, k: int) -> tuple[float, float]:
    """Learning-rate range after k annealing steps: (gamma**k*a0, gamma**k*b0)."""
    if k < 0:
        raise ValueError(f"annealing step must be >= 0, got {k}")
    a0, b0 = cfg.adam_lr_range if _base_family(family) == "adam" else cfg.sgd_lr_range
    factor = cfg.gamma**k
    return factor * a0, factor * b0


def mutation_strength(cfg: SamplerConfig, k: int) -> float:
    """Gaussian mutation std-dev at generation k >= 1: sigma0 / k."""
    if k < 1:
        raise ValueError(f"mutation schedule starts at generation 1, got k={k}")
    return cfg.sigma0 / k


def sample_optimizer(
    cfg: SamplerConfig, k: int, rng: np.random.Generator
) -> OptimizerSpec:
    """Draw one optimizer spec using the ranges after k annealing steps.

    Draw order is fixed (family, lr, momentum coin, momentum, nesterov
    coin) so a seeded rng reproduces specs bitwise.
    """
    names = [f for f in BASE_FAMILIES if f in cfg.families]
    weights = np.array([cfg.families[f] for f in names])
    cum = np.cumsum(weights / weights.sum())
    base = names[min(int(np.searchsorted(cum, rng.random(), side="right")), len(names) - 1)]

    a_k, b_k = annealed_lr_range(cfg, base, k)
    if cfg.lr_scale == "log":
        lr = math.exp(rng.uniform(math.log(a_k), math.log(b_k)))
    else:
        lr = rng.uniform(a_k, b_k)

    if base == "adam":
        return OptimizerSpec(family="adam", learning_rate=lr)

    if rng.random() < cfg.p_use_momentum:
        momentum = rng.uniform(*cfg.momentum_range)
        if rng.random() < cfg.p_nesterov_given_momentum:
            return OptimizerSpec("nesterov-sgd", lr, momentum=momentum)
        return OptimizerSpec("momentum-sgd", lr, momentum=momentum)
    return OptimizerSpec("plain-sgd", lr)
