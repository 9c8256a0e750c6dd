"""Shared domain types: parameter vectors, individuals, populations, ranking.

Parameter vectors are plain 1-D float64 numpy arrays; fitness is a plain
float where lower is better (empirical risk). Everything here is value
data with no shared mutable state, so instances can move freely between
worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EsgdError",
    "StaleFitnessError",
    "OPTIMIZER_FAMILIES",
    "MOMENTUM_FAMILIES",
    "OptimizerSpec",
    "OptimizerState",
    "Individual",
    "Population",
    "as_params",
    "individual_seed",
    "spawn_rng",
    "rank_population",
    "m_elitist_average_fitness",
]


class EsgdError(Exception):
    """Base class for errors raised by this package."""


class StaleFitnessError(EsgdError):
    """An operation required a valid cached fitness but found none."""


OPTIMIZER_FAMILIES = ("plain-sgd", "momentum-sgd", "nesterov-sgd", "adam")
MOMENTUM_FAMILIES = ("momentum-sgd", "nesterov-sgd")

# Purpose tags for seed derivation; every random stream in a run is keyed
# by (master_seed, tag, ...) so resume and worker count never change results.
SEED_TAG_INIT = 1
SEED_TAG_GENERATION = 2
SEED_TAG_EVOLUTION = 3


def as_params(values) -> np.ndarray:
    """Coerce to a contiguous 1-D float64 parameter vector."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"parameter vector must be 1-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class OptimizerSpec:
    """A gradient update rule plus the hyper-parameters sampled for it."""

    family: str
    learning_rate: float
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self) -> None:
        if self.family not in OPTIMIZER_FAMILIES:
            raise ValueError(f"unknown optimizer family {self.family!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.family in MOMENTUM_FAMILIES:
            if not 0.0 <= self.momentum < 1.0:
                raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        elif self.momentum != 0.0:
            raise ValueError(f"{self.family} does not use momentum")

    def describe(self) -> str:
        if self.family == "adam":
            return f"adam, lr={self.learning_rate:.3g}"
        nesterov = "T" if self.family == "nesterov-sgd" else "F"
        return (
            f"sgd, nesterov={nesterov}, lr={self.learning_rate:.3g}, "
            f"momentum={self.momentum:.3g}"
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "beta1": self.beta1,
            "beta2": self.beta2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerSpec":
        return cls(**d)


@dataclass
class OptimizerState:
    """Per-individual accumulators for the update rules.

    velocity is used by the momentum/nesterov families; m, v and the step
    counter t by adam. Arrays always match the parameter dimension. State
    is zeroed whenever an individual changes optimizer family or is a
    freshly created offspring.
    """

    velocity: np.ndarray | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    @classmethod
    def zeros(cls, dim: int, family: str) -> "OptimizerState":
        if family == "adam":
            return cls(m=np.zeros(dim), v=np.zeros(dim), t=0)
        if family in MOMENTUM_FAMILIES:
            return cls(velocity=np.zeros(dim))
        return cls()

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            velocity=None if self.velocity is None else self.velocity.copy(),
            m=None if self.m is None else self.m.copy(),
            v=None if self.v is None else self.v.copy(),
            t=self.t,
        )


@dataclass
class Individual:
    """One candidate parameter vector with its optimizer assignment.

    fitness is a cached value of the designated fitness dataset; None marks
    it stale. Any code that mutates params must set fitness back to None.
    """

    id: int
    params: np.ndarray
    spec: OptimizerSpec
    opt_state: OptimizerState
    fitness: float | None = None
    origin: str = "initial"  # initial | sgd-survivor | offspring
    rng_seed: int = 0

    @property
    def fitness_valid(self) -> bool:
        return self.fitness is not None

    def require_fitness(self) -> float:
        if self.fitness is None:
            raise StaleFitnessError(f"stale fitness for individual {self.id}")
        return self.fitness

    def set_params(self, params: np.ndarray) -> None:
        """Replace the parameter vector, invalidating the cached fitness."""
        self.params = params
        self.fitness = None

    def snapshot(self) -> "Individual":
        """Deep copy for back-off restore points."""
        return Individual(
            id=self.id,
            params=self.params.copy(),
            spec=self.spec,
            opt_state=self.opt_state.copy(),
            fitness=self.fitness,
            origin=self.origin,
            rng_seed=self.rng_seed,
        )


@dataclass
class Population:
    """Ordered collection of individuals plus evolution bookkeeping."""

    members: list[Individual]
    generation: int = 0
    mu: int = 0
    lambd: int = 0
    m: int = 0
    next_id: int = 0

    def __post_init__(self) -> None:
        if self.mu == 0:
            self.mu = len(self.members)
        if self.next_id <= max((ind.id for ind in self.members), default=-1):
            self.next_id = max((ind.id for ind in self.members), default=-1) + 1

    def claim_id(self) -> int:
        new_id = self.next_id
        self.next_id += 1
        return new_id

    def fitnesses(self) -> np.ndarray:
        return np.array([ind.require_fitness() for ind in self.members])

    def is_ranked(self) -> bool:
        keys = [(ind.require_fitness(), ind.id) for ind in self.members]
        return all(keys[i] <= keys[i + 1] for i in range(len(keys) - 1))


def individual_seed(master_seed: int, individual_id: int, generation: int) -> int:
    """64-bit seed for one individual's randomness in one generation.

    Pure function of its inputs: two runs with the same configuration see
    bitwise-identical seeds regardless of worker count or scheduling.
    """
    ss = np.random.SeedSequence(
        (master_seed, SEED_TAG_GENERATION, generation, individual_id)
    )
    return int(ss.generate_state(1, np.uint64)[0])


def spawn_rng(*entropy: int) -> np.random.Generator:
    """Deterministic generator keyed by a tuple of non-negative ints."""
    return np.random.default_rng(np.random.SeedSequence(entropy))


def rank_population(pop: Population) -> Population:
    """Sort members ascending by fitness, ties broken by ascending id.

    Every member must carry a valid cached fitness; raises
    StaleFitnessError otherwise. The member list is reordered in place and
    the same Population object is returned.
    """
    for ind in pop.members:
        ind.require_fitness()
    pop.members.sort(key=lambda ind: (ind.fitness, ind.id))
    return pop


def m_elitist_average_fitness(pop: Population, m: int) -> float:
    """Average fitness of the m best individuals of a ranked population."""
    if not 1 <= m <= len(pop.members):
        raise ValueError(f"m must be in [1, {len(pop.members)}], got {m}")
    if not pop.is_ranked():
        raise ValueError("population not ranked; call rank_population first")
    return float(np.mean([ind.require_fitness() for ind in pop.members[:m]]))
