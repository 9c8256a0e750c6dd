"""Gradient-free (mu/rho+lambda) evolution step.

Parents are drawn by roulette-wheel selection (better fitness, i.e. lower
risk, gets a larger wheel slice), offspring are intermediate
recombinations of rho parents plus isotropic Gaussian noise, and
survivors are the m best of the combined parent+offspring pool together
with mu-m uniformly drawn non-elites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Individual,
    OptimizerState,
    Population,
    rank_population,
)

__all__ = [
    "EvolutionParams",
    "selection_weights",
    "roulette_select",
    "recombine_mutate",
    "m_elitist_select",
    "evolution_step",
]

# Relative floor added to the best-shifted weights so the worst individual
# keeps a nonzero selection probability.
WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class EvolutionParams:
    rho: int
    lambd: int
    sigma_k: float
    m: int

    def __post_init__(self) -> None:
        if self.rho < 1:
            raise ValueError("rho must be >= 1")
        if self.lambd < 0:
            raise ValueError("lambda must be >= 0")
        if self.sigma_k < 0:
            raise ValueError("sigma_k must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")


def selection_weights(pop: Population, scheme: str = "shifted") -> np.ndarray:
    """Normalized selection weights, strictly decreasing in fitness value.

    "shifted" weighs by (f_max - f_j + delta) with a small relative floor
    delta; "rank" ignores fitness magnitudes and weighs linearly by rank.
    Uniform weights when every fitness is equal.
    """
    if not pop.members:
        raise ValueError("empty population")
    fits = pop.fitnesses()
    if not np.isfinite(fits).all():
        raise ValueError("selection weights need finite fitnesses")
    n = len(fits)
    if scheme == "rank":
        if not pop.is_ranked():
            raise ValueError("rank weighting requires a ranked population")
        raw = np.arange(n, 0, -1, dtype=np.float64)
    elif scheme == "shifted":
        f_max = fits.max()
        f_min = fits.min()
        if f_max == f_min:
            return np.full(n, 1.0 / n)
        raw = f_max - fits + WEIGHT_FLOOR * (f_max - f_min)
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    return raw / raw.sum()


def roulette_select(
    pop: Population, rho: int, rng: np.random.Generator, scheme: str = "shifted"
) -> list[Individual]:
    """Draw rho parents with replacement by cumulative-weight inversion."""
    if rho > len(pop.members):
        raise ValueError(f"rho={rho} exceeds population size {len(pop.members)}")
    weights = selection_weights(pop, scheme)
    cum = np.cumsum(weights)
    draws = rng.random(rho)
    picks = np.minimum(np.searchsorted(cum, draws, side="right"), len(weights) - 1)
    return [pop.members[i] for i in picks]


def recombine_mutate(
    parents: list[np.ndarray], sigma_k: float, rng: np.random.Generator
) -> np.ndarray:
    """Intermediate recombination plus N(0, sigma_k**2) noise per coordinate."""
    if not parents:
        raise ValueError("need at least one parent")
    dim = parents[0].shape
    for p in parents[1:]:
        if p.shape != dim:
            raise ValueError(f"parent dimension mismatch: {p.shape} vs {dim}")
    child = np.mean(parents, axis=0)
    return child + sigma_k * rng.standard_normal(dim)


def m_elitist_select(
    parents: Population, offspring: list[Individual], m: int, rng: np.random.Generator
) -> Population:
    """Keep the m best of parents+offspring plus mu-m random non-elites.

    Ties rank by ascending id, so a parent beats an identical clone. The
    returned population is ranked and its generation counter incremented.
    """
    if not 1 <= m <= parents.mu:
        raise ValueError(f"m must be in [1, {parents.mu}], got {m}")
    pool = list(parents.members) + list(offspring)
    for ind in pool:
        ind.require_fitness()
    pool.sort(key=lambda ind: (ind.fitness, ind.id))
    elites = pool[:m]
    rest = pool[m:]
    need = parents.mu - m
    assert need <= len(rest), "candidate pool smaller than survivor count"
    chosen = [rest[i] for i in rng.choice(len(rest), size=need, replace=False)] if need else []
    new_pop = Population(
        members=elites + chosen,
        generation=parents.generation + 1,
        mu=parents.mu,
        lambd=parents.lambd,
        m=parents.m,
        next_id=parents.next_id,
    )
    return rank_population(new_pop)


def evolution_step(
    pop: Population,
    problem,
    ep: EvolutionParams,
    rng: np.random.Generator,
    scheme: str = "shifted",
    fitness_map=None,
    fitness_dataset: str = "train",
) -> tuple[Population, float]:
    """One offspring-generation + m-elitist selection round.

    Returns the new population and the fraction of its m elites whose
    origin is this step's offspring. Parent parameter vectors are never
    mutated. With lambda=0 the population is returned unchanged.
    """
    if ep.lambd == 0:
        return pop, 0.0
    if not pop.is_ranked():
        raise ValueError("population must be ranked before an evolution step")

    offspring: list[Individual] = []
    for _ in range(ep.lambd):
        chosen = roulette_select(pop, ep.rho, rng, scheme)
        child_params = recombine_mutate([c.params for c in chosen], ep.sigma_k, rng)
        spec = chosen[0].spec  # placeholder lineage; resampled before next SGD step
        offspring.append(
            Individual(
                id=pop.claim_id(),
                params=child_params,
                spec=spec,
                opt_state=OptimizerState.zeros(child_params.size, spec.family),
                fitness=None,
                origin="offspring",
                rng_seed=0,
            )
        )

    def evaluate(ind: Individual) -> None:
        fit = problem.fitness(ind.params, fitness_dataset)
        # Divergent offspring sort to the back instead of poisoning the pool.
        ind.fitness = fit if math.isfinite(fit) else math.inf

    run = fitness_map or (lambda fn, items: [fn(x) for x in items])
    run(evaluate, offspring)

    new_pop = m_elitist_select(pop, offspring, ep.m, rng)
    elite_offspring = sum(1 for ind in new_pop.members[: ep.m] if ind.origin == "offspring")
    return new_pop, elite_offspring / ep.m
