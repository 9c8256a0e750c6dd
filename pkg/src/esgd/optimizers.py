"""Gradient-based update rules and the per-generation SGD step with back-off.

Update rules are pure functions of (params, state, spec, grad). The SGD
step runs one individual for a number of epochs; after every epoch the
fitness is re-evaluated and, on strict degradation, the individual is
restored to its pre-epoch snapshot (params, optimizer state and cached
fitness) with the configured back-off probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import EsgdError, Individual, MOMENTUM_FAMILIES, OptimizerSpec, OptimizerState, spawn_rng

__all__ = [
    "ADAM_EPS",
    "DivergentGradientError",
    "GradientSample",
    "sgd_step",
    "adam_step",
    "apply_update",
    "run_sgd_epochs",
]

ADAM_EPS = 1e-8

# Sub-stream tags under an individual's per-generation seed.
SUB_SPEC = 0
SUB_BACKOFF = 1
SUB_SHUFFLE = 2


class DivergentGradientError(EsgdError):
    """A gradient came back with non-finite entries."""


@dataclass(frozen=True)
class GradientSample:
    """Minibatch gradient of the empirical risk plus the batch loss."""

    grad: np.ndarray
    batch_loss: float


def _check_grad(params: np.ndarray, grad: np.ndarray) -> None:
    if grad.shape != params.shape:
        raise ValueError(f"gradient shape {grad.shape} != params shape {params.shape}")
    if not np.isfinite(grad).all():
        raise DivergentGradientError("divergent gradient")


def sgd_step(
    params: np.ndarray,
    state: OptimizerState,
    spec: OptimizerSpec,
    grad: GradientSample,
) -> tuple[np.ndarray, OptimizerState]:
    """One plain/momentum/nesterov update; returns fresh arrays."""
    if spec.family not in ("plain-sgd",) + MOMENTUM_FAMILIES:
        raise ValueError(f"sgd_step cannot apply family {spec.family!r}")
    _check_grad(params, grad.grad)
    if spec.family == "plain-sgd":
        new_params = _kernels.plain_sgd_update(params, grad.grad, spec.learning_rate)
        return new_params, OptimizerState()
    vel = state.velocity if state.velocity is not None else np.zeros_like(params)
    new_params, new_vel = _kernels.sgd_update(
        params,
        vel,
        grad.grad,
        spec.learning_rate,
        spec.momentum,
        spec.family == "nesterov-sgd",
    )
    return new_params, OptimizerState(velocity=new_vel)


def adam_step(
    params: np.ndarray,
    state: OptimizerState,
    spec: OptimizerSpec,
    grad: GradientSample,
) -> tuple[np.ndarray, OptimizerState]:
    """One bias-corrected adam update; returns fresh arrays."""
    if spec.family != "adam":
        raise ValueError(f"adam_step cannot apply family {spec.family!r}")
    _check_grad(params, grad.grad)
    m = state.m if state.m is not None else np.zeros_like(params)
    v = state.v if state.v is not None else np.zeros_like(params)
    t = state.t + 1
    new_params, new_m, new_v = _kernels.adam_update(
        params, m, v, grad.grad, spec.learning_rate, spec.beta1, spec.beta2, ADAM_EPS, t
    )
    return new_params, OptimizerState(m=new_m, v=new_v, t=t)


def apply_update(
    params: np.ndarray,
    state: OptimizerState,
    spec: OptimizerSpec,
    grad: GradientSample,
) -> tuple[np.ndarray, OptimizerState]:
    if spec.family == "adam":
        return adam_step(params, state, spec, grad)
    return sgd_step(params, state, spec, grad)


def run_sgd_epochs(
    ind: Individual,
    problem,
    k_s: int,
    p_backoff: float,
    rng: np.random.Generator,
    batch_size: int = 32,
    fitness_dataset: str = "train",
) -> tuple[Individual, int]:
    """Run k_s epochs of minibatch updates on one individual.

    Minibatch order each epoch is a seeded shuffle derived from the
    individual's rng_seed and the epoch index; rng supplies only the
    back-off coin flips. An epoch whose fitness strictly degrades is
    rolled back (params, optimizer state and fitness) with probability
    p_backoff; an epoch that diverges (non-finite gradient or fitness) is
    always rolled back. The individual is mutated in place and returned
    with a valid cached fitness.
    """
    if k_s < 1:
        raise ValueError("k_s must be >= 1")
    ind.require_fitness()
    n = problem.train_size()
    batch = min(batch_size, n)
    backed_off = 0

    for epoch in range(k_s):
        before = ind.snapshot()
        order = spawn_rng(ind.rng_seed, SUB_SHUFFLE, epoch).permutation(n)
        diverged = False
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            try:
                grad = problem.minibatch_gradient(ind.params, idx)
                new_params, new_state = apply_update(ind.params, ind.opt_state, ind.spec, grad)
            except DivergentGradientError:
                diverged = True
                break
            if not np.isfinite(new_params).all():
                diverged = True
                break
            ind.params = new_params
            ind.opt_state = new_state
        ind.fitness = None

        if not diverged:
            new_fitness = problem.fitness(ind.params, fitness_dataset)
            if np.isfinite(new_fitness):
                ind.fitness = new_fitness

        if ind.fitness is None:
            # Divergent epoch: unconditional rollback.
            _restore(ind, before)
            backed_off += 1
            continue
        if ind.fitness > before.fitness and rng.random() < p_backoff:
            _restore(ind, before)
            backed_off += 1

    return ind, backed_off


def _restore(ind: Individual, snap: Individual) -> None:
    ind.params = snap.params
    ind.opt_state = snap.opt_state
    ind.fitness = snap.fitness
