"""The training loop: one pass per epoch of per-instance natural-gradient steps.

Each step visits one instance and applies

    E step:      loss gradient direction at the current parameters
    check step:  projection of ``mu`` back into the feasible region
    M step:      closed-form natural parameters from ``mu``

with step size ``rho_t = 1 / (1 + lambda * t)``. The counter ``t`` starts at
zero (so the first step uses a full step) and increases once per instance
across all epochs; it never resets, which is what makes the schedule satisfy
the usual stochastic-approximation conditions. Data order is reshuffled every
epoch from a seed derived from (seed, epoch).

Models that register a specialized update for a loss receive the instance,
the current step size, and a deterministic per-step key, and do all three
sub-steps themselves; everything else goes through the generic flat-vector
path driven by the rules in ``losses``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import evaluation, losses
from .expfam import (
    ConfigurationError,
    ConjugatePrior,
    ExpectationState,
    FeasibilityError,
    ModelFamily,
    NaturalParams,
    NumericError,
)


@dataclass
class TrainConfig:
    """Run-level settings. ``lambda_`` is the step-size decay rate.

    ``rel_tol``, when set, stops early once the trained objective's relative
    change between consecutive epochs falls below it; the default is a fixed
    epoch budget, which is the convergence criterion used everywhere here.
    """

    lambda_: float
    epochs: int
    seed: int = 0
    rel_tol: float | None = None

    def __post_init__(self):
        if self.lambda_ <= 0.0:
            raise ConfigurationError(f"lambda must be positive, got {self.lambda_}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}")


class LearningRateSchedule:
    """The decaying step size ``1 / (1 + lambda * t)`` with a monotone counter."""

    __slots__ = ("lambda_", "t")

    def __init__(self, lambda_: float, t: int = 0):
        self.lambda_ = lambda_
        self.t = t

    def current(self) -> float:
        return 1.0 / (1.0 + self.lambda_ * self.t)

    def advance(self) -> None:
        self.t += 1


@dataclass
class TrainTrace:
    """What a training run leaves behind."""

    epochs: list[evaluation.EpochMetrics]
    final_params: NaturalParams
    final_state: Any
    total_steps: int
    clamp_events: list[int] = field(default_factory=list)


def shuffle(data, seed) -> list:
    """Deterministic permutation of ``data`` under the given seed."""
    rng = np.random.default_rng(seed)
    return [data[i] for i in rng.permutation(len(data))]


def check_step(state: ExpectationState, model: ModelFamily, floor: float) -> int:
    """Project the state's ``mu`` into the feasible region; count moved entries."""
    return model.check_step_mu(state.mu, floor)


def step(state: ExpectationState, instance, model: ModelFamily, loss_fn,
         prior: ConjugatePrior, rho: float, n: int, params: NaturalParams,
         rng=None, t: int | None = None) -> int:
    """One generic E step plus check step on a flat expectation state."""
    grad = loss_fn(instance, params, model, rng=rng)
    mu = state.mu
    if prior.nu != 0.0:
        mu *= 1.0 - rho * grad.mu_coeff - rho * prior.nu_vector / n
    elif grad.mu_coeff != 0.0:
        mu *= 1.0 - rho * grad.mu_coeff
    if grad.prior_add:
        mu += (rho / n) * prior.alpha_bar
    for i, v in grad.delta.items():
        if not np.isfinite(v):
            where = f" at step {t}" if t is not None else ""
            raise NumericError(f"non-finite gradient component for coordinate {i}{where}")
        mu[i] += rho * v
    return check_step(state, model, model.check_floor(rho, n))


def sdem_train(data, model: ModelFamily, loss: str, prior: ConjugatePrior,
               config: TrainConfig, heldout=None) -> TrainTrace:
    """Train ``model`` on ``data`` and return the per-epoch trace.

    ``data`` and ``heldout`` are sequences of (label id, instance) pairs.
    Metrics are evaluated on the end-of-epoch snapshot with a fixed evaluation
    seed (``config.seed``), so a saved final model re-evaluates to the final
    row exactly.
    """
    loss = losses.resolve_loss(loss)
    data = list(data)
    if not data:
        raise ConfigurationError("training data is empty")
    n = len(data)
    specialized = loss in model.specialized_losses()
    if model.latent and not specialized:
        probe = model.expected_statistics
        if probe.__func__ is ModelFamily.expected_statistics:
            raise ConfigurationError(
                f"loss {loss!r} needs expected statistics, which {model.name} does not provide"
            )
    if not specialized:
        violation = model.feasibility_violation(prior.alpha_bar)
        if violation is not None:
            raise FeasibilityError(f"prior initialization point is infeasible: {violation}")

    state = model.init_state(prior, n, loss)
    params = model.params_from_state(state)
    schedule = LearningRateSchedule(config.lambda_)
    loss_fn = losses.GRADIENTS[loss]
    trace = TrainTrace([], params, state, 0)
    previous_objective = None

    for epoch in range(config.epochs):
        started = time.perf_counter()
        clamps = 0
        for y, x in shuffle(data, [config.seed, epoch]):
            rho = schedule.current()
            if specialized:
                clamps += model.specialized_update(
                    loss, y, x, state, rho, n, step_key=(config.seed, schedule.t)
                )
            else:
                rng = np.random.default_rng([config.seed, schedule.t]) if model.latent else None
                clamps += step(state, (y, x), model, loss_fn, prior, rho, n,
                               params, rng=rng, t=schedule.t)
                params = model.m_step(state)
            schedule.advance()
        params = model.params_from_state(state)
        wall = time.perf_counter() - started
        trace.epochs.append(
            evaluation.epoch_metrics(epoch, data, heldout, model, params, n,
                                     seed=config.seed, wall_seconds=wall)
        )
        trace.clamp_events.append(clamps)

        if config.rel_tol is not None:
            row = trace.epochs[-1]
            objective = {
                "ncll": row.train_ncll,
                "hinge": row.train_hinge,
            }.get(loss)
            if objective is None:
                objective = evaluation.mean_nll(data, model, params, seed=config.seed)
            if previous_objective is not None:
                denom = max(abs(previous_objective), 1e-12)
                if abs(objective - previous_objective) / denom < config.rel_tol:
                    previous_objective = objective
                    break
            previous_objective = objective

    trace.final_params = params
    trace.final_state = state
    trace.total_steps = schedule.t
    return trace
