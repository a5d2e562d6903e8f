"""Per-instance gradient rules for the three training objectives.

Each rule reports the sparse statistic direction ``delta`` and the loss's own
multiplier on ``mu`` (``mu_coeff``); the trainer combines them with the prior
into

    mu  <-  (1 - rho * mu_coeff - rho * nu / n) * mu + rho * (delta + alpha_bar / n)

applied coordinate-wise, with ``nu`` zeroed outside the prior's mask. The
negative log-likelihood rule carries ``mu_coeff = 1`` (its gradient contains
the model expectation itself); the conditional and hinge rules carry zero.

Fully observed families contribute raw sufficient statistics. Latent families
contribute conditional expectations of the statistics given the instance,
estimated by the model (by sampling, in general), with the same algebra on
top.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .expfam import ConfigurationError, ModelFamily, NaturalParams, NumericError


@dataclass
class LossGradient:
    """Sparse update direction plus the loss's own shrinkage on ``mu``."""

    delta: dict[int, float] = field(default_factory=dict)
    mu_coeff: float = 0.0
    prior_add: bool = True


def _merge(into: dict[int, float], other: dict[int, float], scale: float) -> None:
    for i, v in other.items():
        into[i] = into.get(i, 0.0) + scale * v


def _class_statistics(model: ModelFamily, y: int, x: Any, params: NaturalParams, rng):
    if model.latent:
        return model.expected_statistics(y, x, params, rng)
    return model.sufficient_statistics(y, x)


def nll_grad(instance, params: NaturalParams, model: ModelFamily, rng=None) -> LossGradient:
    """Joint likelihood rule: follow the instance's (expected) statistics."""
    y, x = instance
    return LossGradient(dict(_class_statistics(model, y, x, params, rng)), mu_coeff=1.0)


def ncll_grad(instance, params: NaturalParams, model: ModelFamily, rng=None) -> LossGradient:
    """Conditional likelihood rule: observed statistics minus their posterior blend."""
    y, x = instance
    post = model.posterior(x, params, rng=rng)
    delta: dict[int, float] = {}
    if model.latent:
        rngs = rng.spawn(model.n_labels)
        for k in range(model.n_labels):
            scale = -float(post[k])
            if k == y:
                scale += 1.0
            if scale != 0.0:
                _merge(delta, model.expected_statistics(k, x, params, rngs[k]), scale)
    else:
        _merge(delta, model.sufficient_statistics(y, x), 1.0)
        for k in range(model.n_labels):
            if post[k] != 0.0:
                _merge(delta, model.sufficient_statistics(k, x), -float(post[k]))
    return LossGradient(delta, mu_coeff=0.0)


def runner_up(log_joint: np.ndarray, y: int) -> int:
    """Best label other than ``y``; ties resolve to the lowest label id."""
    best = -1
    best_val = -np.inf
    for k in range(log_joint.shape[0]):
        if k == y:
            continue
        v = log_joint[k]
        if v > best_val:
            best = k
            best_val = v
    return best


def hinge_grad(instance, params: NaturalParams, model: ModelFamily, rng=None) -> LossGradient:
    """Margin rule: push the true label away from its runner-up when the
    joint log-probability margin is at most one; otherwise leave only the
    shrinkage and prior drift (``delta`` empty)."""
    y, x = instance
    lj = model.log_joint(x, params, rng=rng)
    if not np.isfinite(np.max(lj)):
        raise NumericError("all class scores are non-finite in the margin test")
    yb = runner_up(lj, y)
    margin = float(lj[y] - lj[yb])
    if margin > 1.0:
        return LossGradient({}, mu_coeff=0.0)
    delta: dict[int, float] = {}
    if model.latent:
        rngs = rng.spawn(2)
        _merge(delta, model.expected_statistics(y, x, params, rngs[0]), 1.0)
        _merge(delta, model.expected_statistics(yb, x, params, rngs[1]), -1.0)
    else:
        _merge(delta, model.sufficient_statistics(y, x), 1.0)
        _merge(delta, model.sufficient_statistics(yb, x), -1.0)
    return LossGradient(delta, mu_coeff=0.0)


GRADIENTS = {"nll": nll_grad, "ncll": ncll_grad, "hinge": hinge_grad}

LOSSES = tuple(GRADIENTS)


def resolve_loss(loss: str) -> str:
    key = loss.lower()
    if key not in GRADIENTS:
        raise ConfigurationError(f"unknown loss {loss!r}, expected one of {LOSSES}")
    return key
