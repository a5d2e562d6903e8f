"""Exponential-family duality primitives and the model-family contract.

The trainer iterates over expectation parameters: a flat vector ``mu`` of
accumulated sufficient statistics. Probabilities are always evaluated through
the dual natural parameters, recovered from ``mu`` by a closed-form maximum
likelihood map (per-block normalization for count blocks, moment matching for
Gaussian blocks). Neither log-partition function of the dual pair is ever
evaluated; every computation routes through that map and through joint log
probabilities.

For an identifiable (minimal) family the two Fisher information matrices are
inverse Jacobians of the coordinate pair: the Jacobian of the mu-to-theta map
is the inverse of the Jacobian of the theta-to-mu map. That identity is what
makes a plain gradient step in ``mu`` a natural-gradient step in ``theta``,
and :func:`fisher_information_mu` exists purely so tests can verify it
numerically on small diagnostic models. The production families here use
redundant count layouts whose mu-to-theta map is scale invariant per block,
so their Fisher matrices are singular along the scale directions; the
diagnostics therefore run on :class:`MinimalJointCategorical`, which carries
an identifiable layout.

Statistic layouts are model-declared flat indexing schemes (class-count block
first, per-class parameter blocks after); the trainer never interprets ``mu``
itself.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any

import numpy as np


class FeasibilityError(ValueError):
    """Expectation parameters outside the feasible region."""


class VocabularyError(ValueError):
    """Instance refers to a word id outside the model's closed vocabulary."""


class ConfigurationError(ValueError):
    """Model, loss, and configuration do not fit together."""


class NumericError(ArithmeticError):
    """Non-finite or degenerate numeric state."""


class DiagnosticsError(ValueError):
    """Diagnostic computation refused (unsupported model or too large)."""


FISHER_DIM_CAP = 64


def log_normalize(log_values: np.ndarray) -> np.ndarray:
    """Exponentiate and normalize a vector of log scores with a max shift."""
    m = np.max(log_values)
    if not np.isfinite(m):
        raise NumericError("all class scores are non-finite; cannot normalize")
    p = np.exp(log_values - m)
    return p / p.sum()


def multinomial_m_step(counts: np.ndarray) -> np.ndarray:
    """Probabilities from a block of positive pseudo-counts."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if not np.all(counts > 0.0):
        raise FeasibilityError(f"multinomial block has non-positive mass: {counts}")
    return counts / total

def gaussian_m_step(n: float, s: float, v: float) -> tuple[float, float]:
    """Mean and standard deviation from (count, sum, sum-of-squares) statistics."""
    if n <= 0.0:
        raise FeasibilityError(f"gaussian block count must be positive, got {n}")
    mean = s / n
    var = v / n - mean * mean
    if var <= 0.0:
        raise FeasibilityError(f"gaussian block variance must be positive, got {var}")
    return mean, math.sqrt(var)


class ExpectationState:
    """Flat expectation parameters plus the training-set size for prior scaling."""

    __slots__ = ("mu", "n")

    def __init__(self, mu: np.ndarray, n: int):
        mu = np.asarray(mu, dtype=np.float64)
        if mu.ndim != 1:
            raise ConfigurationError("mu must be a flat vector")
        if n < 1:
            raise ConfigurationError(f"training-set size must be >= 1, got {n}")
        self.mu = mu.copy()
        self.n = int(n)

    def copy(self) -> "ExpectationState":
        return ExpectationState(self.mu, self.n)


class NaturalParams:
    """Marker base for model parameter bundles produced by the M step."""

    __slots__ = ()


class ConjugatePrior:
    """Conjugate prior acting through a shrinkage weight and a pseudo-count drift.

    ``alpha_bar`` shares the statistic layout of ``mu`` and is also the
    initialization point of training. ``nu`` is the shrinkage weight; where a
    model's blocks carry different weights (the Gaussian blocks do, the count
    block does not), ``nu_mask`` marks the coordinates it applies to.
    """

    __slots__ = ("alpha_bar", "nu", "nu_mask", "nu_vector")

    def __init__(self, alpha_bar: np.ndarray, nu: float, nu_mask: np.ndarray | None = None):
        self.alpha_bar = np.asarray(alpha_bar, dtype=np.float64).copy()
        if nu < 0.0:
            raise ConfigurationError(f"nu must be non-negative, got {nu}")
        self.nu = float(nu)
        if nu_mask is None:
            self.nu_mask = None
            self.nu_vector = np.full(self.alpha_bar.shape, self.nu)
        else:
            self.nu_mask = np.asarray(nu_mask, dtype=bool).copy()
            if self.nu_mask.shape != self.alpha_bar.shape:
                raise ConfigurationError("nu_mask must match alpha_bar's shape")
            self.nu_vector = np.where(self.nu_mask, self.nu, 0.0)


class ModelFamily(ABC):
    """Contract a family must satisfy to be trainable.

    Subclasses declare their statistic layout, supply sufficient statistics
    and the closed-form M step, score documents in log space, and police their
    feasible region. Latent-variable families additionally estimate expected
    statistics; families with a streamlined per-instance update register it
    through ``specialized_losses``.
    """

    name: str = "model"
    n_labels: int
    statistic_dim: int
    latent: bool = False

    # --- statistics and the M step ---------------------------------------

    @abstractmethod
    def sufficient_statistics(self, y: int, x: Any) -> dict[int, float]:
        """Sparse statistic increment for one labeled instance."""

    @abstractmethod
    def m_step(self, state: ExpectationState) -> NaturalParams:
        """Closed-form natural parameters at ``state.mu``; pure, no mutation."""

    def expected_statistics(self, y: int, x: Any, params: NaturalParams, rng) -> dict[int, float]:
        """Expected statistics over latent variables; latent families only."""
        raise ConfigurationError(f"{self.name} has no latent variables to marginalize")

    # --- scoring ----------------------------------------------------------

    @abstractmethod
    def log_joint(self, x: Any, params: NaturalParams, rng=None) -> np.ndarray:
        """log p(y, x) for every label, as a vector."""

    def posterior(self, x: Any, params: NaturalParams, rng=None) -> np.ndarray:
        return log_normalize(self.log_joint(x, params, rng=rng))

    # --- feasible region ----------------------------------------------------

    @abstractmethod
    def feasibility_violation(self, mu: np.ndarray) -> str | None:
        """None if feasible, else a message naming the violated component."""

    def is_feasible(self, mu: np.ndarray) -> bool:
        return self.feasibility_violation(mu) is None

    @abstractmethod
    def check_step_mu(self, mu: np.ndarray, floor: float) -> int:
        """Project ``mu`` back into the feasible region in place.

        ``floor`` is the slack used for the projection. Returns the number of
        coordinates that were actually moved.
        """

    def check_floor(self, rho: float, n: int) -> float:
        """Projection slack for the current step; scales with the step size."""
        return rho / n

    # --- training hooks -----------------------------------------------------

    def init_state(self, prior: ConjugatePrior, n: int, loss: str) -> Any:
        """Fresh training state at the prior point (``mu0 = alpha_bar``)."""
        if prior.alpha_bar.shape != (self.statistic_dim,):
            raise ConfigurationError(
                f"prior has {prior.alpha_bar.shape[0]} coordinates, "
                f"model declares {self.statistic_dim}"
            )
        return ExpectationState(prior.alpha_bar, n)

    def specialized_losses(self) -> frozenset[str]:
        """Losses for which the model supplies its own per-instance update."""
        return frozenset()

    def specialized_update(self, loss: str, y: int, x: Any, state: Any,
                           rho: float, n: int, step_key=None) -> int:
        raise ConfigurationError(f"{self.name} has no specialized {loss} update")

    def params_from_state(self, state: Any) -> NaturalParams:
        """Scoring snapshot for metric evaluation at an epoch boundary."""
        return self.m_step(state)

    # --- diagnostics ----------------------------------------------------------

    def theta_vector(self, mu: np.ndarray) -> np.ndarray:
        """Natural parameters as a flat vector aligned with ``mu`` (diagnostics)."""
        raise DiagnosticsError(f"{self.name} does not expose a flat natural-parameter map")

    def mu_from_theta(self, theta: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`theta_vector` where one exists (diagnostics)."""
        raise DiagnosticsError(f"{self.name} does not expose an inverse parameter map")


def fisher_information_mu(state: ExpectationState, model: ModelFamily,
                          h: float = 1e-6) -> np.ndarray:
    """Jacobian of the mu-to-theta map by central finite differences.

    For an identifiable family this is the Fisher information in expectation
    coordinates, the inverse of the Fisher information in natural coordinates.
    Entries diverge as ``mu`` approaches the boundary of the feasible region,
    and for redundant layouts the matrix is singular along scale directions;
    callers own that interpretation. Refuses models above ``FISHER_DIM_CAP``
    coordinates, this is a test diagnostic, not a production path.
    """
    k = model.statistic_dim
    if k > FISHER_DIM_CAP:
        raise DiagnosticsError(
            f"fisher diagnostic capped at {FISHER_DIM_CAP} coordinates, model has {k}"
        )
    violation = model.feasibility_violation(state.mu)
    if violation is not None:
        raise FeasibilityError(violation)
    jac = np.empty((k, k))
    for j in range(k):
        hi = state.mu.copy()
        lo = state.mu.copy()
        hi[j] += h
        lo[j] -= h
        jac[:, j] = (model.theta_vector(hi) - model.theta_vector(lo)) / (2.0 * h)
    return jac


def fisher_information_theta(theta: np.ndarray, model: ModelFamily,
                             h: float = 1e-6) -> np.ndarray:
    """Jacobian of the theta-to-mu map by central finite differences."""
    k = model.statistic_dim
    if k > FISHER_DIM_CAP:
        raise DiagnosticsError(
            f"fisher diagnostic capped at {FISHER_DIM_CAP} coordinates, model has {k}"
        )
    jac = np.empty((k, k))
    for j in range(k):
        hi = np.array(theta, dtype=float)
        lo = np.array(theta, dtype=float)
        hi[j] += h
        lo[j] -= h
        jac[:, j] = (model.mu_from_theta(hi) - model.mu_from_theta(lo)) / (2.0 * h)
    return jac


class CategoricalParams(NaturalParams):
    """Log cell probabilities of a joint class-token categorical."""

    __slots__ = ("log_p",)

    def __init__(self, log_p: np.ndarray):
        self.log_p = log_p


class MinimalJointCategorical(ModelFamily):
    """Joint distribution over (label, token) cells with identifiable statistics.

    An instance is one labeled token. The statistics are indicators of all
    cells except the last, so ``mu`` is the vector of non-reference cell
    probabilities, the feasible region is the open simplex interior, and the
    mu-to-theta map ``theta_i = ln(mu_i / mu_ref)`` is a bijection. This is the
    family the duality and gradient diagnostics run on, precisely because its
    Fisher matrices are invertible.
    """

    name = "minimal-categorical"

    def __init__(self, n_labels: int, n_words: int):
        if n_labels * n_words < 2:
            raise ConfigurationError("need at least two cells")
        self.n_labels = n_labels
        self.n_words = n_words
        self.n_cells = n_labels * n_words
        self.statistic_dim = self.n_cells - 1

    def cell(self, y: int, w: int) -> int:
        return y * self.n_words + w

    def sufficient_statistics(self, y: int, x: int) -> dict[int, float]:
        if not (0 <= x < self.n_words):
            raise VocabularyError(f"token id {x} outside vocabulary of {self.n_words}")
        c = self.cell(y, x)
        return {} if c == self.statistic_dim else {c: 1.0}

    def cell_probs(self, mu: np.ndarray) -> np.ndarray:
        p = np.empty(self.n_cells)
        p[:-1] = mu
        p[-1] = 1.0 - mu.sum()
        return p

    def m_step(self, state: ExpectationState) -> CategoricalParams:
        violation = self.feasibility_violation(state.mu)
        if violation is not None:
            raise FeasibilityError(violation)
        return CategoricalParams(np.log(self.cell_probs(state.mu)).reshape(self.n_labels, self.n_words))

    def log_joint(self, x: int, params: CategoricalParams, rng=None) -> np.ndarray:
        return params.log_p[:, x]

    def feasibility_violation(self, mu: np.ndarray) -> str | None:
        if np.any(mu <= 0.0):
            i = int(np.argmin(mu))
            return f"cell probability mu[{i}] = {mu[i]} is not positive"
        rest = 1.0 - mu.sum()
        if rest <= 0.0:
            return f"reference cell probability {rest} is not positive"
        return None

    def check_step_mu(self, mu: np.ndarray, floor: float) -> int:
        moved = int(np.count_nonzero(mu < floor))
        np.maximum(mu, floor, out=mu)
        total = mu.sum()
        if total >= 1.0 - floor:
            mu *= (1.0 - floor) / total
            moved += mu.shape[0]
        return moved

    def theta_vector(self, mu: np.ndarray) -> np.ndarray:
        p = self.cell_probs(np.asarray(mu, dtype=float))
        return np.log(p[:-1]) - math.log(p[-1])

    def mu_from_theta(self, theta: np.ndarray) -> np.ndarray:
        e = np.exp(np.asarray(theta, dtype=float))
        return e / (1.0 + e.sum())

    def dirichlet_prior(self, cell_weights: np.ndarray) -> ConjugatePrior:
        """Conjugate prior from per-cell Dirichlet-style weights.

        The non-reference weights become ``alpha_bar`` and the total becomes
        ``nu``; the weights must leave the initialization point inside the
        simplex (sum below one).
        """
        a = np.asarray(cell_weights, dtype=float)
        if a.shape != (self.n_cells,):
            raise ConfigurationError(f"need {self.n_cells} cell weights")
        if np.any(a <= 0.0) or a[:-1].sum() >= 1.0:
            raise ConfigurationError("cell weights must be positive and sum below one off the reference")
        return ConjugatePrior(a[:-1], float(a.sum()))
