"""Multinomial naive Bayes text classifier with incremental prior correction.

Training never materializes smoothed counts. The state keeps raw pseudo-count
matrices plus one scalar ``gamma`` standing in for the prior mass accumulated
so far; every scoring lookup reads a count as stored value plus ``gamma``.
That keeps the per-document update cost linear in the document's distinct
words while the prior keeps drifting everything away from the boundary.

Two scorers coexist deliberately. The training-time scorer normalizes each
class's word mass over the document's distinct words only (``M + gamma * |d|``),
which is what the per-instance updates and the margin tests consume. The
exported model from ``mnb_finalize`` normalizes over the whole vocabulary
(``M + gamma * |W|``); the two agree exactly when ``gamma`` is zero and drift
apart slowly as prior mass accrues.

Count updates clamp at zero, and the cached per-class totals ``M`` are kept
coherent by booking the change that actually landed in ``N`` rather than the
attempted one, so a clamped entry never desynchronizes the cache.
"""

from __future__ import annotations

import math

import numpy as np

from .expfam import (
    ConfigurationError,
    ConjugatePrior,
    ExpectationState,
    FeasibilityError,
    ModelFamily,
    NaturalParams,
    log_normalize,
    multinomial_m_step,
)
from .losses import runner_up

PRIOR_MODES = ("unit", "log-vocab")


class MnbState:
    """Raw training state: class counts C, word counts N, cached row totals M,
    accumulated prior correction gamma, and the per-word prior weight alpha
    that drives gamma's growth."""

    __slots__ = ("C", "N", "M", "gamma", "alpha")

    def __init__(self, C, N, M=None, gamma: float = 0.0, alpha: float = 1.0):
        self.C = np.array(C, dtype=np.float64)
        self.N = np.array(N, dtype=np.float64)
        if self.N.ndim != 2 or self.C.shape != (self.N.shape[0],):
            raise ConfigurationError("N must be (labels, words) with C per label")
        self.M = self.N.sum(axis=1) if M is None else np.array(M, dtype=np.float64)
        self.gamma = float(gamma)
        self.alpha = float(alpha)

    @property
    def n_labels(self) -> int:
        return self.N.shape[0]

    @property
    def n_words(self) -> int:
        return self.N.shape[1]

    def copy(self) -> "MnbState":
        return MnbState(self.C, self.N, self.M, self.gamma, self.alpha)


def mnb_init(n_labels: int, n_words: int, alpha: float) -> MnbState:
    """Fresh state: every word count at ``alpha``, class counts at one."""
    if n_labels < 1 or n_words < 1:
        raise ConfigurationError(
            f"need at least one label and one word, got {n_labels} x {n_words}"
        )
    if alpha <= 0.0:
        raise ConfigurationError(f"word prior must be positive, got {alpha}")
    return MnbState(
        np.ones(n_labels),
        np.full((n_labels, n_words), alpha),
        gamma=0.0,
        alpha=alpha,
    )


def mnb_log_scores(doc, state: MnbState) -> np.ndarray:
    """Per-class joint log score of a document under the gamma-corrected counts.

    The word-mass denominator smooths over the document's distinct words, not
    the vocabulary, so this is the training-time scorer (see module docstring).
    """
    g = state.gamma
    scores = np.log(state.C + g)
    if doc.n_distinct:
        emission = np.log(state.N[:, doc.word_ids] + g) @ doc.count_values
        scores = scores + emission - doc.n_tokens * np.log(state.M + g * doc.n_distinct)
    return scores


def mnb_posterior(doc, state: MnbState) -> np.ndarray:
    """p(label | document) under the training-time scorer."""
    return log_normalize(mnb_log_scores(doc, state))


def _decrement_row(N_row: np.ndarray, M: np.ndarray, k: int,
                   wids: np.ndarray, dec: np.ndarray) -> int:
    """Subtract ``dec`` from row ``k`` at ``wids``, clamp at zero, book the
    realized change into ``M[k]``; counts clamped entries."""
    old = N_row[wids]
    raw = old - dec
    clamped = raw < 0.0
    new = np.maximum(raw, 0.0)
    N_row[wids] = new
    M[k] += float((new - old).sum())
    return int(clamped.sum())


def mnb_ncll_update(y: int, doc, state: MnbState, rho: float, n: int) -> int:
    """One conditional-likelihood step on one labeled document.

    The class posterior is evaluated once, against the state as the document
    arrives, and stays frozen while the rows move: the prior correction
    accrues first, the true row gains mass proportional to the residual
    (1 - p), every other row loses mass proportional to its own posterior,
    and losses clamp at zero. Returns the number of clamped entries.
    """
    state.gamma += state.alpha * rho / n
    post = mnb_posterior(doc, state)
    clamps = 0
    wids = doc.word_ids
    if doc.n_distinct:
        coef = rho * (1.0 - post[y])
        old = state.N[y, wids]
        new = old + coef * doc.count_values
        state.N[y, wids] = new
        state.M[y] += float((new - old).sum())
        for k in range(state.n_labels):
            if k == y or post[k] == 0.0:
                continue
            clamps += _decrement_row(state.N[k], state.M, k, wids,
                                     rho * post[k] * doc.count_values)
    state.C[y] += rho * (1.0 - post[y])
    for k in range(state.n_labels):
        if k == y:
            continue
        raw = state.C[k] - rho * post[k]
        if raw < 0.0:
            raw = 0.0
            clamps += 1
        state.C[k] = raw
    return clamps


def mnb_hinge_update(y: int, doc, state: MnbState, rho: float, n: int) -> int:
    """One margin step on one labeled document.

    The runner-up label is the highest-scoring wrong one (ties to the lowest
    id). A margin above one leaves everything but the prior correction alone;
    otherwise only the true row and the runner-up row move, weighted by the
    frozen posterior. Returns the number of clamped entries.
    """
    if state.n_labels < 2:
        raise ConfigurationError("margin updates need at least two labels")
    state.gamma += state.alpha * rho / n
    scores = mnb_log_scores(doc, state)
    yb = runner_up(scores, y)
    margin = float(scores[y] - scores[yb])
    if margin > 1.0:
        return 0
    post = log_normalize(scores)
    clamps = 0
    wids = doc.word_ids
    if doc.n_distinct:
        coef = rho * (1.0 - post[y])
        old = state.N[y, wids]
        new = old + coef * doc.count_values
        state.N[y, wids] = new
        state.M[y] += float((new - old).sum())
        if post[yb] != 0.0:
            clamps += _decrement_row(state.N[yb], state.M, yb, wids,
                                     rho * post[yb] * doc.count_values)
    state.C[y] += rho * (1.0 - post[y])
    raw = state.C[yb] - rho * post[yb]
    if raw < 0.0:
        raw = 0.0
        clamps += 1
    state.C[yb] = raw
    return clamps


class MnbParams(NaturalParams):
    """Normalized class and per-class word distributions, plus their logs.

    Zero probabilities (possible only for raw zero-gamma states with clamped
    counts) score as negative infinity.
    """

    __slots__ = ("class_probs", "word_probs", "log_class", "log_words")

    def __init__(self, class_probs, word_probs):
        self.class_probs = np.asarray(class_probs, dtype=np.float64)
        self.word_probs = np.asarray(word_probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            self.log_class = np.log(self.class_probs)
            self.log_words = np.log(self.word_probs)


def mnb_finalize(state: MnbState) -> MnbParams:
    """Export the state as proper distributions, folding ``gamma`` into every
    count and normalizing word mass over the whole vocabulary."""
    g = state.gamma
    class_counts = state.C + g
    word_counts = state.N + g
    return MnbParams(
        class_counts / class_counts.sum(),
        word_counts / (state.M + g * state.n_words)[:, None],
    )


def laplace_estimate(instances, n_labels: int, n_words: int,
                     alpha: float = 1.0, class_alpha: float = 1.0) -> MnbParams:
    """Batch counting baseline: add ``alpha`` to every word count and
    ``class_alpha`` to every class count, then normalize."""
    word_counts = np.full((n_labels, n_words), alpha)
    class_counts = np.full(n_labels, class_alpha)
    for y, doc in instances:
        class_counts[y] += 1.0
        word_counts[y, doc.word_ids] += doc.count_values
    return MnbParams(
        class_counts / class_counts.sum(),
        word_counts / word_counts.sum(axis=1, keepdims=True),
    )


class MultinomialNB(ModelFamily):
    """The bag-of-words multinomial family over a closed vocabulary.

    The flat statistic layout is the class-count block followed by the
    label-major word-count matrix; that layout drives the generic training
    path (joint-likelihood loss). The conditional and margin losses use the
    specialized per-document updates above instead, which exist because they
    touch only the active rows and smooth through ``gamma`` rather than
    shrinking the whole vector.
    """

    name = "mnb"

    def __init__(self, n_labels: int, n_words: int, fast: bool = True):
        if n_labels < 1 or n_words < 1:
            raise ConfigurationError(
                f"need at least one label and one word, got {n_labels} x {n_words}"
            )
        self.n_labels = n_labels
        self.n_words = n_words
        self.statistic_dim = n_labels + n_labels * n_words
        self.fast = fast

    # --- priors -------------------------------------------------------------

    def default_prior(self, mode: str = "unit") -> ConjugatePrior:
        """Flat conjugate prior: class block at one, word block at ``alpha``
        (one, or the log of the vocabulary size), no shrinkage."""
        if mode not in PRIOR_MODES:
            raise ConfigurationError(f"prior mode must be one of {PRIOR_MODES}, got {mode!r}")
        alpha = 1.0 if mode == "unit" else math.log(self.n_words)
        if alpha <= 0.0:
            raise ConfigurationError(
                f"log-vocab prior needs at least two words, got {self.n_words}"
            )
        alpha_bar = np.concatenate(
            [np.ones(self.n_labels), np.full(self.n_labels * self.n_words, alpha)]
        )
        return ConjugatePrior(alpha_bar, 0.0)

    def _word_alpha(self, prior: ConjugatePrior) -> float:
        block = prior.alpha_bar[self.n_labels:]
        alpha = float(block[0])
        if alpha <= 0.0 or not np.all(block == alpha):
            raise ConfigurationError(
                "the gamma correction needs one positive prior weight shared "
                "by every word count"
            )
        return alpha

    # --- contract -------------------------------------------------------------

    def sufficient_statistics(self, y: int, doc) -> dict[int, float]:
        stats = {y: 1.0}
        base = self.n_labels + y * self.n_words
        for wid, cnt in zip(doc.word_ids, doc.count_values):
            stats[base + int(wid)] = float(cnt)
        return stats

    def _split(self, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return mu[: self.n_labels], mu[self.n_labels:].reshape(self.n_labels, self.n_words)

    def m_step(self, state: ExpectationState) -> MnbParams:
        class_block, word_block = self._split(state.mu)
        word_probs = np.empty_like(word_block)
        for k in range(self.n_labels):
            word_probs[k] = multinomial_m_step(word_block[k])
        return MnbParams(multinomial_m_step(class_block), word_probs)

    def log_joint(self, doc, params: MnbParams, rng=None) -> np.ndarray:
        scores = params.log_class.copy()
        if doc.n_distinct:
            scores += params.log_words[:, doc.word_ids] @ doc.count_values
        return scores

    def batch_log_joint(self, docs, params: MnbParams) -> np.ndarray:
        rows = np.empty((len(docs), self.n_labels))
        for i, doc in enumerate(docs):
            rows[i] = self.log_joint(doc, params)
        return rows

    def feasibility_violation(self, mu: np.ndarray) -> str | None:
        if mu.shape != (self.statistic_dim,):
            return f"expected {self.statistic_dim} coordinates, got {mu.shape}"
        if np.any(mu <= 0.0):
            return "all class and word pseudo-counts must be positive"
        return None

    def check_step_mu(self, mu: np.ndarray, floor: float) -> int:
        below = mu < floor
        moved = int(below.sum())
        if moved:
            mu[below] = floor
        return moved

    # --- specialized training ---------------------------------------------------

    def init_state(self, prior: ConjugatePrior, n: int, loss: str):
        if not (self.fast and loss in ("ncll", "hinge")):
            return super().init_state(prior, n, loss)
        if prior.nu != 0.0:
            raise ConfigurationError(
                "the gamma-corrected updates assume no shrinkage weight"
            )
        class_block, word_block = self._split(prior.alpha_bar)
        return MnbState(class_block, word_block, alpha=self._word_alpha(prior))

    def specialized_losses(self) -> frozenset[str]:
        return frozenset(("ncll", "hinge")) if self.fast else frozenset()

    def specialized_update(self, loss, y, doc, state: MnbState,
                           rho, n, step_key=None) -> int:
        if loss == "ncll":
            return mnb_ncll_update(y, doc, state, rho, n)
        return mnb_hinge_update(y, doc, state, rho, n)

    def params_from_state(self, state) -> MnbParams:
        if isinstance(state, MnbState):
            return mnb_finalize(state)
        return self.m_step(state)
