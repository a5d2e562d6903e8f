"""Per-class topic-mixture text classifier trained by per-document updates.

Each class owns a bank of topics. A document is scored by running a short
collapsed Gibbs chain over per-word topic assignments under each class's
counts, turning the averaged topic occupancies into mixture proportions, and
scoring every token against the resulting per-class word mixture. Training
moves the same count matrices the scorer reads: the loss picks which class
rows move and with what weight, a chain under each moving row supplies the
expected per-topic word statistics, and decrements clamp at zero with the
per-topic totals booked from the realized change.

As in the multinomial module, smoothing never materializes: a single scalar
``gamma`` accrues the prior mass and is added to every count on read. Chain
dynamics normalize word mass over the whole vocabulary; the final per-class
score normalizes over the document's distinct words, which makes the
one-topic case collapse exactly onto the multinomial scorer.

Chains are seeded from (run seed, step counter, phase, class), so a run is
reproducible regardless of how rows interleave.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expfam import (
    ConfigurationError,
    ConjugatePrior,
    ModelFamily,
    NaturalParams,
    log_normalize,
)
from .losses import runner_up

ESTIMATORS = ("rao_blackwell", "indicator")


@dataclass(frozen=True)
class GibbsConfig:
    """Chain length: discarded warm-up sweeps, then averaged sweeps."""

    burn_in: int
    samples: int

    def __post_init__(self):
        if self.burn_in < 0 or self.samples < 1:
            raise ConfigurationError(
                f"need burn_in >= 0 and samples >= 1, got {self.burn_in}, {self.samples}"
            )


TRAIN_GIBBS = GibbsConfig(burn_in=5, samples=10)
EVAL_GIBBS = GibbsConfig(burn_in=20, samples=50)


class LdaState:
    """Raw training counts for every class: class weights C (labels,), topic
    word counts N (labels, topics, words), cached per-topic totals
    M (labels, topics), the accrued prior correction gamma, and the total
    per-word prior weight eta (each cell's share is eta / topics)."""

    __slots__ = ("C", "N", "M", "gamma", "eta")

    def __init__(self, C, N, M=None, gamma: float = 0.0, eta: float = 0.1):
        self.C = np.array(C, dtype=np.float64)
        self.N = np.array(N, dtype=np.float64)
        if self.N.ndim != 3 or self.C.shape != (self.N.shape[0],):
            raise ConfigurationError("N must be (labels, topics, words) with C per label")
        self.M = self.N.sum(axis=2) if M is None else np.array(M, dtype=np.float64)
        self.gamma = float(gamma)
        self.eta = float(eta)

    @property
    def n_labels(self) -> int:
        return self.N.shape[0]

    @property
    def n_topics(self) -> int:
        return self.N.shape[1]

    @property
    def n_words(self) -> int:
        return self.N.shape[2]

    @property
    def topic_alpha(self) -> float:
        """Symmetric weight of the per-document topic proportions."""
        return 1.0 / self.n_topics

    def copy(self) -> "LdaState":
        return LdaState(self.C, self.N, self.M, self.gamma, self.eta)


def lda_init(n_labels: int, n_topics: int, n_words: int, eta: float = 0.1) -> LdaState:
    """Fresh state: every topic-word cell at eta / topics, class weights at one."""
    if min(n_labels, n_topics, n_words) < 1:
        raise ConfigurationError(
            f"need at least one label, topic and word, got "
            f"{n_labels} x {n_topics} x {n_words}"
        )
    if eta <= 0.0:
        raise ConfigurationError(f"word prior must be positive, got {eta}")
    return LdaState(
        np.ones(n_labels),
        np.full((n_labels, n_topics, n_words), eta / n_topics),
        gamma=0.0,
        eta=eta,
    )


def _draw(weights: np.ndarray, rng) -> int:
    cum = np.cumsum(weights)
    u = rng.random() * cum[-1]
    return min(int(np.searchsorted(cum, u, side="right")), len(weights) - 1)


def gibbs_conditional(i: int, beta: np.ndarray, occupancy: np.ndarray,
                      topic_alpha: float) -> np.ndarray:
    """Resampling weights for distinct word ``i``: the word's emission weight
    per topic times the topic's remaining occupancy plus ``topic_alpha``.
    ``occupancy`` must already exclude word ``i``. Unnormalized."""
    return beta[:, i] * (occupancy + topic_alpha)


def run_gibbs(doc, N_y: np.ndarray, M_y: np.ndarray, gamma: float,
              topic_alpha: float, config: GibbsConfig, rng,
              estimator: str = "rao_blackwell") -> tuple[np.ndarray, np.ndarray]:
    """One per-document chain under one class's counts.

    Each distinct word carries one topic assignment shared by its repeats.
    Returns (expected per-topic word statistics, shape (topics, distinct),
    count-weighted; mean per-topic occupancy over distinct words, shape
    (topics,)), both averaged over the retained sweeps.

    ``rao_blackwell`` averages each word's full resampling distribution,
    ``indicator`` averages the sampled one-hot assignments; the first has
    strictly smaller variance at the same sweep count. With one topic both
    are exact and the chain is skipped.
    """
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    n_topics, n_words = N_y.shape
    d = doc.n_distinct
    if d == 0:
        return np.zeros((n_topics, 0)), np.zeros(n_topics)
    counts = np.asarray(doc.count_values, dtype=np.float64)
    if n_topics == 1:
        return counts[None, :].copy(), np.array([float(d)])

    # Emission weights are frozen for the whole chain: counts do not move
    # while assignments are resampled.
    beta = (N_y[:, doc.word_ids] + gamma) / (M_y + gamma * n_words)[:, None]

    assign = np.empty(d, dtype=np.int64)
    occupancy = np.zeros(n_topics)
    for i in range(d):
        z = _draw(gibbs_conditional(i, beta, occupancy, topic_alpha), rng)
        assign[i] = z
        occupancy[z] += 1.0

    rao_blackwell = estimator == "rao_blackwell"
    responsibility = np.zeros((n_topics, d))
    for sweep in range(config.burn_in + config.samples):
        retain = sweep >= config.burn_in
        for i in range(d):
            occupancy[assign[i]] -= 1.0
            weights = gibbs_conditional(i, beta, occupancy, topic_alpha)
            z = _draw(weights, rng)
            assign[i] = z
            occupancy[z] += 1.0
            if retain and rao_blackwell:
                responsibility[:, i] += weights / weights.sum()
        if retain and not rao_blackwell:
            responsibility[assign, np.arange(d)] += 1.0
    responsibility /= config.samples
    return responsibility * counts, responsibility.sum(axis=1)


def _per_class_rngs(rng, n_labels: int) -> list:
    if isinstance(rng, (list, tuple)):
        if len(rng) != n_labels:
            raise ConfigurationError(
                f"need one generator per label, got {len(rng)} for {n_labels}"
            )
        return list(rng)
    return [rng] * n_labels


def lda_log_scores(doc, state, config: GibbsConfig, rng,
                   estimator: str = "rao_blackwell") -> np.ndarray:
    """Per-class joint log score of a document.

    Per class, a chain's mean occupancies become mixture proportions
    (occupancy + topic weight, normalized), and each token scores against the
    proportion-weighted mixture of topic word probabilities, smoothed over
    the document's distinct words. ``rng`` is either one generator consumed
    across classes in label order or a sequence with one generator per label.
    """
    g = state.gamma
    scores = np.log(state.C + g)
    d = doc.n_distinct
    if not d:
        return scores
    rngs = _per_class_rngs(rng, state.n_labels)
    alpha = state.topic_alpha
    counts = np.asarray(doc.count_values, dtype=np.float64)
    for y in range(state.n_labels):
        _, occupancy = run_gibbs(doc, state.N[y], state.M[y], g, alpha,
                                 config, rngs[y], estimator)
        proportions = (occupancy + alpha) / (d + alpha * state.n_topics)
        word_probs = (state.N[y][:, doc.word_ids] + g) / (state.M[y] + g * d)[:, None]
        scores[y] += float(np.log(proportions @ word_probs) @ counts)
    return scores


def lda_posterior(doc, state, config: GibbsConfig, rng,
                  estimator: str = "rao_blackwell") -> np.ndarray:
    """p(label | document); see ``lda_log_scores`` for the rng contract."""
    return log_normalize(lda_log_scores(doc, state, config, rng, estimator))


def _row_update(state: LdaState, y: int, doc, scale: float,
                stats: np.ndarray) -> int:
    """Add ``scale * stats`` into class ``y``'s rows at the document's words,
    clamp at zero, book the realized change into the totals; counts
    clamped entries."""
    old = state.N[y][:, doc.word_ids]
    raw = old + scale * stats
    clamped = raw < 0.0
    new = np.maximum(raw, 0.0)
    state.N[y][:, doc.word_ids] = new
    state.M[y] += (new - old).sum(axis=1)
    return int(clamped.sum())


def lda_ncll_step(y: int, doc, state: LdaState, rho: float, n: int,
                  config: GibbsConfig, step_key, estimator: str = "rao_blackwell") -> int:
    """One conditional-likelihood step on one labeled document.

    The class posterior is evaluated once and frozen; then every class's rows
    move, the true class by the residual (1 - p) and the rest by their own
    negated posterior, each with expected statistics from its own fresh
    chain. Returns the number of clamped entries.
    """
    state.gamma += (state.eta / state.n_topics) * rho / n
    seed, t = step_key
    post = lda_posterior(
        doc, state, config,
        [np.random.default_rng([seed, t, 0, k]) for k in range(state.n_labels)],
        estimator,
    )
    clamps = 0
    alpha = state.topic_alpha
    for k in range(state.n_labels):
        weight = (1.0 - post[y]) if k == y else -post[k]
        if weight == 0.0 or not doc.n_distinct:
            continue
        stats, _ = run_gibbs(doc, state.N[k], state.M[k], state.gamma, alpha,
                             config, np.random.default_rng([seed, t, 1, k]), estimator)
        clamps += _row_update(state, k, doc, rho * weight, stats)
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


def lda_hinge_step(y: int, doc, state: LdaState, rho: float, n: int,
                   config: GibbsConfig, step_key, estimator: str = "rao_blackwell") -> int:
    """One margin step on one labeled document.

    A margin above one leaves everything but the prior correction alone;
    otherwise only the true row and the runner-up row move, weighted by the
    frozen posterior. Returns the number of clamped entries.
    """
    if state.n_labels < 2:
        raise ConfigurationError("margin updates need at least two labels")
    state.gamma += (state.eta / state.n_topics) * rho / n
    seed, t = step_key
    scores = lda_log_scores(
        doc, state, config,
        [np.random.default_rng([seed, t, 0, k]) for k in range(state.n_labels)],
        estimator,
    )
    yb = runner_up(scores, y)
    margin = float(scores[y] - scores[yb])
    if margin > 1.0:
        return 0
    post = log_normalize(scores)
    clamps = 0
    alpha = state.topic_alpha
    if doc.n_distinct:
        for k, weight in ((y, 1.0 - post[y]), (yb, -post[yb])):
            if weight == 0.0:
                continue
            stats, _ = run_gibbs(doc, state.N[k], state.M[k], state.gamma, alpha,
                                 config, np.random.default_rng([seed, t, 1, k]),
                                 estimator)
            clamps += _row_update(state, k, doc, rho * weight, stats)
    state.C[y] += rho * (1.0 - post[y])
    raw = state.C[yb] - rho * post[yb]
    if raw < 0.0:
        raw = 0.0
        clamps += 1
    state.C[yb] = raw
    return clamps


def lda_nll_step(y: int, doc, state: LdaState, rho: float, n: int,
                 config: GibbsConfig, step_key, estimator: str = "rao_blackwell") -> int:
    """One joint-likelihood step on one labeled document.

    Expected statistics come from a chain under the pre-step counts, then
    everything (including the prior correction) shrinks by (1 - rho), the
    prior re-accrues, and only the true class's rows gain mass. All
    increments are nonnegative, so nothing clamps.
    """
    seed, t = step_key
    stats, _ = run_gibbs(doc, state.N[y], state.M[y], state.gamma,
                         state.topic_alpha, config,
                         np.random.default_rng([seed, t, 1, y]), estimator)
    keep = 1.0 - rho
    state.C *= keep
    state.N *= keep
    state.M *= keep
    state.gamma = keep * state.gamma + (state.eta / state.n_topics) * rho / n
    if doc.n_distinct:
        old = state.N[y][:, doc.word_ids]
        new = old + rho * stats
        state.N[y][:, doc.word_ids] = new
        state.M[y] += (new - old).sum(axis=1)
    state.C[y] += rho
    return 0


class LdaParams(NaturalParams):
    """Frozen snapshot of the training counts, scored exactly like the live
    state (the scorer reads counts plus gamma either way)."""

    __slots__ = ("counts",)

    def __init__(self, state: LdaState):
        self.counts = state.copy()


class LdaClassifier(ModelFamily):
    """The per-class topic-mixture family.

    All three losses train through the specialized per-document steps above;
    there is no flat-vector path because the expected statistics require
    per-document chains anyway. Scoring a document is itself stochastic, so
    evaluation draws its chains from the generator the caller passes in.
    """

    name = "lda"
    latent = True

    def __init__(self, n_labels: int, n_topics: int, n_words: int,
                 eta: float = 0.1,
                 train_gibbs: GibbsConfig = TRAIN_GIBBS,
                 eval_gibbs: GibbsConfig = EVAL_GIBBS,
                 estimator: str = "rao_blackwell"):
        if min(n_labels, n_topics, n_words) < 1:
            raise ConfigurationError(
                f"need at least one label, topic and word, got "
                f"{n_labels} x {n_topics} x {n_words}"
            )
        if estimator not in ESTIMATORS:
            raise ConfigurationError(
                f"estimator must be one of {ESTIMATORS}, got {estimator!r}"
            )
        self.n_labels = n_labels
        self.n_topics = n_topics
        self.n_words = n_words
        self.eta = float(eta)
        self.train_gibbs = train_gibbs
        self.eval_gibbs = eval_gibbs
        self.estimator = estimator
        self.statistic_dim = n_labels + n_labels * n_topics * n_words

    def default_prior(self) -> ConjugatePrior:
        """Flat layout mirror of ``lda_init``: class block at one, every
        topic-word cell at eta / topics, no shrinkage."""
        if self.eta <= 0.0:
            raise ConfigurationError(f"word prior must be positive, got {self.eta}")
        cell = self.eta / self.n_topics
        alpha_bar = np.concatenate(
            [np.ones(self.n_labels),
             np.full(self.n_labels * self.n_topics * self.n_words, cell)]
        )
        return ConjugatePrior(alpha_bar, 0.0)

    # --- contract -------------------------------------------------------------

    def sufficient_statistics(self, y: int, doc) -> dict[int, float]:
        raise ConfigurationError(
            "topic assignments are unobserved; train through the specialized updates"
        )

    def m_step(self, state) -> NaturalParams:
        raise ConfigurationError(
            "topic assignments are unobserved; train through the specialized updates"
        )

    def log_joint(self, doc, params: LdaParams, rng=None) -> np.ndarray:
        if rng is None:
            raise ConfigurationError(
                "scoring runs chains; pass the generator that seeds them"
            )
        return lda_log_scores(doc, params.counts, self.eval_gibbs, rng, self.estimator)

    def feasibility_violation(self, mu: np.ndarray) -> str | None:
        if mu.shape != (self.statistic_dim,):
            return f"expected {self.statistic_dim} coordinates, got {mu.shape}"
        if np.any(mu <= 0.0):
            return "all class and topic-word pseudo-counts must be positive"
        return None

    def check_step_mu(self, mu: np.ndarray, floor: float) -> int:
        below = mu < floor
        moved = int(below.sum())
        if moved:
            mu[below] = floor
        return moved

    # --- specialized training ---------------------------------------------------

    def init_state(self, prior: ConjugatePrior, n: int, loss: str) -> LdaState:
        if prior.nu != 0.0:
            raise ConfigurationError(
                "the gamma-corrected updates assume no shrinkage weight"
            )
        class_block = prior.alpha_bar[: self.n_labels]
        word_block = prior.alpha_bar[self.n_labels:].reshape(
            self.n_labels, self.n_topics, self.n_words
        )
        cell = float(word_block.flat[0])
        if cell <= 0.0 or not np.all(word_block == cell):
            raise ConfigurationError(
                "the gamma correction needs one positive prior weight shared "
                "by every topic-word count"
            )
        return LdaState(class_block, word_block, eta=cell * self.n_topics)

    def specialized_losses(self) -> frozenset[str]:
        return frozenset(("nll", "ncll", "hinge"))

    def specialized_update(self, loss, y, doc, state: LdaState,
                           rho, n, step_key=None) -> int:
        if step_key is None:
            raise ConfigurationError(
                "latent updates need the per-step key that seeds their chains"
            )
        step = {"nll": lda_nll_step, "ncll": lda_ncll_step, "hinge": lda_hinge_step}[loss]
        return step(y, doc, state, rho, n, self.train_gibbs, step_key, self.estimator)

    def params_from_state(self, state) -> LdaParams:
        if isinstance(state, LdaState):
            return LdaParams(state)
        raise ConfigurationError("training always leaves raw counts; got a flat state")
