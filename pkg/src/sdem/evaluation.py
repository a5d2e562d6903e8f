"""Metrics, the per-epoch record, delimited output, and numeric oracles.

All metrics are pure functions of (instances, model, params) and a seed, so
repeated evaluation of the same snapshot is bit-identical; the seed only
matters for models that score by sampling. Posteriors are clipped at
``CLIP_FLOOR`` before taking logs so a confidently wrong prediction yields a
large finite penalty rather than an infinity.

Perplexity is per evaluation token. The normalized variant divides by the
number of training documents, which is how convergence of the generative fit
is tracked across runs of different sizes.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, fields
from itertools import product
from typing import Any, Callable

import numpy as np

from .expfam import DiagnosticsError, ModelFamily, NaturalParams, NumericError
from .losses import runner_up

CLIP_FLOOR = 1e-300

ENUMERATION_CAP = 1_000_000


@dataclass
class MetricStats:
    """Side-channel counters for a metric pass."""

    clipped: int = 0


@dataclass
class EpochMetrics:
    """One row of the training trace."""

    epoch: int
    train_ncll: float
    train_hinge: float
    train_perplexity: float
    test_perplexity: float
    norm_perplexity: float
    heldout_accuracy: float
    wall_seconds: float


EPOCH_FIELDS = tuple(f.name for f in fields(EpochMetrics))


def score_matrix(instances, model: ModelFamily, params: NaturalParams, seed: int = 0) -> np.ndarray:
    """Joint log score of every instance under every label, one row per instance.

    Uses the model's vectorized scorer when it has one; otherwise scores one
    instance at a time, handing sampling models a per-instance stream derived
    from (seed, position) so interleaving cannot change results.
    """
    batch = getattr(model, "batch_log_joint", None)
    if batch is not None:
        xs = [x for _, x in instances]
        return batch(xs, params)
    rows = np.empty((len(instances), model.n_labels))
    for i, (_, x) in enumerate(instances):
        rng = np.random.default_rng([seed, i]) if model.latent else None
        rows[i] = model.log_joint(x, params, rng=rng)
    return rows


def _log_posteriors(rows: np.ndarray) -> np.ndarray:
    m = rows.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise NumericError("an instance scored non-finite under every label")
    shifted = rows - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ncll_metric(instances, model, params, seed: int = 0, stats: MetricStats | None = None) -> float:
    """Mean negative conditional log-likelihood of the true labels."""
    rows = score_matrix(instances, model, params, seed)
    lp = _log_posteriors(rows)
    ys = np.fromiter((y for y, _ in instances), dtype=np.int64, count=len(instances))
    probs = np.exp(lp[np.arange(len(instances)), ys])
    clipped = probs < CLIP_FLOOR
    if stats is not None:
        stats.clipped += int(clipped.sum())
    return float(-np.log(np.maximum(probs, CLIP_FLOOR)).mean())


def hinge_metric(instances, model, params, seed: int = 0) -> float:
    """Mean hinge penalty on the joint log-probability margin."""
    rows = score_matrix(instances, model, params, seed)
    total = 0.0
    for i, (y, _) in enumerate(instances):
        margin = rows[i, y] - rows[i, runner_up(rows[i], y)]
        total += max(0.0, 1.0 - margin)
    return float(total / len(instances))


def accuracy_metric(instances, model, params, seed: int = 0) -> float:
    """Fraction of instances whose highest-scoring label is the true one.

    Ties go to the lowest label id, deliberately: a scorer must beat the
    default to claim an instance.
    """
    rows = score_matrix(instances, model, params, seed)
    ys = np.fromiter((y for y, _ in instances), dtype=np.int64, count=len(instances))
    return float((rows.argmax(axis=1) == ys).mean())


def _instance_tokens(x: Any) -> int:
    return getattr(x, "n_tokens", 1)


def perplexity_metric(instances, model, params, seed: int = 0,
                      stats: MetricStats | None = None) -> float:
    """Per-token perplexity of the marginal instance likelihood.

    Instance likelihoods are clipped at ``CLIP_FLOOR`` before the log, like
    posteriors, so one collapsed density cannot push the sum past the float
    range; should the mean exponent still overflow (only possible when
    instances outnumber tokens), the perplexity is reported as infinite.
    """
    rows = score_matrix(instances, model, params, seed)
    m = rows.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise NumericError("an instance scored non-finite under every label")
    log_marginals = (m + np.log(np.exp(rows - m).sum(axis=1, keepdims=True))).ravel()
    floor = math.log(CLIP_FLOOR)
    clipped = log_marginals < floor
    if stats is not None:
        stats.clipped += int(clipped.sum())
    log_marginals = np.maximum(log_marginals, floor)
    tokens = sum(_instance_tokens(x) for _, x in instances)
    if tokens == 0:
        return float("nan")
    try:
        return float(math.exp(-log_marginals.sum() / tokens))
    except OverflowError:
        return math.inf


def epoch_metrics(epoch: int, train, heldout, model, params, n_train: int,
                  seed: int = 0, wall_seconds: float = 0.0) -> EpochMetrics:
    """Evaluate one end-of-epoch snapshot on the training and held-out splits."""
    train_ncll = ncll_metric(train, model, params, seed)
    train_hinge = hinge_metric(train, model, params, seed)
    train_perp = perplexity_metric(train, model, params, seed)
    if heldout:
        test_perp = perplexity_metric(heldout, model, params, seed)
        heldout_acc = accuracy_metric(heldout, model, params, seed)
    else:
        test_perp = float("nan")
        heldout_acc = float("nan")
    return EpochMetrics(
        epoch=epoch,
        train_ncll=train_ncll,
        train_hinge=train_hinge,
        train_perplexity=train_perp,
        test_perplexity=test_perp,
        norm_perplexity=train_perp / n_train,
        heldout_accuracy=heldout_acc,
        wall_seconds=wall_seconds,
    )


def mean_nll(instances, model, params, seed: int = 0) -> float:
    """Mean negative joint log-likelihood (the NLL training objective)."""
    rows = score_matrix(instances, model, params, seed)
    ys = np.fromiter((y for y, _ in instances), dtype=np.int64, count=len(instances))
    return float(-rows[np.arange(len(instances)), ys].mean())


# --- delimited output -------------------------------------------------------


def write_metrics_csv(path, rows: list[EpochMetrics], metadata: dict) -> None:
    """Write the trace as CSV behind '#' metadata comment lines.

    Floats are rendered with ``repr`` so a read-back is lossless.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in metadata.items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(EPOCH_FIELDS)
        for row in rows:
            # repr of a builtin float is the shortest exact round trip; numpy
            # scalars repr as their type name, so coerce first.
            writer.writerow(
                [int(row.epoch)]
                + [repr(float(getattr(row, name))) for name in EPOCH_FIELDS[1:]]
            )


def read_metrics_csv(path) -> tuple[list[EpochMetrics], dict]:
    """Inverse of :func:`write_metrics_csv`."""
    metadata: dict[str, str] = {}
    rows: list[EpochMetrics] = []
    with open(path, "r", encoding="utf-8") as fh:
        body = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                metadata[key.strip()] = value.strip()
            else:
                body.append(line)
        reader = csv.reader(io.StringIO("".join(body)))
        header = next(reader)
        if tuple(header) != EPOCH_FIELDS:
            raise ValueError(f"unexpected metrics header {header}")
        for rec in reader:
            values = [int(rec[0])] + [float(v) for v in rec[1:]]
            rows.append(EpochMetrics(*values))
    return rows, metadata


# --- numeric oracles ---------------------------------------------------------


def finite_diff_oracle(f: Callable[[np.ndarray], float], x: np.ndarray,
                       h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function; the reference that
    analytic gradients are judged against in tests."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        hi = x.copy()
        lo = x.copy()
        hi[j] += h
        lo[j] -= h
        grad[j] = (f(hi) - f(lo)) / (2.0 * h)
    return grad


@dataclass
class TopicEnumeration:
    """Exact per-class quantities for a small document under a topic classifier."""

    expected_s: np.ndarray        # (n_labels, n_topics, n_distinct)
    mean_proportions: np.ndarray  # (n_labels, n_topics)
    class_posterior: np.ndarray   # (n_labels,)


def enumeration_oracle(doc, state) -> TopicEnumeration:
    """Enumerate every topic assignment of a small document exactly.

    Walks the full assignment space of the per-class topic sampler's
    stationary law (emission weight for each distinct word times the
    collapsed occupancy weights), and returns the exact expected statistics,
    mean smoothed topic proportions, and the plug-in class posterior built
    from them. This is the straight-line reference the sampling estimators
    are validated against. Refuses above ``ENUMERATION_CAP`` assignments.
    """
    n_labels, n_topics, n_words = state.N.shape
    wids = doc.word_ids
    wcnt = doc.count_values
    d = len(wids)
    if n_labels * (n_topics ** max(d, 1)) > ENUMERATION_CAP:
        raise DiagnosticsError(
            f"enumeration over {n_labels} x {n_topics}^{d} assignments exceeds "
            f"the cap of {ENUMERATION_CAP}"
        )
    alpha = 1.0 / n_topics
    gamma = state.gamma
    expected_s = np.zeros((n_labels, n_topics, d))
    mean_prop = np.zeros((n_labels, n_topics))
    log_like = np.zeros(n_labels)
    for y in range(n_labels):
        beta = (state.N[y][:, wids] + gamma) / (state.M[y][:, None] + gamma * n_words)
        if d == 0:
            mean_prop[y] = 1.0 / n_topics
            continue
        weights = []
        assigns = []
        for z in product(range(n_topics), repeat=d):
            occupancy = np.bincount(z, minlength=n_topics)
            logw = sum(math.lgamma(alpha + c) - math.lgamma(alpha) for c in occupancy)
            logw += sum(math.log(beta[z[i], i]) for i in range(d))
            weights.append(logw)
            assigns.append(z)
        weights = np.asarray(weights)
        weights = np.exp(weights - weights.max())
        weights /= weights.sum()
        for wgt, z in zip(weights, assigns):
            occupancy = np.bincount(z, minlength=n_topics)
            mean_prop[y] += wgt * (occupancy + alpha) / (d + alpha * n_topics)
            for i, zi in enumerate(z):
                expected_s[y, zi, i] += wgt * wcnt[i]
        mix = mean_prop[y] @ ((state.N[y][:, wids] + gamma) / (state.M[y][:, None] + gamma * d))
        log_like[y] = float(wcnt @ np.log(mix))
    scores = np.log(state.C + gamma) + log_like
    scores -= scores.max()
    post = np.exp(scores)
    return TopicEnumeration(expected_s, mean_prop, post / post.sum())


def timed(fn: Callable[[], Any]) -> tuple[Any, float]:
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start
