"""Two-class Gaussian naive Bayes on a single real feature, plus its benchmark sampler.

The statistic layout is three pairs: class pseudo-counts ``N``, per-class
sums ``S``, and per-class sums of squares ``V``. The M step normalizes ``N``
into class probabilities and moment-matches each class Gaussian. The prior
initializes every count and every sum of squares at one (sums at zero), pulls
``S`` and ``V`` toward zero with unit shrinkage weight, and leaves ``N``
unshrunk; the projection of the check step floors counts and keeps each
class's variance positive with a step-scaled slack, so the M step is total on
anything training produces.

The specialized per-instance updates below are plain-float transcriptions of
the generic flat-vector path, kept operation-for-operation identical so the
two produce bit-equal states; the tests assert exactly that. They exist
because the benchmark trains on tens of thousands of scalar instances per
epoch, where per-step array bookkeeping dominates runtime.

``toy_generator`` draws the synthetic benchmark: one broad centered Gaussian
class against an asymmetric two-spike mixture class, a shape a single
Gaussian cannot represent, which is what separates joint-likelihood training
from the discriminative losses on this data. Spread arguments are standard
deviations by default; a variance reading is available as a switch.
"""

from __future__ import annotations

import math

import numpy as np

from .expfam import (
    ConjugatePrior,
    ExpectationState,
    FeasibilityError,
    ModelFamily,
    NaturalParams,
    NumericError,
)

_LOG_2PI = math.log(2.0 * math.pi)

TOY_LABELS = ("-1", "1")


def _scalar_params(n0, n1, s0, s1, v0, v1):
    """(p0, p1, mean0, mean1, sd0, sd1) from the six statistics; total function
    only on the feasible region."""
    if n0 <= 0.0 or n1 <= 0.0:
        raise FeasibilityError(f"class pseudo-counts must be positive, got N = ({n0}, {n1})")
    tot = n0 + n1
    p0 = n0 / tot
    p1 = n1 / tot
    m0 = s0 / n0
    m1 = s1 / n1
    var0 = v0 / n0 - m0 * m0
    var1 = v1 / n1 - m1 * m1
    if var0 <= 0.0 or var1 <= 0.0:
        raise FeasibilityError(f"class variances must be positive, got ({var0}, {var1})")
    return p0, p1, m0, m1, math.sqrt(var0), math.sqrt(var1)


def _log_joint_scalar(x, p0, p1, m0, m1, sd0, sd1):
    z0 = (x - m0) / sd0
    z1 = (x - m1) / sd1
    l0 = math.log(p0) - math.log(sd0) - 0.5 * z0 * z0 - 0.5 * _LOG_2PI
    l1 = math.log(p1) - math.log(sd1) - 0.5 * z1 * z1 - 0.5 * _LOG_2PI
    return l0, l1


def _posterior_scalar(l0, l1):
    m = l0 if l0 >= l1 else l1
    if not math.isfinite(m):
        raise NumericError("both class scores are non-finite")
    e0 = math.exp(l0 - m)
    e1 = math.exp(l1 - m)
    tot = e0 + e1
    return e0 / tot, e1 / tot


class GnbParams(NaturalParams):
    """Class probabilities and per-class Gaussian (mean, standard deviation)."""

    __slots__ = ("class_probs", "means", "sigmas")

    def __init__(self, class_probs, means, sigmas):
        self.class_probs = np.asarray(class_probs, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.sigmas = np.asarray(sigmas, dtype=float)

    def scalars(self):
        return (
            float(self.class_probs[0]), float(self.class_probs[1]),
            float(self.means[0]), float(self.means[1]),
            float(self.sigmas[0]), float(self.sigmas[1]),
        )


class GnbState:
    """Plain-float training state for the specialized updates."""

    __slots__ = ("n0", "n1", "s0", "s1", "v0", "v1", "n")

    def __init__(self, n0, n1, s0, s1, v0, v1, n):
        self.n0, self.n1 = n0, n1
        self.s0, self.s1 = s0, s1
        self.v0, self.v1 = v0, v1
        self.n = n

    @property
    def N(self):
        return (self.n0, self.n1)

    @property
    def S(self):
        return (self.s0, self.s1)

    @property
    def V(self):
        return (self.v0, self.v1)

    def to_expectation_state(self) -> ExpectationState:
        return ExpectationState(
            np.array([self.n0, self.n1, self.s0, self.s1, self.v0, self.v1]), self.n
        )

    def copy(self) -> "GnbState":
        return GnbState(self.n0, self.n1, self.s0, self.s1, self.v0, self.v1, self.n)


# The variance slack must survive float rounding: an absolute slack underflows
# next to s*s/n once that dominates it, which would let a zero computed
# variance through, so the bound also carries a relative factor.
_VAR_GUARD = 1.0 + 1e-12


def gnb_check(state: GnbState, floor: float) -> int:
    """Project a specialized state into the feasible region (counts floored,
    variances kept positive with slack ``floor``); counts the moved entries."""
    moved = 0
    if state.n0 < floor:
        state.n0 = floor
        moved += 1
    if state.n1 < floor:
        state.n1 = floor
        moved += 1
    vmin0 = (state.s0 * state.s0 / state.n0) * _VAR_GUARD + floor
    if state.v0 < vmin0:
        state.v0 = vmin0
        moved += 1
    vmin1 = (state.s1 * state.s1 / state.n1) * _VAR_GUARD + floor
    if state.v1 < vmin1:
        state.v1 = vmin1
        moved += 1
    return moved


def gnb_posterior(x: float, params: GnbParams) -> np.ndarray:
    p0, p1, m0, m1, sd0, sd1 = params.scalars()
    q0, q1 = _posterior_scalar(*_log_joint_scalar(float(x), p0, p1, m0, m1, sd0, sd1))
    return np.array([q0, q1])


class GaussianNB(ModelFamily):
    """The two-class single-feature Gaussian naive Bayes family."""

    name = "gnb"
    n_labels = 2
    statistic_dim = 6

    def __init__(self, fast: bool = True):
        self.fast = fast

    # --- prior -------------------------------------------------------------

    def default_prior(self) -> ConjugatePrior:
        alpha = np.array([1.0, 1.0, 0.0, 0.0, 1.0, 1.0])
        mask = np.array([False, False, True, True, True, True])
        return ConjugatePrior(alpha, 1.0, mask)

    # --- contract ----------------------------------------------------------

    def sufficient_statistics(self, y: int, x) -> dict[int, float]:
        x = float(x)
        return {y: 1.0, 2 + y: x, 4 + y: x * x}

    def m_step(self, state: ExpectationState) -> GnbParams:
        mu = state.mu
        p0, p1, m0, m1, sd0, sd1 = _scalar_params(
            float(mu[0]), float(mu[1]), float(mu[2]),
            float(mu[3]), float(mu[4]), float(mu[5]),
        )
        return GnbParams((p0, p1), (m0, m1), (sd0, sd1))

    def log_joint(self, x, params: GnbParams, rng=None) -> np.ndarray:
        p0, p1, m0, m1, sd0, sd1 = params.scalars()
        l0, l1 = _log_joint_scalar(float(x), p0, p1, m0, m1, sd0, sd1)
        return np.array([l0, l1])

    def posterior(self, x, params: GnbParams, rng=None) -> np.ndarray:
        p0, p1, m0, m1, sd0, sd1 = params.scalars()
        q0, q1 = _posterior_scalar(*_log_joint_scalar(float(x), p0, p1, m0, m1, sd0, sd1))
        return np.array([q0, q1])

    def batch_log_joint(self, xs, params: GnbParams) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        z = (xs[:, None] - params.means[None, :]) / params.sigmas[None, :]
        return (
            np.log(params.class_probs)[None, :]
            - np.log(params.sigmas)[None, :]
            - 0.5 * z * z
            - 0.5 * _LOG_2PI
        )

    def feasibility_violation(self, mu: np.ndarray) -> str | None:
        try:
            _scalar_params(*(float(v) for v in mu))
        except FeasibilityError as err:
            return str(err)
        return None

    def check_step_mu(self, mu: np.ndarray, floor: float) -> int:
        moved = 0
        for k in (0, 1):
            if mu[k] < floor:
                mu[k] = floor
                moved += 1
        for k in (0, 1):
            vmin = (mu[2 + k] * mu[2 + k] / mu[k]) * _VAR_GUARD + floor
            if mu[4 + k] < vmin:
                mu[4 + k] = vmin
                moved += 1
        return moved

    # --- specialized training ------------------------------------------------

    def init_state(self, prior: ConjugatePrior, n: int, loss: str):
        if not self.fast:
            return super().init_state(prior, n, loss)
        a = prior.alpha_bar
        return GnbState(float(a[0]), float(a[1]), float(a[2]),
                        float(a[3]), float(a[4]), float(a[5]), n)

    def specialized_losses(self) -> frozenset[str]:
        return frozenset(("nll", "ncll", "hinge")) if self.fast else frozenset()

    def params_from_state(self, state) -> GnbParams:
        if isinstance(state, GnbState):
            p0, p1, m0, m1, sd0, sd1 = _scalar_params(
                state.n0, state.n1, state.s0, state.s1, state.v0, state.v1
            )
            return GnbParams((p0, p1), (m0, m1), (sd0, sd1))
        return self.m_step(state)

    def specialized_update(self, loss, y, x, state: GnbState, rho, n, step_key=None) -> int:
        # Mirrors the generic flat path operation for operation (same shrink,
        # prior, delta, and projection arithmetic, in the same order) so the
        # two paths stay bit-identical.
        x = float(x)
        if not math.isfinite(x):
            raise NumericError(f"non-finite feature value at step {step_key}")
        x2 = x * x
        rho_over_n = rho / n

        if loss == "nll":
            f_n = 1.0 - rho
            f_sv = (1.0 - rho) - rho / n
            state.n0 *= f_n
            state.n1 *= f_n
            state.s0 *= f_sv
            state.s1 *= f_sv
            state.v0 *= f_sv
            state.v1 *= f_sv
            state.n0 += rho_over_n
            state.n1 += rho_over_n
            state.v0 += rho_over_n
            state.v1 += rho_over_n
            if y == 0:
                state.n0 += rho * 1.0
                state.s0 += rho * x
                state.v0 += rho * x2
            else:
                state.n1 += rho * 1.0
                state.s1 += rho * x
                state.v1 += rho * x2
            return gnb_check(state, rho_over_n)

        p0, p1, m0, m1, sd0, sd1 = _scalar_params(
            state.n0, state.n1, state.s0, state.s1, state.v0, state.v1
        )
        l0, l1 = _log_joint_scalar(x, p0, p1, m0, m1, sd0, sd1)

        if loss == "ncll":
            q0, q1 = _posterior_scalar(l0, l1)
            if y == 0:
                e0 = 1.0 + -q0 * 1.0
                e1 = -q1 * 1.0
                ds0 = x + -q0 * x
                ds1 = -q1 * x
                dv0 = x2 + -q0 * x2
                dv1 = -q1 * x2
            else:
                e0 = -q0 * 1.0
                e1 = 1.0 + -q1 * 1.0
                ds0 = -q0 * x
                ds1 = x + -q1 * x
                dv0 = -q0 * x2
                dv1 = x2 + -q1 * x2
        else:  # hinge
            margin = (l0 - l1) if y == 0 else (l1 - l0)
            if margin > 1.0:
                e0 = e1 = ds0 = ds1 = dv0 = dv1 = 0.0
            elif y == 0:
                e0, e1 = 1.0, -1.0
                ds0, ds1 = x, -1.0 * x
                dv0, dv1 = x2, -1.0 * x2
            else:
                e0, e1 = -1.0, 1.0
                ds0, ds1 = -1.0 * x, x
                dv0, dv1 = -1.0 * x2, x2

        f_sv = 1.0 - rho / n
        state.s0 *= f_sv
        state.s1 *= f_sv
        state.v0 *= f_sv
        state.v1 *= f_sv
        state.n0 += rho_over_n
        state.n1 += rho_over_n
        state.v0 += rho_over_n
        state.v1 += rho_over_n
        if e0 != 0.0:
            state.n0 += rho * e0
        if e1 != 0.0:
            state.n1 += rho * e1
        if ds0 != 0.0:
            state.s0 += rho * ds0
        if ds1 != 0.0:
            state.s1 += rho * ds1
        if dv0 != 0.0:
            state.v0 += rho * dv0
        if dv1 != 0.0:
            state.v1 += rho * dv1
        return gnb_check(state, rho_over_n)


# --- the synthetic benchmark --------------------------------------------------


def toy_generator(n: int, seed, spread: str = "stddev") -> tuple[np.ndarray, np.ndarray]:
    """Draw the two-class benchmark sample.

    Class 0 is a broad Gaussian centered at zero with spread 3; class 1 mixes
    two narrow spikes at -5 (weight 0.8) and +5 (weight 0.2) with spread 0.1.
    Classes are balanced. ``spread`` selects whether those numbers are read as
    standard deviations (the default) or variances. Returns (label ids, x).
    """
    if spread not in ("stddev", "variance"):
        raise ValueError(f"spread must be 'stddev' or 'variance', got {spread!r}")
    sd_broad = 3.0 if spread == "stddev" else math.sqrt(3.0)
    sd_spike = 0.1 if spread == "stddev" else math.sqrt(0.1)
    rng = np.random.default_rng(seed)
    y = (rng.random(n) >= 0.5).astype(np.int64)
    x = np.empty(n)
    broad = y == 0
    x[broad] = rng.normal(0.0, sd_broad, int(broad.sum()))
    n_spike = int(n - broad.sum())
    centers = np.where(rng.random(n_spike) < 0.8, -5.0, 5.0)
    x[~broad] = rng.normal(centers, sd_spike)
    return y, x


def toy_instances(y: np.ndarray, x: np.ndarray) -> list[tuple[int, float]]:
    return [(int(yi), float(xi)) for yi, xi in zip(y, x)]
