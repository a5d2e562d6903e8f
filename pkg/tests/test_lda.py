"""Topic-mixture classifier: chains, estimators, per-document updates."""

import math

import numpy as np
import pytest

from sdem.corpus import Document
from sdem.evaluation import enumeration_oracle
from sdem.expfam import ConfigurationError, ConjugatePrior
from sdem.lda import (
    GibbsConfig,
    LdaClassifier,
    LdaState,
    gibbs_conditional,
    lda_hinge_step,
    lda_init,
    lda_log_scores,
    lda_ncll_step,
    lda_nll_step,
    lda_posterior,
    run_gibbs,
)
from sdem.mnb import MnbState, mnb_ncll_update, mnb_posterior


def one_topic_pair(seed=0, n_words=4):
    """An equivalent (1-topic state, multinomial state) pair."""
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.5, 3.0, 2)
    N = rng.uniform(0.2, 4.0, (2, n_words))
    gamma = 0.3
    lda = LdaState(C, N[:, None, :], gamma=gamma, eta=0.5)
    mnb = MnbState(C, N, gamma=gamma, alpha=0.5)
    return lda, mnb


def test_gibbs_conditional_hand_case():
    beta = np.array([[0.5, 0.25], [0.1, 0.4]])
    occupancy = np.array([2.0, 0.0])
    np.testing.assert_allclose(
        gibbs_conditional(1, beta, occupancy, topic_alpha=0.5),
        [0.25 * 2.5, 0.4 * 0.5],
        rtol=1e-12,
    )


def test_lda_init_shapes_and_validation():
    state = lda_init(2, 3, 5, eta=0.6)
    assert state.N.shape == (2, 3, 5)
    np.testing.assert_allclose(state.N, 0.2)
    np.testing.assert_allclose(state.M, 1.0)
    assert state.topic_alpha == pytest.approx(1.0 / 3.0)
    with pytest.raises(ConfigurationError):
        lda_init(2, 0, 5)
    with pytest.raises(ConfigurationError):
        lda_init(2, 3, 5, eta=0.0)
    with pytest.raises(ConfigurationError):
        LdaState(np.ones(3), np.ones((2, 2, 2)))
    with pytest.raises(ConfigurationError):
        GibbsConfig(burn_in=-1, samples=5)
    with pytest.raises(ConfigurationError):
        GibbsConfig(burn_in=0, samples=0)


def test_state_copy_is_independent():
    state = lda_init(2, 2, 3)
    clone = state.copy()
    clone.N[0, 0, 0] = 99.0
    clone.gamma = 7.0
    assert state.N[0, 0, 0] != 99.0
    assert state.gamma == 0.0


def test_single_topic_chain_is_exact_and_skips_sampling():
    state = lda_init(2, 1, 3)
    doc = Document({0: 2, 2: 5})
    stats, occupancy = run_gibbs(
        doc, state.N[0], state.M[0], state.gamma, state.topic_alpha,
        GibbsConfig(0, 1), rng=None,
    )
    np.testing.assert_array_equal(stats, [[2.0, 5.0]])
    np.testing.assert_array_equal(occupancy, [2.0])


def test_empty_document_chain_returns_zeros():
    state = lda_init(2, 3, 4)
    stats, occupancy = run_gibbs(
        Document({}), state.N[0], state.M[0], 0.0, state.topic_alpha,
        GibbsConfig(1, 2), np.random.default_rng(0),
    )
    assert stats.shape == (3, 0)
    np.testing.assert_array_equal(occupancy, np.zeros(3))


def test_run_gibbs_rejects_unknown_estimator():
    state = lda_init(2, 2, 3)
    with pytest.raises(ConfigurationError):
        run_gibbs(Document({0: 1}), state.N[0], state.M[0], 0.0, 0.5,
                  GibbsConfig(1, 1), np.random.default_rng(0), estimator="map")


@pytest.mark.parametrize("estimator", ["rao_blackwell", "indicator"])
def test_chain_statistics_conserve_word_mass(estimator):
    rng = np.random.default_rng(3)
    state = LdaState([1.0], rng.uniform(0.2, 2.0, (1, 3, 5)), gamma=0.1)
    doc = Document({0: 2, 3: 1, 4: 4})
    stats, occupancy = run_gibbs(
        doc, state.N[0], state.M[0], state.gamma, state.topic_alpha,
        GibbsConfig(2, 7), rng, estimator,
    )
    np.testing.assert_allclose(stats.sum(axis=0), [2.0, 1.0, 4.0], rtol=1e-12)
    assert occupancy.sum() == pytest.approx(doc.n_distinct, rel=1e-12)


@pytest.mark.parametrize("estimator,tol", [("rao_blackwell", 0.02), ("indicator", 0.05)])
def test_chain_mean_matches_enumeration(estimator, tol):
    rng = np.random.default_rng(11)
    state = LdaState([1.0, 1.0], rng.uniform(0.3, 3.0, (2, 2, 4)), gamma=0.2)
    doc = Document({0: 2, 2: 1, 3: 3})
    exact = enumeration_oracle(doc, state)
    stats, _ = run_gibbs(
        doc, state.N[0], state.M[0], state.gamma, state.topic_alpha,
        GibbsConfig(50, 800), np.random.default_rng(5), estimator,
    )
    np.testing.assert_allclose(stats, exact.expected_s[0], atol=tol * 6)


def test_one_topic_scores_match_the_multinomial_scorer():
    lda, mnb = one_topic_pair()
    rng = np.random.default_rng(0)
    for counts in ({0: 1}, {1: 2, 3: 1}, {0: 1, 1: 1, 2: 1, 3: 2}):
        doc = Document(counts)
        np.testing.assert_allclose(
            lda_posterior(doc, lda, GibbsConfig(0, 1), rng),
            mnb_posterior(doc, mnb),
            rtol=1e-9,
        )


def test_scores_of_empty_document_use_class_mass_only():
    state = lda_init(2, 2, 3)
    state.C[:] = [2.0, 6.0]
    scores = lda_log_scores(Document({}), state, GibbsConfig(0, 1), None)
    np.testing.assert_allclose(scores, np.log([2.0, 6.0]))


def test_per_class_generator_list_must_match_label_count():
    state = lda_init(3, 2, 4)
    rngs = [np.random.default_rng(k) for k in range(2)]
    with pytest.raises(ConfigurationError):
        lda_log_scores(Document({0: 1}), state, GibbsConfig(0, 1), rngs)


def test_enumeration_posterior_matches_one_topic_closed_form():
    lda, mnb = one_topic_pair(seed=4)
    doc = Document({0: 2, 1: 1})
    exact = enumeration_oracle(doc, lda)
    np.testing.assert_allclose(exact.class_posterior, mnb_posterior(doc, mnb), rtol=1e-12)
    np.testing.assert_allclose(exact.mean_proportions, 1.0)


def test_one_topic_ncll_step_matches_the_multinomial_update():
    lda, mnb = one_topic_pair(seed=9)
    doc = Document({0: 2, 2: 1})
    lda_ncll_step(1, doc, lda, rho=0.4, n=10, config=GibbsConfig(0, 1), step_key=(0, 0))
    mnb_ncll_update(1, doc, mnb, rho=0.4, n=10)
    np.testing.assert_allclose(lda.C, mnb.C, rtol=1e-9)
    np.testing.assert_allclose(lda.N[:, 0, :], mnb.N, rtol=1e-9)
    np.testing.assert_allclose(lda.M[:, 0], mnb.M, rtol=1e-9)
    assert lda.gamma == pytest.approx(mnb.gamma, rel=1e-12)


def test_nll_step_arithmetic_with_an_exact_chain():
    state = lda_init(2, 1, 3)
    state.C[:] = [2.0, 1.0]
    state.N[0, 0] = [3.0, 1.0, 0.5]
    state.M[:] = state.N.sum(axis=2)
    state.gamma = 0.2
    doc = Document({0: 2, 2: 1})
    rho, n = 0.25, 8
    keep = 1.0 - rho
    expect_C = np.array([2.0, 1.0]) * keep + [rho, 0.0]
    expect_N0 = np.array([3.0, 1.0, 0.5]) * keep + [rho * 2.0, 0.0, rho * 1.0]
    expect_gamma = keep * 0.2 + (0.1 / 1.0) * rho / n
    clamps = lda_nll_step(0, doc, state, rho, n, GibbsConfig(0, 1), step_key=(0, 0))
    assert clamps == 0
    np.testing.assert_allclose(state.C, expect_C, rtol=1e-14)
    np.testing.assert_allclose(state.N[0, 0], expect_N0, rtol=1e-14)
    np.testing.assert_allclose(state.M, state.N.sum(axis=2), rtol=1e-14)
    assert state.gamma == pytest.approx(expect_gamma, rel=1e-14)


def test_update_books_only_realized_changes_into_totals():
    # One word in the vocabulary makes every class emit it with probability
    # one, so the posterior comes from the class masses alone and class 1's
    # attempted decrement (3/4 * 8 counts) far exceeds its half-count row.
    state = LdaState([1.0, 3.0], [[[5.0]], [[0.5]]])
    lda_ncll_step(0, Document({0: 8}), state, rho=1.0, n=4,
                  config=GibbsConfig(0, 1), step_key=(0, 0))
    np.testing.assert_allclose(state.M, state.N.sum(axis=2), rtol=1e-12)
    assert state.N[1, 0, 0] == 0.0


def test_hinge_skip_touches_only_the_prior_correction():
    state = lda_init(2, 1, 2)
    state.C[:] = [20.0, 1.0]
    state.N[0, 0] = [9.0, 1.0]
    state.M[:] = state.N.sum(axis=2)
    before_N = state.N.copy()
    before_C = state.C.copy()
    clamps = lda_hinge_step(0, Document({0: 3}), state, rho=0.5, n=10,
                            config=GibbsConfig(0, 1), step_key=(0, 0))
    assert clamps == 0
    np.testing.assert_array_equal(state.N, before_N)
    np.testing.assert_array_equal(state.C, before_C)
    assert state.gamma == pytest.approx(0.1 * 0.5 / 10)


def test_hinge_moves_only_true_and_runner_up_classes():
    state = lda_init(3, 2, 4)
    state.C[:] = [1.0, 1.0, 4.0]
    doc = Document({1: 2})
    before = state.N.copy()
    lda_hinge_step(0, doc, state, rho=0.5, n=10, config=GibbsConfig(1, 3), step_key=(7, 0))
    changed = [k for k in range(3) if not np.array_equal(state.N[k], before[k])]
    assert changed == [0, 2]


def test_hinge_requires_two_labels():
    state = lda_init(1, 2, 3)
    with pytest.raises(ConfigurationError):
        lda_hinge_step(0, Document({0: 1}), state, rho=0.5, n=5,
                       config=GibbsConfig(0, 1), step_key=(0, 0))


def test_steps_are_reproducible_from_the_step_key():
    doc = Document({0: 2, 1: 1, 3: 2})
    runs = []
    for _ in range(2):
        state = lda_init(2, 3, 4)
        state.N += np.random.default_rng(1).uniform(0.0, 2.0, state.N.shape)
        state.M[:] = state.N.sum(axis=2)
        lda_ncll_step(1, doc, state, rho=0.8, n=5, config=GibbsConfig(2, 4),
                      step_key=(13, 2))
        runs.append(state)
    np.testing.assert_array_equal(runs[0].N, runs[1].N)
    np.testing.assert_array_equal(runs[0].C, runs[1].C)


def test_different_step_keys_draw_different_chains():
    doc = Document({0: 2, 1: 1, 3: 2})
    outcomes = []
    for t in range(2):
        state = lda_init(2, 3, 4)
        state.N += np.random.default_rng(1).uniform(0.0, 2.0, state.N.shape)
        state.M[:] = state.N.sum(axis=2)
        lda_ncll_step(1, doc, state, rho=0.8, n=5, config=GibbsConfig(2, 4),
                      step_key=(13, t))
        outcomes.append(state.N.copy())
    assert not np.array_equal(outcomes[0], outcomes[1])


def test_classifier_contract_guards():
    model = LdaClassifier(2, 2, 3)
    with pytest.raises(ConfigurationError):
        model.sufficient_statistics(0, Document({0: 1}))
    with pytest.raises(ConfigurationError):
        model.m_step(None)
    state = model.init_state(model.default_prior(), n=4, loss="ncll")
    params = model.params_from_state(state)
    with pytest.raises(ConfigurationError):
        model.log_joint(Document({0: 1}), params)
    with pytest.raises(ConfigurationError):
        model.specialized_update("ncll", 0, Document({0: 1}), state, 0.5, 4)
    with pytest.raises(ConfigurationError):
        model.params_from_state(np.zeros(3))
    with pytest.raises(ConfigurationError):
        LdaClassifier(2, 2, 3, estimator="map")


def test_init_state_mirrors_the_default_prior():
    model = LdaClassifier(2, 4, 3, eta=0.8)
    state = model.init_state(model.default_prior(), n=10, loss="nll")
    np.testing.assert_allclose(state.N, 0.2)
    np.testing.assert_allclose(state.C, 1.0)
    assert state.eta == pytest.approx(0.8)
    with pytest.raises(ConfigurationError):
        model.init_state(ConjugatePrior(np.ones(model.statistic_dim), 1.0), 10, "nll")
    uneven = np.ones(model.statistic_dim)
    uneven[-1] = 2.0
    with pytest.raises(ConfigurationError):
        model.init_state(ConjugatePrior(uneven, 0.0), 10, "nll")


def test_params_snapshot_is_isolated_from_later_training():
    model = LdaClassifier(2, 2, 3)
    state = model.init_state(model.default_prior(), n=4, loss="ncll")
    params = model.params_from_state(state)
    frozen = params.counts.N.copy()
    lda_ncll_step(0, Document({0: 3}), state, rho=1.0, n=4,
                  config=GibbsConfig(1, 2), step_key=(0, 0))
    np.testing.assert_array_equal(params.counts.N, frozen)


def test_enumeration_weights_are_a_proper_stationary_law():
    # Under a uniform emission table every assignment is equally likely up to
    # the occupancy factor, so two topics and two words give 1/3 mass to each
    # split pattern: (2,0), (1,1) twice, (0,2) with lgamma weights.
    state = LdaState([1.0], np.full((1, 2, 2), 3.0))
    doc = Document({0: 1, 1: 1})
    exact = enumeration_oracle(doc, state)
    np.testing.assert_allclose(exact.expected_s[0].sum(axis=0), [1.0, 1.0], rtol=1e-12)
    np.testing.assert_allclose(exact.expected_s[0][0], exact.expected_s[0][1], rtol=1e-12)
    agree = math.gamma(0.5 + 2) / math.gamma(0.5)
    split = (math.gamma(0.5 + 1) / math.gamma(0.5)) ** 2
    p_together = 2 * agree / (2 * agree + 2 * split)
    np.testing.assert_allclose(
        exact.mean_proportions[0], [0.5, 0.5], rtol=1e-12
    )
    occupancy_cov = exact.expected_s[0][0, 0] - 0.5
    assert occupancy_cov == pytest.approx(0.0, abs=1e-12)
    assert 0.5 < p_together < 1.0
