"""Discriminative training of exponential-family generative classifiers.

The engine performs per-instance natural-gradient steps directly in
expectation-parameter space: a loss gradient expressed through sufficient
statistics, a projection back into the feasible region, and a closed-form
map to natural parameters. Plug-in families cover a two-class Gaussian
naive Bayes, a multinomial naive Bayes over bag-of-words documents, and a
per-class topic-mixture model whose expected statistics come from collapsed
Gibbs chains.
"""

from .corpus import (
    Corpus,
    CorpusError,
    Document,
    apply_vocabulary,
    make_bursty_corpus,
    make_multinomial_corpus,
    make_subtopic_corpus,
    parse_corpus,
    write_corpus,
)
from .engine import LearningRateSchedule, TrainConfig, TrainTrace, sdem_train
from .evaluation import (
    EpochMetrics,
    accuracy_metric,
    hinge_metric,
    ncll_metric,
    perplexity_metric,
)
from .expfam import (
    ConfigurationError,
    ConjugatePrior,
    DiagnosticsError,
    ExpectationState,
    FeasibilityError,
    ModelFamily,
    NaturalParams,
    NumericError,
    VocabularyError,
    log_normalize,
)
from .gnb import GaussianNB, GnbParams, GnbState, toy_generator, toy_instances
from .lda import (
    EVAL_GIBBS,
    TRAIN_GIBBS,
    GibbsConfig,
    LdaClassifier,
    LdaParams,
    LdaState,
    lda_posterior,
)
from .losses import LossGradient, hinge_grad, ncll_grad, nll_grad, runner_up
from .mnb import (
    MnbParams,
    MnbState,
    MultinomialNB,
    laplace_estimate,
    mnb_finalize,
    mnb_posterior,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConjugatePrior",
    "Corpus",
    "CorpusError",
    "DiagnosticsError",
    "Document",
    "EVAL_GIBBS",
    "EpochMetrics",
    "ExpectationState",
    "FeasibilityError",
    "GaussianNB",
    "GibbsConfig",
    "GnbParams",
    "GnbState",
    "LdaClassifier",
    "LdaParams",
    "LdaState",
    "LearningRateSchedule",
    "LossGradient",
    "MnbParams",
    "MnbState",
    "ModelFamily",
    "MultinomialNB",
    "NaturalParams",
    "NumericError",
    "TRAIN_GIBBS",
    "TrainConfig",
    "TrainTrace",
    "VocabularyError",
    "accuracy_metric",
    "apply_vocabulary",
    "hinge_grad",
    "hinge_metric",
    "laplace_estimate",
    "lda_posterior",
    "log_normalize",
    "make_bursty_corpus",
    "make_multinomial_corpus",
    "make_subtopic_corpus",
    "mnb_finalize",
    "mnb_posterior",
    "ncll_grad",
    "ncll_metric",
    "nll_grad",
    "parse_corpus",
    "perplexity_metric",
    "runner_up",
    "sdem_train",
    "toy_generator",
    "toy_instances",
    "write_corpus",
]
