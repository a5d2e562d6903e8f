"""Command-line entry point: train, evaluate, and sample the toy data.

One binary, subcommand style. A training run leaves four artifacts in the
output directory: ``model.json`` (the scoring parameters plus the vocabulary
and label namespaces they are encoded against), ``metrics.csv`` (the
per-epoch trace), ``manifest.json`` (the fully resolved configuration, enough
to reproduce the run), and rendered figures of the trace. All randomness
flows from the single ``--seed``.

Exit codes: 0 success, 2 usage errors (bad flags or flag combinations),
3 data errors (unreadable or malformed inputs), 4 numeric failures,
5 model file version mismatch. The ``SDEM_LOG`` environment variable
(``debug``, ``info``, ``quiet``) controls progress verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluation, figures
from .corpus import FORMATS, CorpusError, apply_vocabulary, parse_corpus
from .engine import TrainConfig, sdem_train
from .expfam import ConfigurationError, FeasibilityError, NaturalParams, VocabularyError
from .gnb import TOY_LABELS, GaussianNB, GnbParams, toy_generator, toy_instances
from .lda import EVAL_GIBBS, TRAIN_GIBBS, GibbsConfig, LdaClassifier, LdaParams, LdaState
from .mnb import MnbParams, MultinomialNB

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MODELS = ("gnb", "mnb", "lda")
LOSSES = ("nll", "ncll", "hinge")
PRIORS = ("p1", "p2", "gnb-default")

# Decay-rate defaults: the toy problem converges fast, text models need the
# near-constant schedule.
DEFAULT_LAMBDA = {"gnb": 1e-3, "mnb": 1e-5, "lda": 1e-5}


class UsageError(ValueError):
    """Flag combination the parser alone cannot reject."""


class ModelFormatError(ValueError):
    """Model file written by an incompatible version of this package."""


# --- toy data files -----------------------------------------------------------


def write_toy_file(path, y: np.ndarray, x: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for yi, xi in zip(y, x):
            fh.write(f"{TOY_LABELS[yi]}\t{float(xi)!r}\n")


def read_toy_file(path) -> list[tuple[int, float]]:
    """Read label/value lines as written by ``toy-gen``."""
    label_ids = {name: k for k, name in enumerate(TOY_LABELS)}
    instances: list[tuple[int, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2 or fields[0] not in label_ids:
                raise CorpusError(f"{path}:{lineno}: expected '<label> <value>' "
                                  f"with label in {TOY_LABELS}")
            try:
                value = float(fields[1])
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: bad value {fields[1]!r}") from exc
            instances.append((label_ids[fields[0]], value))
    return instances


# --- model files ---------------------------------------------------------------


def dump_model(path, kind: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION, "model": kind, **payload},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def model_payload(kind: str, params: NaturalParams, extra: dict) -> dict:
    if kind == "gnb":
        return {
            "class_probs": params.class_probs.tolist(),
            "means": params.means.tolist(),
            "sigmas": params.sigmas.tolist(),
            "labels": list(TOY_LABELS),
            **extra,
        }
    if kind == "mnb":
        return {
            "class_probs": params.class_probs.tolist(),
            "word_probs": params.word_probs.tolist(),
            **extra,
        }
    counts = params.counts
    return {
        "C": counts.C.tolist(),
        "N": counts.N.tolist(),
        "M": counts.M.tolist(),
        "gamma": counts.gamma,
        "eta": counts.eta,
        **extra,
    }


def load_model(path, kind: str):
    """Read a model file back into (model, params, labels, vocab or None)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not a model file: {exc}") from exc
    version = blob.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {version!r}, this build reads {FORMAT_VERSION}"
        )
    if blob.get("model") != kind:
        raise UsageError(f"{path}: holds a {blob.get('model')!r} model, not {kind!r}")
    try:
        if kind == "gnb":
            params = GnbParams(np.array(blob["class_probs"]),
                               np.array(blob["means"]),
                               np.array(blob["sigmas"]))
            return GaussianNB(), params, blob["labels"], None
        if kind == "mnb":
            params = MnbParams(np.array(blob["class_probs"]),
                               np.array(blob["word_probs"]))
            model = MultinomialNB(len(blob["labels"]), len(blob["vocab"]))
            return model, params, blob["labels"], blob["vocab"]
        state = LdaState(np.array(blob["C"]), np.array(blob["N"]),
                         np.array(blob["M"]), blob["gamma"], blob["eta"])
        gibbs = GibbsConfig(**blob["eval_gibbs"])
        model = LdaClassifier(state.n_labels, state.n_topics, state.n_words,
                              eta=state.eta, eval_gibbs=gibbs,
                              estimator=blob["estimator"])
        return model, LdaParams(state), blob["labels"], blob["vocab"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ModelFormatError, UsageError)):
            raise
        raise CorpusError(f"{path}: malformed model file: {exc}") from exc


# --- train ----------------------------------------------------------------------


def resolve_train_flags(args) -> None:
    if args.model != "lda":
        if args.topics is not None:
            raise UsageError("--topics applies only to --model lda")
        if args.eta is not None:
            raise UsageError("--eta applies only to --model lda")
    if args.model != "gnb" and args.toy:
        raise UsageError("--toy applies only to --model gnb")
    if args.model == "gnb":
        if not args.toy and args.train is None:
            raise UsageError("gnb needs --toy or --train")
        if args.prior not in (None, "gnb-default"):
            raise UsageError("gnb has a fixed prior; drop --prior")
        args.prior = "gnb-default"
    else:
        if args.train is None:
            raise UsageError(f"{args.model} needs --train")
        if args.prior == "gnb-default":
            raise UsageError("prior gnb-default applies only to gnb")
        if args.prior is None:
            args.prior = "p1"
        if args.model == "lda" and args.prior == "p2":
            raise UsageError("lda takes its prior weight from --eta, not p2")
    if args.lambda_ is None:
        args.lambda_ = DEFAULT_LAMBDA[args.model]
    if args.topics is None:
        args.topics = 4
    if args.eta is None:
        args.eta = 0.1


def cmd_train(args) -> int:
    resolve_train_flags(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "command": "train",
        "version": __version__,
        "model": args.model,
        "loss": args.loss,
        "lambda": args.lambda_,
        "epochs": args.epochs,
        "seed": args.seed,
        "prior": args.prior,
        "format": args.format,
        "train": args.train,
        "test": args.test,
        "toy": bool(args.toy),
    }

    extra: dict = {}
    if args.model == "gnb":
        model = GaussianNB()
        prior = model.default_prior()
        if args.toy:
            y, x = toy_generator(args.toy_n, args.seed)
            train = toy_instances(y, x)
            y_test, x_test = toy_generator(args.toy_n, [args.seed, 1])
            heldout = toy_instances(y_test, x_test)
            manifest["toy_n"] = args.toy_n
        else:
            train = read_toy_file(args.train)
            if not train:
                raise CorpusError(f"{args.train}: no samples")
            heldout = read_toy_file(args.test) if args.test else None
    else:
        corpus = parse_corpus(args.train, args.format)
        if corpus.n == 0:
            raise CorpusError(f"{args.train}: no documents")
        train = corpus.instances()
        heldout = None
        if args.test:
            test_corpus = apply_vocabulary(
                parse_corpus(args.test, args.format), corpus.vocab, corpus.labels
            )
            heldout = test_corpus.instances()
        extra = {"labels": corpus.labels, "vocab": corpus.vocab}
        manifest.update(n_labels=corpus.n_labels, n_words=corpus.n_words)
        if args.model == "mnb":
            model = MultinomialNB(corpus.n_labels, corpus.n_words)
            prior = model.default_prior("unit" if args.prior == "p1" else "log-vocab")
        else:
            model = LdaClassifier(corpus.n_labels, args.topics, corpus.n_words,
                                  eta=args.eta)
            prior = model.default_prior()
            extra.update(eval_gibbs=vars(model.eval_gibbs), estimator=model.estimator)
            manifest.update(topics=args.topics, eta=args.eta,
                            train_gibbs=vars(TRAIN_GIBBS), eval_gibbs=vars(EVAL_GIBBS),
                            estimator=model.estimator)

    config = TrainConfig(lambda_=args.lambda_, epochs=args.epochs, seed=args.seed)
    log.info("training %s with %s loss: %d instances, %d epochs, lambda=%g",
             args.model, args.loss, len(train), args.epochs, args.lambda_)
    trace = sdem_train(train, model, args.loss, prior, config, heldout=heldout)

    dump_model(out_dir / "model.json", args.model,
               model_payload(args.model, trace.final_params, extra))
    metadata = {k: manifest[k] for k in
                ("model", "loss", "lambda", "seed", "prior") if k in manifest}
    if "topics" in manifest:
        metadata["topics"] = manifest["topics"]
        metadata["eval_gibbs"] = json.dumps(manifest["eval_gibbs"])
    evaluation.write_metrics_csv(out_dir / "metrics.csv", trace.epochs, metadata)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    figures.convergence_figure(trace.epochs, out_dir / "convergence.png",
                               title=f"{args.model} / {args.loss}")
    if args.model == "gnb" and args.toy:
        figures.toy_fit_figure(y, x, trace.final_params, out_dir / "toy_fit.png",
                               title=f"toy fit ({args.loss})")

    final = trace.epochs[-1] if trace.epochs else None
    if final is not None:
        print(f"train_ncll {final.train_ncll!r}")
        print(f"train_hinge {final.train_hinge!r}")
        if np.isfinite(final.heldout_accuracy):
            print(f"heldout_accuracy {final.heldout_accuracy!r}")
    print(f"artifacts {out_dir}")
    return 0


# --- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    model, params, labels, vocab = load_model(args.model_file, args.model)
    if args.model == "gnb":
        instances = read_toy_file(args.data)
    else:
        corpus = apply_vocabulary(parse_corpus(args.data, args.format), vocab, labels)
        instances = corpus.instances()
    if not instances:
        raise UsageError(f"{args.data}: no documents to evaluate")
    seed = args.seed
    print(f"accuracy {evaluation.accuracy_metric(instances, model, params, seed)!r}")
    print(f"ncll {evaluation.ncll_metric(instances, model, params, seed)!r}")
    print(f"hinge {evaluation.hinge_metric(instances, model, params, seed)!r}")
    print(f"perplexity {evaluation.perplexity_metric(instances, model, params, seed)!r}")
    return 0


# --- toy-gen ----------------------------------------------------------------------


def cmd_toygen(args) -> int:
    y, x = toy_generator(args.n, args.seed, spread=args.spread)
    write_toy_file(args.out, y, x)
    log.info("wrote %d samples to %s", args.n, args.out)
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdem",
        description="Train exponential-family classifiers by stochastic "
                    "discriminative natural-gradient steps.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model and write its artifacts")
    train.add_argument("--model", required=True, choices=MODELS)
    train.add_argument("--loss", required=True, choices=LOSSES)
    train.add_argument("--lambda", dest="lambda_", type=float, default=None,
                       help="step-size decay rate (default depends on the model)")
    train.add_argument("--epochs", required=True, type=int)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--prior", choices=PRIORS, default=None)
    train.add_argument("--topics", type=int, default=None, help="lda only")
    train.add_argument("--eta", type=float, default=None,
                       help="lda only: total per-word prior weight")
    train.add_argument("--train", default=None, help="training corpus path")
    train.add_argument("--test", default=None, help="held-out corpus path")
    train.add_argument("--format", choices=FORMATS, default="label-tokens")
    train.add_argument("--toy", action="store_true",
                       help="gnb only: generate the synthetic experiment from the seed")
    train.add_argument("--toy-n", type=int, default=30000,
                       help="samples per split with --toy")
    train.add_argument("--out-dir", required=True)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a saved model on a corpus")
    ev.add_argument("--model", required=True, choices=MODELS)
    ev.add_argument("--model-file", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--format", choices=FORMATS, default="label-tokens")
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_eval)

    gen = sub.add_parser("toy-gen", help="sample the synthetic two-class data")
    gen.add_argument("--n", type=int, default=30000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--spread", choices=("stddev", "variance"), default="stddev",
                     help="how the component spread numbers are read")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_toygen)
    return parser


def _configure_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO, "quiet": logging.ERROR}
    name = os.environ.get("SDEM_LOG", "info").lower()
    logging.basicConfig(level=level.get(name, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except (CorpusError, VocabularyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ArithmeticError, FeasibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
