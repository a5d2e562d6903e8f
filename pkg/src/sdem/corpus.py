"""Labeled bag-of-words corpora: file parsing, vocabularies, synthetic samplers.

Two line-oriented text formats are supported, both one document per line with
the class label as the first whitespace-separated field:

* ``label-tokens``: the remaining fields are word tokens, repeated words count.
* ``label-counts``: the remaining fields are ``word:count`` pairs with positive
  integer counts.

Tokens are lowercased. Files whose first two bytes are the gzip magic are
decompressed transparently. Vocabulary and label ids are assigned in order of
first appearance, which keeps parsing deterministic for a fixed file.
"""

from __future__ import annotations

import gzip
import io
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

FORMATS = ("label-tokens", "label-counts")


class CorpusError(ValueError):
    """Malformed corpus input."""


class Document:
    """Sparse bag of word counts.

    ``word_ids`` and ``count_values`` are parallel arrays in first-seen order;
    ``counts`` is the same content as a dict. Counts are positive integers.
    """

    __slots__ = ("counts", "word_ids", "count_values", "n_distinct", "n_tokens")

    def __init__(self, counts: dict[int, int]):
        for w, c in counts.items():
            if c <= 0:
                raise CorpusError(f"non-positive count {c} for word id {w}")
        self.counts = dict(counts)
        self.word_ids = np.fromiter(self.counts.keys(), dtype=np.int64, count=len(self.counts))
        self.count_values = np.fromiter(self.counts.values(), dtype=np.float64, count=len(self.counts))
        self.n_distinct = len(self.counts)
        self.n_tokens = int(self.count_values.sum())

    def __eq__(self, other):
        return isinstance(other, Document) and self.counts == other.counts

    def __repr__(self):
        return f"Document({self.counts!r})"


@dataclass
class Corpus:
    """Documents plus the vocabulary and label namespaces they are encoded in."""

    documents: list[Document]
    doc_labels: list[int]
    vocab: list[str]
    labels: list[str]
    skipped_lines: int = 0

    def __post_init__(self):
        self.vocab_index = {w: i for i, w in enumerate(self.vocab)}
        self.label_index = {s: i for i, s in enumerate(self.labels)}

    @property
    def n(self) -> int:
        return len(self.documents)

    @property
    def n_words(self) -> int:
        return len(self.vocab)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def instances(self) -> list[tuple[int, Document]]:
        return list(zip(self.doc_labels, self.documents))

    def __eq__(self, other):
        return (
            isinstance(other, Corpus)
            and self.vocab == other.vocab
            and self.labels == other.labels
            and self.doc_labels == other.doc_labels
            and self.documents == other.documents
        )


def _open_text(path) -> io.TextIOBase:
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _parse_counts_field(field: str, lineno: int) -> tuple[str, int]:
    word, sep, count = field.rpartition(":")
    if not sep or not word:
        raise CorpusError(f"line {lineno}: expected word:count, got {field!r}")
    try:
        c = int(count)
    except ValueError:
        raise CorpusError(f"line {lineno}: count {count!r} is not an integer") from None
    if c <= 0:
        raise CorpusError(f"line {lineno}: count must be positive, got {c}")
    return word.lower(), c


def parse_corpus(path, fmt: str = "label-tokens") -> Corpus:
    """Parse a corpus file, assigning word and label ids in first-seen order.

    Empty lines are skipped (counted in ``skipped_lines``); any other
    malformed content raises :class:`CorpusError` naming the line number.
    """
    if fmt not in FORMATS:
        raise CorpusError(f"unknown corpus format {fmt!r}, expected one of {FORMATS}")
    vocab: list[str] = []
    vocab_index: dict[str, int] = {}
    labels: list[str] = []
    label_index: dict[str, int] = {}
    documents: list[Document] = []
    doc_labels: list[int] = []
    skipped = 0
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                skipped += 1
                continue
            fields = line.split()
            label = fields[0]
            if label not in label_index:
                label_index[label] = len(labels)
                labels.append(label)
            counts: dict[int, int] = {}
            if fmt == "label-tokens":
                for tok in fields[1:]:
                    tok = tok.lower()
                    wid = vocab_index.get(tok)
                    if wid is None:
                        wid = len(vocab)
                        vocab_index[tok] = wid
                        vocab.append(tok)
                    counts[wid] = counts.get(wid, 0) + 1
            else:
                for field in fields[1:]:
                    word, c = _parse_counts_field(field, lineno)
                    wid = vocab_index.get(word)
                    if wid is None:
                        wid = len(vocab)
                        vocab_index[word] = wid
                        vocab.append(word)
                    counts[wid] = counts.get(wid, 0) + c
            documents.append(Document(counts))
            doc_labels.append(label_index[label])
    if skipped:
        log.debug("skipped %d empty lines in %s", skipped, path)
    return Corpus(documents, doc_labels, vocab, labels, skipped_lines=skipped)


def write_corpus(corpus: Corpus, path, fmt: str = "label-tokens") -> None:
    """Serialize a corpus; the inverse of :func:`parse_corpus` for both formats."""
    if fmt not in FORMATS:
        raise CorpusError(f"unknown corpus format {fmt!r}, expected one of {FORMATS}")
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        for label_id, doc in zip(corpus.doc_labels, corpus.documents):
            parts = [corpus.labels[label_id]]
            if fmt == "label-tokens":
                for wid, c in doc.counts.items():
                    parts.extend([corpus.vocab[wid]] * c)
            else:
                parts.extend(f"{corpus.vocab[wid]}:{c}" for wid, c in doc.counts.items())
            fh.write(" ".join(parts) + "\n")


def apply_vocabulary(corpus: Corpus, vocab: list[str], labels: list[str] | None = None) -> Corpus:
    """Re-encode ``corpus`` against a closed vocabulary (and optionally labels).

    Words outside ``vocab`` are dropped; documents that become empty are kept
    so held-out scoring still sees them (they score on the class prior alone).
    A label unknown to ``labels`` raises :class:`CorpusError`, since such a
    document could never be scored correctly.
    """
    vocab_index = {w: i for i, w in enumerate(vocab)}
    if labels is None:
        labels = list(corpus.labels)
    label_map = {s: i for i, s in enumerate(labels)}
    docs = []
    doc_labels = []
    for label_id, doc in zip(corpus.doc_labels, corpus.documents):
        name = corpus.labels[label_id]
        if name not in label_map:
            raise CorpusError(f"label {name!r} does not occur in the training label set")
        counts = {}
        for wid, c in doc.counts.items():
            new = vocab_index.get(corpus.vocab[wid])
            if new is not None:
                counts[new] = counts.get(new, 0) + c
        docs.append(Document(counts))
        doc_labels.append(label_map[name])
    return Corpus(docs, doc_labels, list(vocab), labels, skipped_lines=corpus.skipped_lines)


def _corpus_from_counts(count_rows, label_ids, n_classes, vocab_size) -> Corpus:
    vocab = [f"w{i:04d}" for i in range(vocab_size)]
    labels = [f"c{k}" for k in range(n_classes)]
    docs = []
    for row in count_rows:
        (ids,) = np.nonzero(row)
        docs.append(Document({int(w): int(row[w]) for w in ids}))
    return Corpus(docs, [int(k) for k in label_ids], vocab, labels)


def make_multinomial_corpus(
    n_docs: int,
    n_classes: int = 3,
    vocab_size: int = 40,
    mean_tokens: float = 20.0,
    seed: int = 0,
    concentration: float = 1.0,
) -> Corpus:
    """Synthetic corpus drawn exactly from a class-conditional multinomial model."""
    rng = np.random.default_rng(seed)
    word_dists = rng.dirichlet(np.full(vocab_size, concentration), size=n_classes)
    label_ids = rng.integers(0, n_classes, size=n_docs)
    lengths = np.maximum(1, rng.poisson(mean_tokens, size=n_docs))
    rows = [rng.multinomial(lengths[i], word_dists[label_ids[i]]) for i in range(n_docs)]
    return _corpus_from_counts(rows, label_ids, n_classes, vocab_size)


def make_bursty_corpus(
    n_docs: int,
    n_classes: int = 3,
    vocab_size: int = 120,
    mean_tokens: float = 30.0,
    seed: int = 0,
    burstiness: float = 6.0,
    signal: float = 0.2,
) -> Corpus:
    """Synthetic text whose word counts violate the multinomial assumption.

    Every class shares a heavy-tailed background distribution and boosts its
    own slice of the vocabulary by ``signal`` probability mass. Each document
    draws its own word distribution from a Dirichlet with total concentration
    ``burstiness``, so repeated words are much burstier than a multinomial
    sample. A stress fixture for training dynamics on heavy-tailed,
    repetitive documents; the class ranking itself stays learnable by plain
    counting.
    """
    rng = np.random.default_rng(seed)
    background = 1.0 / (np.arange(vocab_size) + 2.0)
    background /= background.sum()
    slice_size = vocab_size // n_classes
    class_dists = np.empty((n_classes, vocab_size))
    for k in range(n_classes):
        boost = np.zeros(vocab_size)
        boost[k * slice_size : (k + 1) * slice_size] = 1.0 / slice_size
        class_dists[k] = (1.0 - signal) * background + signal * boost
    label_ids = rng.integers(0, n_classes, size=n_docs)
    lengths = np.maximum(1, rng.poisson(mean_tokens, size=n_docs))
    rows = []
    for i in range(n_docs):
        doc_dist = rng.dirichlet(burstiness * class_dists[label_ids[i]])
        rows.append(rng.multinomial(lengths[i], doc_dist))
    return _corpus_from_counts(rows, label_ids, n_classes, vocab_size)


def make_subtopic_corpus(
    n_docs: int,
    n_classes: int = 3,
    slice_words: int = 10,
    mean_tokens: float = 12.0,
    seed: int = 0,
    minority: float = 0.2,
    overlap: float = 0.35,
    floor: float = 0.05,
) -> Corpus:
    """Synthetic text where the first class is a two-subtopic mixture.

    Each class owns a ``slice_words``-wide main slice and one extra shared
    slice closes the vocabulary; ``floor`` probability mass is spread over
    every word. Class 0 draws a ``minority`` fraction of its documents almost
    entirely from the shared slice, while class 1 spends ``overlap`` of its
    mass there in every document. A per-class multinomial fitted by counting
    averages class 0's two modes and hands the minority documents to class 1
    even though class 0's own subtopic explains them better; re-weighting the
    shared slice, which discriminative training does, reclaims them. The same
    minority-mode mechanism as the continuous toy distribution, restated for
    text.
    """
    if n_classes < 2:
        raise CorpusError("the shared-slice overlap needs at least two classes")
    rng = np.random.default_rng(seed)
    vocab_size = (n_classes + 1) * slice_words
    shared = n_classes * slice_words
    body = 1.0 - floor

    def blend(*blocks):
        p = np.full(vocab_size, floor / vocab_size)
        for start, mass in blocks:
            p[start : start + slice_words] += mass / slice_words
        return p / p.sum()

    class_dists = [blend((k * slice_words, body)) for k in range(n_classes)]
    class_dists[1] = blend((slice_words, body - overlap), (shared, overlap))
    minority_dist = blend((shared, body))
    label_ids = rng.integers(0, n_classes, size=n_docs)
    lengths = np.maximum(1, rng.poisson(mean_tokens, size=n_docs))
    rows = []
    for i in range(n_docs):
        k = label_ids[i]
        dist = minority_dist if (k == 0 and rng.random() < minority) else class_dists[k]
        rows.append(rng.multinomial(lengths[i], dist))
    return _corpus_from_counts(rows, label_ids, n_classes, vocab_size)
