"""Story-level documents and LDA topic features via collapsed Gibbs sampling."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .rng import Rng
from .textfeat import PackageRecord, stopwords

log = logging.getLogger(__name__)

SUFFIXES = ("ing", "ed", "ly", "s")
MIN_STEM = 3
INFERENCE_SWEEPS = 20

_NON_WORD = re.compile(r"[^\w\s]|_")


def stem(word: str) -> str:
    """Strip the first matching suffix in (ing, ed, ly, s) if a stem of >= 3 chars remains."""
    for suffix in SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= MIN_STEM:
            return word[: -len(suffix)]
    return word


def preprocess(text: str) -> list[str]:
    """Lowercase, drop punctuation and stopwords, stem."""
    sw = stopwords()
    words = _NON_WORD.sub(" ", text.lower()).split()
    return [stem(w) for w in words if w not in sw]


@dataclass
class Document:
    story_id: str
    terms: list[int]


@dataclass
class Corpus:
    documents: list[Document]
    vocab: list[str]
    dropped: list[str] = field(default_factory=list)

    @property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.vocab)}


def story_texts(records: Sequence[PackageRecord]) -> dict[str, str]:
    """Story text per test_id: the distinct ledes followed by every distinct headline."""
    ledes: dict[str, list[str]] = {}
    heads: dict[str, list[str]] = {}
    for rec in records:
        ledes.setdefault(rec.test_id, [])
        heads.setdefault(rec.test_id, [])
        if rec.lede and rec.lede.strip() and rec.lede not in ledes[rec.test_id]:
            ledes[rec.test_id].append(rec.lede)
        if rec.headline not in heads[rec.test_id]:
            heads[rec.test_id].append(rec.headline)
    return {sid: " ".join(ledes[sid] + heads[sid]) for sid in heads}


def build_documents(records: Sequence[PackageRecord], min_df: int = 2) -> Corpus:
    """Group packages by story and map them to vocabulary-indexed documents.

    Terms found in fewer than ``min_df`` documents are pruned. Documents left
    empty are dropped and listed in ``Corpus.dropped``.
    """
    if not records:
        raise InvalidInputError("no records")
    tokens = {sid: preprocess(text) for sid, text in story_texts(records).items()}
    df = Counter(t for toks in tokens.values() for t in set(toks))
    vocab = sorted(t for t, c in df.items() if c >= min_df)
    index = {t: i for i, t in enumerate(vocab)}
    docs, dropped = [], []
    for sid, toks in tokens.items():
        terms = [index[t] for t in toks if t in index]
        if terms:
            docs.append(Document(sid, terms))
        else:
            dropped.append(sid)
    if dropped:
        log.warning("dropped %d empty document(s): %s", len(dropped), ", ".join(dropped))
    return Corpus(docs, vocab, dropped)


def _flatten(documents: Sequence[Document]) -> tuple[np.ndarray, np.ndarray]:
    lengths = [len(d.terms) for d in documents]
    doc_ptr = np.zeros(len(documents) + 1, dtype=np.int64)
    np.cumsum(lengths, out=doc_ptr[1:])
    words = np.fromiter((t for d in documents for t in d.terms), dtype=np.int64, count=int(doc_ptr[-1]))
    return doc_ptr, words


@dataclass
class LdaModel:
    n_topics: int
    alpha: float
    beta: float
    vocab: list[str]
    topic_word_counts: np.ndarray
    topic_totals: np.ndarray
    doc_topic_counts: np.ndarray | None = None
    story_ids: list[str] = field(default_factory=list)

    @property
    def vocab_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.vocab)}

    def top_terms(self, topic: int, n: int = 10) -> list[str]:
        order = np.argsort(-self.topic_word_counts[topic], kind="stable")[:n]
        return [self.vocab[i] for i in order]

    def to_json(self) -> dict:
        return {
            "n_topics": self.n_topics,
            "alpha": self.alpha,
            "beta": self.beta,
            "vocab": self.vocab,
            "topic_word_counts": self.topic_word_counts.tolist(),
            "topic_totals": self.topic_totals.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LdaModel":
        twc = np.asarray(data["topic_word_counts"], dtype=np.int64).reshape(data["n_topics"], len(data["vocab"]))
        totals = np.asarray(data["topic_totals"], dtype=np.int64)
        if not np.array_equal(totals, twc.sum(axis=1)):
            raise InvalidInputError("topic_totals inconsistent with topic_word_counts")
        return cls(int(data["n_topics"]), float(data["alpha"]), float(data["beta"]), list(data["vocab"]), twc, totals)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LdaModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_lda(
    documents: Sequence[Document],
    n_topics: int,
    alpha: float | None = None,
    beta: float = 0.01,
    iterations: int = 500,
    seed: int = 0,
    vocab: Sequence[str] | None = None,
    on_sweep: Callable[[int, LdaModel], None] | None = None,
) -> LdaModel:
    """Fit LDA by collapsed Gibbs sampling.

    ``alpha`` defaults to ``50 / n_topics``. Topic assignments start uniformly
    at random from ``seed``; each sweep resamples every token from
    ``(n_dk + alpha) (n_kw + beta) / (n_k + V beta)``. ``on_sweep`` is called
    after every sweep with the sweep index and the current (live) model.
    """
    if n_topics < 1:
        raise InvalidInputError("n_topics must be >= 1")
    if iterations < 1:
        raise InvalidInputError("iterations must be >= 1")
    documents = [d for d in documents if d.terms]
    if not documents:
        raise InvalidInputError("empty corpus")
    if alpha is None:
        alpha = 50.0 / n_topics
    n_vocab = len(vocab) if vocab is not None else 1 + max(t for d in documents for t in d.terms)
    vocab = list(vocab) if vocab is not None else [str(i) for i in range(n_vocab)]

    doc_ptr, words = _flatten(documents)
    rng = Rng(seed)
    z = np.array([rng.randbelow(n_topics) for _ in range(words.shape[0])], dtype=np.int64)
    ndk = np.zeros((len(documents), n_topics), dtype=np.int64)
    nkw = np.zeros((n_topics, n_vocab), dtype=np.int64)
    doc_of = np.repeat(np.arange(len(documents)), np.diff(doc_ptr))
    np.add.at(ndk, (doc_of, z), 1)
    np.add.at(nkw, (z, words), 1)
    nk = nkw.sum(axis=1)

    model = LdaModel(n_topics, float(alpha), float(beta), vocab, nkw, nk, ndk, [d.story_id for d in documents])
    for sweep in range(iterations):
        kernels.gibbs_sweep(doc_ptr, words, z, ndk, nkw, nk, float(alpha), float(beta), True, rng.state)
        if on_sweep is not None:
            on_sweep(sweep, model)
    return model


def doc_topic_distribution(model: LdaModel, doc: Document, seed: int = 0) -> np.ndarray:
    """Posterior-mean topic proportions of ``doc`` with the model's counts frozen.

    Out-of-vocabulary terms are ignored; a document with no known terms gets
    the uniform prior ``1/K``.
    """
    k = model.n_topics
    n_vocab = len(model.vocab)
    terms = [t for t in doc.terms if 0 <= t < n_vocab]
    if not terms:
        return np.full(k, 1.0 / k)
    if k == 1:
        return np.ones(1)
    rng = Rng(seed)
    words = np.asarray(terms, dtype=np.int64)
    doc_ptr = np.array([0, len(terms)], dtype=np.int64)
    z = np.array([rng.randbelow(k) for _ in terms], dtype=np.int64)
    ndk = np.zeros((1, k), dtype=np.int64)
    np.add.at(ndk[0], z, 1)
    nkw = np.ascontiguousarray(model.topic_word_counts, dtype=np.int64)
    nk = np.ascontiguousarray(model.topic_totals, dtype=np.int64)
    for _ in range(INFERENCE_SWEEPS):
        kernels.gibbs_sweep(doc_ptr, words, z, ndk, nkw, nk, model.alpha, model.beta, False, rng.state)
    theta = (ndk[0] + model.alpha) / (len(terms) + k * model.alpha)
    return theta / theta.sum()


def encode(text: str, model: LdaModel) -> list[int]:
    index = model.vocab_index
    return [index[t] for t in preprocess(text) if t in index]


def topic_columns(model: LdaModel, records: Sequence[PackageRecord], seed: int = 0) -> np.ndarray:
    """Topic proportions per package row, taken from the package's story document."""
    by_story = {}
    for sid, text in story_texts(records).items():
        by_story[sid] = doc_topic_distribution(model, Document(sid, encode(text, model)), seed=seed)
    return np.vstack([by_story[rec.test_id] for rec in records]) if records else np.zeros((0, model.n_topics))
