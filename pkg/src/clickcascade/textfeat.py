"""Headline tokenization, clickbait feature extraction and the feature matrix."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, RecordError

PUNCTUATION = frozenset(".,!?;:\"'—")
SENTENCE_END = frozenset(".!?")

PRONOUNS = frozenset(
    """i me my mine myself you your yours yourself yourselves he him his himself
    she her hers herself it its itself we us our ours ourselves they them their
    theirs themselves""".split()
)
YOU_FORMS = frozenset({"you", "your", "yours", "yourself", "yourselves"})
INTERROGATIVES = frozenset({"who", "what", "when", "where", "why", "how", "which", "whose", "whom"})
DEMONSTRATIVES = frozenset({"this", "that", "these", "those"})
QUESTION_STARTERS = frozenset(
    {"who", "what", "when", "where", "why", "how", "is", "are", "do", "does", "can", "should"}
)
READER_FORMS = frozenset({"you", "your", "you're", "youre"})

FORMAL_FEATURES = (
    "n_chars",
    "n_words",
    "avg_word_len",
    "n_sentences",
    "n_exclamation",
    "n_question_mark",
    "n_dots",
    "contains_number",
    "contains_pronoun",
    "contains_you",
    "starts_how_to",
    "starts_interrogative",
    "contains_quote",
    "stopword_ratio",
    "forward_reference",
    "all_caps_word",
)
HEADLINE_TYPES = ("normal", "question", "howto", "number", "reader")

# a quote mark that is not an apostrophe inside a word
_QUOTE_RE = re.compile(r"[\"“”]|(?<![A-Za-z0-9])['‘’]|['‘’](?![A-Za-z0-9])")


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    """The built-in English stopword list."""
    text = resources.files("clickcascade").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def tokenize(text: str) -> list[str]:
    """Split on whitespace; each punctuation character becomes its own token."""
    tokens: list[str] = []
    for chunk in text.split():
        buf = []
        for ch in chunk:
            if ch in PUNCTUATION:
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


def _is_word(token: str) -> bool:
    return token not in PUNCTUATION


def _words(tokens: Sequence[str]) -> list[str]:
    return [t for t in tokens if _is_word(t)]


def _count_sentences(tokens: Sequence[str]) -> int:
    count = 0
    in_segment = False
    for tok in tokens:
        if tok in SENTENCE_END:
            if in_segment:
                count += 1
                in_segment = False
        elif _is_word(tok):
            in_segment = True
    return count + (1 if in_segment else 0)


def _is_all_caps(word: str) -> bool:
    letters = [c for c in word if c.isalpha()]
    return len(letters) >= 2 and all(c.isupper() for c in letters)


def extract_formal(headline: str) -> dict[str, float]:
    """Formal clickbait features of one headline.

    Counts are taken over :func:`tokenize` output; ``n_chars`` sums the
    lengths of all tokens, so whitespace is not counted. Binary features are
    0/1. ``forward_reference`` is an approximation: it flags the presence of a
    demonstrative (this/that/these/those) in any casing.
    """
    if not headline or not headline.strip():
        raise InvalidInputError("headline is empty")
    tokens = tokenize(headline)
    words = _words(tokens)
    lower = [w.lower() for w in words]
    n_words = len(words)
    sw = stopwords()
    return {
        "n_chars": float(sum(len(t) for t in tokens)),
        "n_words": float(n_words),
        "avg_word_len": sum(len(w) for w in words) / n_words if n_words else 0.0,
        "n_sentences": float(_count_sentences(tokens)),
        "n_exclamation": float(tokens.count("!")),
        "n_question_mark": float(tokens.count("?")),
        "n_dots": float(tokens.count(".")),
        "contains_number": float(any(any(c.isdigit() for c in w) for w in words)),
        "contains_pronoun": float(any(w in PRONOUNS for w in lower)),
        "contains_you": float(any(w in YOU_FORMS for w in lower)),
        "starts_how_to": float(lower[:2] == ["how", "to"]),
        "starts_interrogative": float(bool(lower) and lower[0] in INTERROGATIVES),
        "contains_quote": float(bool(_QUOTE_RE.search(headline))),
        "stopword_ratio": sum(w in sw for w in lower) / n_words if n_words else 0.0,
        "forward_reference": float(any(w in DEMONSTRATIVES for w in lower)),
        "all_caps_word": float(any(_is_all_caps(w) for w in words)),
    }


def classify_headline_type(headline: str) -> str:
    """One of ``normal``, ``question``, ``howto``, ``number``, ``reader``.

    Precedence when several patterns match: howto > number > question > reader.
    """
    stripped = headline.strip()
    words = [w.lower() for w in _words(tokenize(stripped))]
    if words[:2] == ["how", "to"]:
        return "howto"
    if words:
        try:
            int(words[0].replace(",", ""))
        except ValueError:
            pass
        else:
            return "number"
    if stripped.endswith("?") or (words and words[0] in QUESTION_STARTERS):
        return "question"
    if any(w in READER_FORMS for w in words) or re.search(r"\byou'?re\b", stripped, re.I):
        return "reader"
    return "normal"


@dataclass(frozen=True)
class Lexicon:
    name: str
    entries: Mapping[str, float]

    def __post_init__(self):
        if not self.entries:
            raise InvalidInputError(f"lexicon {self.name!r} has no entries")
        for term in self.entries:
            if term != term.lower():
                raise InvalidInputError(f"lexicon {self.name!r}: term {term!r} is not lowercase")

    @property
    def max_weight(self) -> float:
        return max(self.entries.values())

    @classmethod
    def from_csv(cls, path: str | Path, name: str | None = None) -> "Lexicon":
        """Read a ``term,weight`` CSV; a missing weight defaults to 1.0."""
        path = Path(path)
        entries: dict[str, float] = {}
        with path.open(newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or not row[0].strip():
                    continue
                term = row[0].strip().lower()
                if lineno == 1 and term == "term":
                    continue
                weight = row[1].strip() if len(row) > 1 else ""
                entries[term] = float(weight) if weight else 1.0
        return cls(name or path.stem, entries)


def load_lexicons(directory: str | Path) -> list[Lexicon]:
    """All ``*.csv`` lexicons in ``directory``, sorted by file name."""
    return [Lexicon.from_csv(p) for p in sorted(Path(directory).glob("*.csv"))]


def demo_lexicons() -> list[Lexicon]:
    """The small positive/negative/arousal lexicons bundled with the package."""
    root = resources.files("clickcascade").joinpath("data/lexicons")
    with resources.as_file(root) as path:
        return load_lexicons(path)


def score_lexicon(tokens: Sequence[str], lexicon: Lexicon) -> float:
    """Summed weight of matched alphabetic tokens divided by the number of alphabetic tokens."""
    alpha = [t.lower() for t in tokens if t.isalpha()]
    if not alpha:
        return 0.0
    return sum(lexicon.entries.get(t, 0.0) for t in alpha) / len(alpha)


@dataclass(frozen=True)
class PackageRecord:
    test_id: str
    headline: str
    lede: str | None = None
    impressions: int = 0
    clicks: int = 0

    def __post_init__(self):
        if not self.headline or not self.headline.strip():
            raise InvalidInputError(f"package in test {self.test_id!r} has an empty headline")
        if self.impressions < 0 or self.clicks < 0:
            raise InvalidInputError(f"package in test {self.test_id!r} has negative counts")
        if self.clicks > self.impressions:
            raise InvalidInputError(
                f"package in test {self.test_id!r}: clicks ({self.clicks}) > impressions ({self.impressions})"
            )


@dataclass(frozen=True)
class FeatureDescriptor:
    index: int
    name: str
    kind: str  # formal | lexicon | topic


@dataclass
class FeatureMatrix:
    descriptors: list[FeatureDescriptor]
    rows: np.ndarray
    outcomes: np.ndarray
    row_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64).reshape(len(self.row_ids), len(self.descriptors))
        self.outcomes = np.asarray(self.outcomes, dtype=np.float64)
        if not (len(self.row_ids) == self.rows.shape[0] == self.outcomes.shape[0]):
            raise InvalidInputError("row, outcome and id counts differ")
        if [d.index for d in self.descriptors] != list(range(len(self.descriptors))):
            raise InvalidInputError("descriptor indices must be contiguous from 0")
        if np.any((self.outcomes < 0) | (self.outcomes > 1)):
            raise InvalidInputError("outcomes must lie in [0, 1]")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.descriptors]

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["package_id", *self.names, "ctr"])
            for rid, row, y in zip(self.row_ids, self.rows, self.outcomes):
                writer.writerow([rid, *(repr(float(v)) for v in row), repr(float(y))])

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureMatrix":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) < 3 or header[0] != "package_id" or header[-1] != "ctr":
                raise InvalidInputError(f"{path}: expected header package_id,...,ctr")
            names = header[1:-1]
            ids, rows, ys = [], [], []
            for row in reader:
                if not row:
                    continue
                ids.append(row[0])
                rows.append([float(v) for v in row[1:-1]])
                ys.append(float(row[-1]))
        descriptors = [FeatureDescriptor(i, n, _kind_of(n)) for i, n in enumerate(names)]
        return cls(descriptors, np.array(rows).reshape(len(ids), len(names)), np.array(ys), ids)


def _kind_of(name: str) -> str:
    if name.startswith("lex_"):
        return "lexicon"
    if name.startswith("topic_"):
        return "topic"
    return "formal"


def package_id(record: PackageRecord, position: int) -> str:
    return f"{record.test_id}#{position}"


def build_matrix(
    records: Sequence[PackageRecord],
    lexicons: Iterable[Lexicon] = (),
    topic_columns: np.ndarray | None = None,
) -> FeatureMatrix:
    """Assemble the headline-feature matrix with click-through rate as outcome.

    Columns are the formal features, one ``lex_<name>`` score per lexicon,
    one ``type_<label>`` indicator per headline type, then ``topic_<k>``
    proportions if ``topic_columns`` (rows aligned with ``records``) is given.
    """
    lexicons = list(lexicons)
    problems = []
    for i, rec in enumerate(records):
        if rec.impressions == 0:
            problems.append((i, "zero impressions"))
        elif rec.clicks > rec.impressions:
            problems.append((i, "clicks exceed impressions"))
    if problems:
        raise RecordError(problems)

    names = list(FORMAL_FEATURES)
    kinds = ["formal"] * len(names)
    names += [f"lex_{lex.name}" for lex in lexicons]
    kinds += ["lexicon"] * len(lexicons)
    names += [f"type_{t}" for t in HEADLINE_TYPES]
    kinds += ["formal"] * len(HEADLINE_TYPES)
    n_topics = 0
    if topic_columns is not None:
        topic_columns = np.asarray(topic_columns, dtype=np.float64)
        if topic_columns.ndim != 2 or topic_columns.shape[0] != len(records):
            raise InvalidInputError("topic columns must have one row per record")
        n_topics = topic_columns.shape[1]
        names += [f"topic_{k}" for k in range(n_topics)]
        kinds += ["topic"] * n_topics

    rows = np.zeros((len(records), len(names)))
    for r, rec in enumerate(records):
        formal = extract_formal(rec.headline)
        values = [formal[k] for k in FORMAL_FEATURES]
        tokens = tokenize(rec.headline)
        values += [score_lexicon(tokens, lex) for lex in lexicons]
        label = classify_headline_type(rec.headline)
        values += [1.0 if t == label else 0.0 for t in HEADLINE_TYPES]
        if n_topics:
            values += list(topic_columns[r])
        rows[r] = values

    outcomes = np.array([rec.clicks / rec.impressions for rec in records], dtype=np.float64)
    descriptors = [FeatureDescriptor(i, n, k) for i, (n, k) in enumerate(zip(names, kinds))]
    ids = [package_id(rec, i) for i, rec in enumerate(records)]
    return FeatureMatrix(descriptors, rows, outcomes, ids)
