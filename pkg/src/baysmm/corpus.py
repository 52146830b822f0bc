"""Vocabularies, bag-of-words documents and the sparse corpus file format.

BoW files follow the UCI bag-of-words layout::

    D
    V
    NNZ
    docID wordID count      (NNZ lines, 1-based ids, ascending)

The reader also accepts the three header integers on a single line.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class CorpusFormatError(ValueError):
    """Raised for malformed corpus, vocabulary or label files."""

    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.lineno = lineno


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.tokens = list(self.tokens)
        if not self.tokens:
            raise ValueError("vocabulary must contain at least one token")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def V(self) -> int:
        return len(self.tokens)


@dataclass
class BowDocument:
    """Sparse word counts of one document; ``ids`` strictly increasing."""

    ids: np.ndarray
    counts: np.ndarray
    doc_id: str = ""

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if self.ids.shape != self.counts.shape:
            raise ValueError("ids and counts must have equal length")
        if self.ids.size:
            if np.any(np.diff(self.ids) <= 0):
                raise ValueError("word ids must be strictly increasing")
            if self.ids[0] < 0:
                raise ValueError("word ids must be non-negative")
            if np.any(self.counts < 1):
                raise ValueError("counts must be positive")

    @classmethod
    def from_entries(cls, entries, doc_id=""):
        entries = sorted(entries)
        ids = [i for i, _ in entries]
        counts = [c for _, c in entries]
        return cls(ids, counts, doc_id)

    @property
    def entries(self) -> list[tuple[int, int]]:
        return [(int(i), int(c)) for i, c in zip(self.ids, self.counts)]

    @property
    def length(self) -> int:
        """Number of word tokens N_d."""
        return int(self.counts.sum())

    def dense(self, V: int) -> np.ndarray:
        x = np.zeros(V)
        x[self.ids] = self.counts
        return x


@dataclass
class BowCorpus:
    vocab: Vocabulary
    docs: list[BowDocument]

    def __post_init__(self):
        V = self.vocab.V
        for d in self.docs:
            if d.ids.size and d.ids[-1] >= V:
                raise ValueError(
                    f"document {d.doc_id!r} has word id {d.ids[-1]} >= V={V}")

    def __len__(self):
        return len(self.docs)

    @property
    def V(self) -> int:
        return self.vocab.V

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.docs]

    def lengths(self) -> np.ndarray:
        return np.array([d.length for d in self.docs], dtype=np.int64)

    def word_counts(self) -> np.ndarray:
        """Total count of every vocabulary word over the corpus."""
        totals = np.zeros(self.V, dtype=np.int64)
        for d in self.docs:
            totals[d.ids] += d.counts
        return totals

    def to_csr(self) -> sp.csr_matrix:
        """Document-by-word count matrix (float64)."""
        indptr = np.zeros(len(self.docs) + 1, dtype=np.int64)
        for k, d in enumerate(self.docs):
            indptr[k + 1] = indptr[k] + d.ids.size
        if self.docs:
            indices = np.concatenate([d.ids for d in self.docs])
            data = np.concatenate([d.counts for d in self.docs]).astype(float)
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        return sp.csr_matrix((data, indices, indptr),
                             shape=(len(self.docs), self.V))

    def subset(self, indices) -> "BowCorpus":
        return BowCorpus(self.vocab, [self.docs[i] for i in indices])


@dataclass
class LabeledCorpus:
    corpus: BowCorpus
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.corpus),):
            raise ValueError("need exactly one label per document")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label ids must lie in 0..L-1")

    @property
    def L(self) -> int:
        return len(self.class_names)

    def one_hot(self) -> np.ndarray:
        H = np.zeros((len(self.labels), self.L))
        H[np.arange(len(self.labels)), self.labels] = 1.0
        return H


def tokenize(text: str) -> list[str]:
    """Lowercase, replace non-alphanumerics with spaces, split on whitespace."""
    cleaned = "".join(ch if ch.isalnum() else " " for ch in text.lower())
    return cleaned.split()


def build_vocab(raw_docs: Iterable[Sequence[str]], min_doc_freq: int = 2,
                max_size: int | None = None) -> Vocabulary:
    """Keep tokens occurring in at least ``min_doc_freq`` distinct documents.

    ``max_size`` further keeps only the most frequent tokens by total count
    (ties broken lexicographically).  Ids follow lexicographic token order so
    the result does not depend on document order.
    """
    if min_doc_freq < 1:
        raise ValueError("min_doc_freq must be >= 1")
    if max_size is not None and max_size < 1:
        raise ValueError("max_size must be >= 1")
    df, tf = Counter(), Counter()
    for doc in raw_docs:
        df.update(set(doc))
        tf.update(doc)
    kept = [tok for tok, n in df.items() if n >= min_doc_freq]
    if max_size is not None and len(kept) > max_size:
        kept = sorted(kept, key=lambda t: (-tf[t], t))[:max_size]
    if not kept:
        raise ValueError(
            f"empty vocabulary: no token occurs in >= {min_doc_freq} documents")
    return Vocabulary(sorted(kept))


def vectorize(raw_doc: Sequence[str], vocab: Vocabulary, doc_id: str = "") -> BowDocument:
    """Count in-vocabulary tokens; unknown tokens are dropped."""
    counts = Counter(vocab.index[t] for t in raw_doc if t in vocab.index)
    return BowDocument.from_entries(counts.items(), doc_id)


def read_bow(path, vocab: Vocabulary | None = None) -> BowCorpus:
    """Read a UCI-style BoW file.

    Document ids become the strings ``"1".."D"``.  When ``vocab`` is not given
    a placeholder vocabulary ``w1..wV`` is attached.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    pos = 0

    def next_ints():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise CorpusFormatError("unexpected end of file in header", path, pos + 1)
        try:
            vals = [int(v) for v in lines[pos].split()]
        except ValueError:
            raise CorpusFormatError(f"non-integer header field {lines[pos]!r}",
                                    path, pos + 1) from None
        pos += 1
        return vals

    first = next_ints()
    if len(first) == 3:
        D, V, nnz = first
    elif len(first) == 1:
        rest = next_ints() + next_ints()
        if len(rest) != 2:
            raise CorpusFormatError("malformed header", path, pos)
        D, V, nnz = first[0], rest[0], rest[1]
    else:
        raise CorpusFormatError("malformed header", path, 1)
    if D < 0 or V < 0 or nnz < 0:
        raise CorpusFormatError("negative header value", path, pos)

    if vocab is None:
        if V < 1:
            raise CorpusFormatError("vocabulary size must be >= 1", path, pos)
        vocab = Vocabulary([f"w{i + 1}" for i in range(V)])
    elif vocab.V != V:
        raise CorpusFormatError(
            f"header V={V} does not match vocabulary size {vocab.V}", path, pos)

    per_doc = [([], []) for _ in range(D)]
    seen = 0
    prev = (0, 0)
    for lineno in range(pos, len(lines)):
        text = lines[lineno].strip()
        if not text:
            continue
        fields = text.split()
        if len(fields) != 3:
            raise CorpusFormatError("expected 'docID wordID count'", path, lineno + 1)
        try:
            d, w, c = (int(f) for f in fields)
        except ValueError:
            raise CorpusFormatError("non-integer field", path, lineno + 1) from None
        if not 1 <= d <= D:
            raise CorpusFormatError(f"docID {d} out of range 1..{D}", path, lineno + 1)
        if not 1 <= w <= V:
            raise CorpusFormatError(f"wordID {w} out of range 1..{V}", path, lineno + 1)
        if c < 1:
            raise CorpusFormatError(f"non-positive count {c}", path, lineno + 1)
        if (d, w) <= prev:
            raise CorpusFormatError("entries not in ascending (docID, wordID) order",
                                    path, lineno + 1)
        prev = (d, w)
        per_doc[d - 1][0].append(w - 1)
        per_doc[d - 1][1].append(c)
        seen += 1
    if seen != nnz:
        raise CorpusFormatError(f"header declares {nnz} entries, found {seen}", path)

    docs = [BowDocument(ids, counts, str(k + 1)) for k, (ids, counts) in enumerate(per_doc)]
    return BowCorpus(vocab, docs)


def write_bow(path, corpus: BowCorpus) -> None:
    """Write ``corpus`` in canonical three-line-header UCI form."""
    nnz = sum(d.ids.size for d in corpus.docs)
    with open(path, "w") as fh:
        fh.write(f"{len(corpus.docs)}\n{corpus.V}\n{nnz}\n")
        for k, d in enumerate(corpus.docs):
            for i, c in zip(d.ids, d.counts):
                fh.write(f"{k + 1} {i + 1} {c}\n")


def read_vocab(path) -> Vocabulary:
    with open(path) as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    for lineno, tok in enumerate(tokens, 1):
        if not tok or any(ch.isspace() for ch in tok):
            raise CorpusFormatError(f"invalid token {tok!r}", path, lineno)
    try:
        return Vocabulary(tokens)
    except ValueError as err:
        raise CorpusFormatError(str(err), path) from None


def write_vocab(path, vocab: Vocabulary) -> None:
    with open(path, "w") as fh:
        for tok in vocab.tokens:
            fh.write(tok + "\n")


def read_labels(path) -> dict[str, str]:
    """Map ``docID -> class_name`` from a tab-separated labels file."""
    labels = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise CorpusFormatError("expected 'docID<TAB>class_name'", path, lineno)
            if parts[0] in labels:
                raise CorpusFormatError(f"duplicate docID {parts[0]!r}", path, lineno)
            labels[parts[0]] = parts[1]
    return labels


def write_labels(path, doc_ids, class_names) -> None:
    with open(path, "w") as fh:
        for d, c in zip(doc_ids, class_names):
            fh.write(f"{d}\t{c}\n")


def label_ids(doc_ids, label_map, class_names=None):
    """Align a ``docID -> class`` map with ``doc_ids``.

    Returns ``(labels, class_names)``.  Class names are sorted unless given;
    a name outside a given list raises ``KeyError``.
    """
    missing = [d for d in doc_ids if d not in label_map]
    if missing:
        raise KeyError(f"no label for document(s) {missing[:5]}")
    if class_names is None:
        class_names = sorted({label_map[d] for d in doc_ids})
    lookup = {c: i for i, c in enumerate(class_names)}
    unknown = sorted({label_map[d] for d in doc_ids} - set(lookup))
    if unknown:
        raise KeyError(f"unknown class label(s) {unknown[:5]}")
    return np.array([lookup[label_map[d]] for d in doc_ids], dtype=np.int64), list(class_names)


def read_raw_documents(path) -> tuple[list[str], list[list[str]]]:
    """Load raw text as ``(names, token_lists)``.

    A directory yields one document per regular file (recursively, sorted by
    relative path); a file yields one document per line.
    """
    if os.path.isdir(path):
        names, docs = [], []
        for root, _, files in sorted(os.walk(path)):
            for fname in sorted(files):
                full = os.path.join(root, fname)
                with open(full, encoding="utf-8", errors="replace") as fh:
                    docs.append(tokenize(fh.read()))
                names.append(os.path.relpath(full, path))
        return names, docs
    with open(path, encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    return [str(i + 1) for i in range(len(lines))], [tokenize(l) for l in lines]
