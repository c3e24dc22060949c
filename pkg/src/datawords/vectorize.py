"""Fixed-length sparse tf-idf vectors over tokenized documents.

tf uses sublinear scaling (1 + ln count), idf the smoothed form
ln((1 + N) / (1 + df)) + 1, and vectors are L2-normalized by default.
Encoded structured-value tokens enter the vocabulary like any other word,
which is the whole point: one representation for text and data.

Two modes:

* indexed (default): vocabulary built from training documents, dimension
  equals vocabulary size;
* hashed: tokens map to 2**bits slots via multiplicative hashing with
  sign-less count accumulation, for corpora whose vocabulary would not
  fit in memory.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import Sentence, tokenize
from .errors import ConfigError

_FNV_OFFSET = 2166136261
_FNV_PRIME = 16777619
_KNUTH = 2654435761


@dataclass
class Vocabulary:
    """Token index assignments and document frequencies from training docs."""

    index: dict[str, int]
    df: dict[str, int]
    document_count: int

    def __len__(self) -> int:
        return len(self.index)

    def tokens_by_index(self) -> list[str]:
        return sorted(self.index, key=self.index.__getitem__)


def build_vocabulary(train_docs: Sequence[str], min_df: int = 1) -> Vocabulary:
    """Scan training documents; indices are assigned in first-seen order.

    min_df defaults to 1 so rare structured-value tokens are never
    silently dropped.
    """
    docs = list(train_docs)
    if not docs:
        raise ConfigError("cannot build a vocabulary from an empty training set")
    index: dict[str, int] = {}
    df: Counter = Counter()
    for doc in docs:
        seen = set()
        for tok in tokenize(doc):
            if tok not in index:
                index[tok] = len(index)
            seen.add(tok)
        df.update(seen)
    if min_df > 1:
        kept = [t for t in sorted(index, key=index.__getitem__) if df[t] >= min_df]
        index = {t: i for i, t in enumerate(kept)}
        df = Counter({t: df[t] for t in kept})
    return Vocabulary(index=index, df=dict(df), document_count=len(docs))


def _hash_slot(token: str, bits: int) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFF
    return ((h * _KNUTH) & 0xFFFFFFFF) >> (32 - bits)


@dataclass
class TfIdfModel:
    """Frozen vectorization state: vocabulary (or hash setup) plus idf weights."""

    vocabulary: Vocabulary | None
    idf: np.ndarray
    l2_normalize: bool = True
    hash_bits: int | None = None
    document_count: int = 0
    hashed_df: dict[int, int] = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "hashed" if self.hash_bits is not None else "indexed"

    @property
    def dimension(self) -> int:
        if self.hash_bits is not None:
            return 1 << self.hash_bits
        return len(self.vocabulary)


def fit_idf(vocab: Vocabulary, l2_normalize: bool = True) -> TfIdfModel:
    """idf(t) = ln((1 + N) / (1 + df(t))) + 1; always finite and positive."""
    n = vocab.document_count
    idf = np.empty(len(vocab), dtype=np.float64)
    for tok, ix in vocab.index.items():
        idf[ix] = math.log((1.0 + n) / (1.0 + vocab.df[tok])) + 1.0
    return TfIdfModel(
        vocabulary=vocab, idf=idf, l2_normalize=l2_normalize, document_count=n
    )


def fit_hashed_idf(
    train_docs: Sequence[str], bits: int, l2_normalize: bool = True
) -> TfIdfModel:
    """Hashed-mode counterpart of build_vocabulary + fit_idf."""
    docs = list(train_docs)
    if not docs:
        raise ConfigError("cannot fit a hashed model on an empty training set")
    if not (1 <= bits <= 30):
        raise ConfigError(f"hash bits must be in [1, 30], got {bits}")
    df: Counter = Counter()
    for doc in docs:
        df.update({_hash_slot(t, bits) for t in tokenize(doc)})
    n = len(docs)
    dim = 1 << bits
    idf = np.full(dim, math.log(1.0 + n) + 1.0, dtype=np.float64)
    for slot, count in df.items():
        idf[slot] = math.log((1.0 + n) / (1.0 + count)) + 1.0
    return TfIdfModel(
        vocabulary=None,
        idf=idf,
        l2_normalize=l2_normalize,
        hash_bits=bits,
        document_count=n,
        hashed_df=dict(sorted(df.items())),
    )


@dataclass
class DocumentVector:
    """Sparse vector: strictly increasing indices, no stored zeros."""

    indices: np.ndarray
    values: np.ndarray
    dimension: int

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension, dtype=np.float64)
        dense[self.indices] = self.values
        return dense

    def dot(self, dense_weights: np.ndarray) -> float:
        if self.nnz == 0:
            return 0.0
        return float(np.dot(self.values, dense_weights[self.indices]))


def _counts_to_vector(model: TfIdfModel, counts: Counter) -> DocumentVector:
    if not counts:
        return DocumentVector(
            indices=np.empty(0, dtype=np.int64),
            values=np.empty(0, dtype=np.float64),
            dimension=model.dimension,
        )
    items = sorted(counts.items())
    indices = np.fromiter((ix for ix, _ in items), dtype=np.int64, count=len(items))
    tf = 1.0 + np.log(np.fromiter((c for _, c in items), dtype=np.float64, count=len(items)))
    values = tf * model.idf[indices]
    if model.l2_normalize:
        norm = math.sqrt(float(np.dot(values, values)))
        if norm > 0.0:
            values = values / norm
    return DocumentVector(indices=indices, values=values, dimension=model.dimension)


def vectorize_document(model: TfIdfModel, text: str) -> DocumentVector:
    """Map text to a sparse tf-idf vector; OOV tokens are ignored and
    empty or all-OOV text yields the zero vector."""
    counts: Counter = Counter()
    if model.hash_bits is not None:
        for tok in tokenize(text):
            counts[_hash_slot(tok, model.hash_bits)] += 1
    else:
        vocab_index = model.vocabulary.index
        for tok in tokenize(text):
            ix = vocab_index.get(tok)
            if ix is not None:
                counts[ix] += 1
    return _counts_to_vector(model, counts)


def vectorize_sentence(model: TfIdfModel, sentence: Sentence) -> DocumentVector:
    """Same pipeline as vectorize_document, applied to one sentence."""
    return vectorize_document(model, sentence.text)


def stack_vectors(vectors: Iterable[DocumentVector], dimension: int) -> sparse.csr_matrix:
    """Assemble row vectors into one CSR matrix."""
    vecs = list(vectors)
    indptr = np.zeros(len(vecs) + 1, dtype=np.int64)
    for i, v in enumerate(vecs):
        indptr[i + 1] = indptr[i] + v.nnz
    if vecs:
        indices = np.concatenate([v.indices for v in vecs]) if indptr[-1] else np.empty(0, np.int64)
        data = np.concatenate([v.values for v in vecs]) if indptr[-1] else np.empty(0, np.float64)
    else:
        indices = np.empty(0, np.int64)
        data = np.empty(0, np.float64)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vecs), dimension))
