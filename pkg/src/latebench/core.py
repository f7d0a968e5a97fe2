"""Domain types for multi-vector representations and the exact scoring kernel.

A text is a TokenMatrix: one unit-norm row per token (or pooled slot), so a
dot product is a cosine. Relevance is the late-interaction score: for every
query row take the best dot product against any document row, then sum. The
brute-force search here is the oracle every approximate backend is judged
against, so scoring goes through one canonical kernel (`maxsim_score`) and
ties are always broken by ascending doc id.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCorpus,
    EmptyMatrix,
    NonFinite,
    NotNormalized,
)

NORM_TOLERANCE = 1e-4

# Storage-only precision for bundles; in memory everything is float32.
DTYPE_BYTES = {"float32": 4, "float16": 2}


def thread_count() -> int:
    """Worker cap from LATEBENCH_THREADS; defaults to single-threaded."""
    raw = os.environ.get("LATEBENCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class TokenMatrix:
    """Per-text embedding matrix, float32, one row per token or pooled slot.

    The underlying array is made read-only at construction; all downstream
    structures share it without copying.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise EmptyMatrix(f"expected a 2-d matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        self.data = arr

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def truncated(self, length: int) -> "TokenMatrix":
        """First min(length, rows) rows; shares storage."""
        if length >= self.rows:
            return self
        return TokenMatrix(self.data[:length])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"TokenMatrix(rows={self.rows}, dim={self.dim})"


def validate_matrix(m: TokenMatrix, norm_tol: float = NORM_TOLERANCE) -> None:
    """Check the TokenMatrix contract; raises, never mutates.

    Raises:
        EmptyMatrix: zero rows or zero dim.
        NonFinite: first NaN/Inf entry, by (row, col).
        NotNormalized: first row whose Euclidean norm is off by > norm_tol.
    """
    if m.rows == 0 or m.dim == 0:
        raise EmptyMatrix(f"degenerate shape {m.data.shape}")
    finite = np.isfinite(m.data)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise NonFinite(int(row), int(col))
    norms = np.linalg.norm(m.data.astype(np.float64), axis=1)
    off = np.abs(norms - 1.0) > norm_tol
    if off.any():
        row = int(np.argmax(off))
        raise NotNormalized(row, float(norms[row]))


@dataclass(frozen=True)
class CorpusManifest:
    dim: int
    dtype: str = "float32"
    pooling: str = "none"
    C: int = 0
    doc_count: int = 0
    total_vectors: int = 0

    def __post_init__(self):
        if self.dtype not in DTYPE_BYTES:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.pooling not in ("none", "fixed"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.pooling == "fixed" and self.C < 1:
            raise ValueError("pooling=fixed requires C >= 1")


@dataclass(frozen=True)
class Corpus:
    """Ordered collection of doc ids with their token matrices."""

    manifest: CorpusManifest
    doc_ids: tuple[str, ...]
    docs: Mapping[str, TokenMatrix]

    @classmethod
    def build(
        cls,
        docs: Mapping[str, TokenMatrix],
        dtype: str = "float32",
        pooling: str = "none",
        C: int = 0,
    ) -> "Corpus":
        """Assemble a corpus, deriving the manifest counts from the docs."""
        doc_ids = tuple(docs.keys())
        if not doc_ids:
            raise EmptyCorpus("corpus has no documents")
        dims = {m.dim for m in docs.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"documents disagree on dim: {sorted(dims)}")
        manifest = CorpusManifest(
            dim=dims.pop(),
            dtype=dtype,
            pooling=pooling,
            C=C,
            doc_count=len(doc_ids),
            total_vectors=sum(m.rows for m in docs.values()),
        )
        corpus = cls(manifest=manifest, doc_ids=doc_ids, docs=dict(docs))
        corpus.check_structure()
        return corpus

    def check_structure(self) -> None:
        """Structural invariants only (counts, ids); matrix contents via validate()."""
        if self.manifest.doc_count < 1:
            raise EmptyCorpus("manifest declares zero documents")
        if len(self.doc_ids) != self.manifest.doc_count or len(self.docs) != self.manifest.doc_count:
            raise ValueError("doc count disagrees between manifest, ids, and payload")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("doc ids are not unique")
        for doc_id in self.doc_ids:
            if not doc_id or doc_id.split() != [doc_id]:
                raise ValueError(f"doc id {doc_id!r} is empty or contains whitespace")
            if doc_id not in self.docs:
                raise ValueError(f"doc id {doc_id!r} missing from payload")
        total = sum(self.docs[d].rows for d in self.doc_ids)
        if total != self.manifest.total_vectors:
            raise ValueError("manifest total_vectors disagrees with payload")
        if self.manifest.pooling == "fixed":
            for doc_id in self.doc_ids:
                if self.docs[doc_id].rows != self.manifest.C:
                    raise ValueError(
                        f"pooling=fixed but doc {doc_id!r} has {self.docs[doc_id].rows} rows, "
                        f"expected C={self.manifest.C}"
                    )

    def validate(self, norm_tol: float = NORM_TOLERANCE) -> None:
        self.check_structure()
        for doc_id in self.doc_ids:
            try:
                validate_matrix(self.docs[doc_id], norm_tol=norm_tol)
            except (EmptyMatrix, NonFinite, NotNormalized) as exc:
                exc.args = (f"doc {doc_id!r}: {exc}",)
                raise

    def matrix(self, doc_id: str) -> TokenMatrix:
        return self.docs[doc_id]

    def __len__(self) -> int:
        return len(self.doc_ids)


class ScoredDoc(NamedTuple):
    doc_id: str
    score: float


@dataclass(frozen=True)
class RankedList:
    """Per-query top-k: scores non-increasing, ties by ascending doc id."""

    query_id: str
    hits: tuple[ScoredDoc, ...]

    @classmethod
    def from_scores(cls, query_id: str, scored: Iterable[tuple[str, float]], k: int) -> "RankedList":
        pairs = list(scored)
        ids = [doc_id for doc_id, _ in pairs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate doc id in results for query {query_id!r}")
        pairs.sort(key=lambda item: (-item[1], item[0]))
        return cls(query_id=query_id, hits=tuple(ScoredDoc(d, float(s)) for d, s in pairs[:k]))

    def doc_ids(self) -> tuple[str, ...]:
        return tuple(hit.doc_id for hit in self.hits)

    def __len__(self) -> int:
        return len(self.hits)


def maxsim_score(query: TokenMatrix, doc: TokenMatrix) -> float:
    """Late-interaction score: sum over query rows of the best doc-row dot.

    This is the one scoring kernel in the package; the oracle search and every
    backend's final rescore call it, so their scores agree bit for bit.
    Accumulation is float64 in query-row order.
    """
    if query.dim != doc.dim:
        raise DimensionMismatch(f"query dim {query.dim} != doc dim {doc.dim}")
    sims = query.data @ doc.data.T
    return float(np.sum(sims.max(axis=1), dtype=np.float64))


def score_all(corpus: Corpus, query: TokenMatrix) -> list[tuple[str, float]]:
    """maxsim_score against every document, in corpus order.

    Honors LATEBENCH_THREADS: documents are scored independently and merged
    by position, so the result never depends on scheduling.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("cannot search an empty corpus")
    if query.dim != corpus.manifest.dim:
        raise DimensionMismatch(f"query dim {query.dim} != corpus dim {corpus.manifest.dim}")
    ids = corpus.doc_ids
    workers = thread_count()
    if workers == 1 or len(ids) < 2 * workers:
        return [(doc_id, maxsim_score(query, corpus.docs[doc_id])) for doc_id in ids]
    scores: list[float] = [0.0] * len(ids)

    def run(span: range) -> None:
        for i in span:
            scores[i] = maxsim_score(query, corpus.docs[ids[i]])

    chunk = -(-len(ids) // workers)
    spans = [range(start, min(start + chunk, len(ids))) for start in range(0, len(ids), chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, spans))
    return list(zip(ids, scores))


def exact_search(corpus: Corpus, query: TokenMatrix, k: int, query_id: str = "") -> RankedList:
    """Brute-force oracle: score every document, return the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return RankedList.from_scores(query_id, score_all(corpus, query), k)


def pool_fixed(doc: TokenMatrix, C: int) -> TokenMatrix:
    """Deterministic fixed-length pooling proxy: always exactly C unit rows.

    This simulates a fixed-slot document representation without any learned
    model: rows are split into C contiguous chunks as evenly as possible (the
    first rows % C chunks get one extra row), each chunk is averaged and
    renormalized. Documents shorter than C are extended by cycling their rows
    before pooling. Single-row chunks pass through bit-exactly.
    """
    if C < 1:
        raise ValueError("C must be >= 1")
    validate_matrix(doc)
    data = doc.data
    if doc.rows < C:
        reps = -(-C // doc.rows)
        data = np.tile(data, (reps, 1))[:C]
    n = data.shape[0]
    base, extra = divmod(n, C)
    out = np.empty((C, doc.dim), dtype=np.float32)
    start = 0
    for chunk_index in range(C):
        size = base + (1 if chunk_index < extra else 0)
        chunk = data[start:start + size]
        start += size
        if size == 1:
            out[chunk_index] = chunk[0]
            continue
        mean = chunk.astype(np.float64).mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            # Cancelling chunk; fall back to its first row to keep unit norm.
            out[chunk_index] = chunk[0]
        else:
            out[chunk_index] = (mean / norm).astype(np.float32)
    return TokenMatrix(out)


def pool_corpus(corpus: Corpus, C: int) -> Corpus:
    """Apply pool_fixed to every document, producing a pooling=fixed corpus."""
    pooled = {doc_id: pool_fixed(corpus.docs[doc_id], C) for doc_id in corpus.doc_ids}
    return Corpus.build(pooled, dtype=corpus.manifest.dtype, pooling="fixed", C=C)


def all_token_vectors(corpus: Corpus) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten corpus tokens in doc order.

    Returns (vectors, doc_ordinals, row_ordinals); shared layout for the
    indexing backends.
    """
    mats = [corpus.docs[d].data for d in corpus.doc_ids]
    vectors = np.concatenate(mats, axis=0)
    counts = np.array([m.shape[0] for m in mats], dtype=np.int64)
    doc_ordinals = np.repeat(np.arange(len(mats), dtype=np.int32), counts)
    row_ordinals = np.concatenate([np.arange(c, dtype=np.int32) for c in counts])
    return vectors, doc_ordinals, row_ordinals


def doc_row_offsets(corpus: Corpus) -> np.ndarray:
    """Start offset of each doc's rows in the flattened token order."""
    counts = [corpus.docs[d].rows for d in corpus.doc_ids]
    return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
