"""Staged centroid backend with optional residual compression.

Retrieval runs as a funnel:
  stage 1  every query row keeps its top-ncells centroids by dot product,
           then any probed centroid scoring below the threshold is dropped
           (the threshold is an absolute cosine cutoff, applied after the
           top-ncells selection);
  stage 2  the surviving centroids' inverted lists are unioned into a
           candidate document set;
  stage 3  candidates get an approximate score: MaxSim with every document
           vector replaced by its assigned centroid; only the top ndocs
           survive;
  stage 4  survivors are rescored exactly, from true vectors or, when
           residual compression is on, from decoded vectors.

ndocs smaller than k is an error, never a silent clamp. A search-time ncells
larger than the centroid count means "probe everything" and is clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kmeans
from .core import Corpus, RankedList, TokenMatrix, all_token_vectors, doc_row_offsets, maxsim_score
from .errors import (
    DimensionMismatch,
    NDocsTooSmall,
    TooFewVectors,
    UnknownDoc,
    UnsupportedBits,
)

DESK_SCALE_CENTROIDS = 256
PRODUCTION_SCALE_CENTROIDS = 32768


class ResidualCode(NamedTuple):
    """Quantized residual: one level per dimension plus the per-vector scale."""

    levels: np.ndarray  # (dim,) uint8
    scale: float


def quantize_residual(residual: np.ndarray, bits: int) -> ResidualCode:
    """Symmetric uniform quantization with per-vector scale = max |component|.

    The 2**bits levels are evenly spaced over [-scale, +scale] and each
    component maps to its nearest level. The grid is a projection: quantizing
    a dequantized residual reproduces the code exactly.
    """
    if bits not in (1, 2):
        raise UnsupportedBits(f"residual bits must be 1 or 2, got {bits}")
    residual = np.asarray(residual, dtype=np.float32)
    scale = float(np.max(np.abs(residual)))
    top = (1 << bits) - 1
    if scale == 0.0:
        return ResidualCode(np.zeros(residual.shape[0], dtype=np.uint8), 0.0)
    levels = np.rint((residual + scale) * (top / (2.0 * scale)))
    levels = np.clip(levels, 0, top).astype(np.uint8)
    return ResidualCode(levels, scale)


def dequantize_residual(code: ResidualCode, bits: int) -> np.ndarray:
    if bits not in (1, 2):
        raise UnsupportedBits(f"residual bits must be 1 or 2, got {bits}")
    top = (1 << bits) - 1
    if code.scale == 0.0:
        return np.zeros(code.levels.shape[0], dtype=np.float32)
    # Endpoint levels must dequantize to exactly +/- scale, or re-quantizing
    # a dequantized residual would drift by an ulp.
    values = code.scale * (2.0 * code.levels.astype(np.float64) - top) / top
    return values.astype(np.float32)


def encode_residual(vector: np.ndarray, centroid: np.ndarray, bits: int) -> ResidualCode:
    """Quantize (vector - centroid); see quantize_residual for the grid."""
    residual = np.asarray(vector, dtype=np.float32) - np.asarray(centroid, dtype=np.float32)
    return quantize_residual(residual, bits)


def decode_residual(code: ResidualCode, centroid: np.ndarray, bits: int) -> np.ndarray:
    """Reconstruct the vector and renormalize it back onto the unit sphere."""
    centroid = np.asarray(centroid, dtype=np.float32)
    if code.scale == 0.0:
        if bits not in (1, 2):
            raise UnsupportedBits(f"residual bits must be 1 or 2, got {bits}")
        return centroid.copy()
    vector = centroid.astype(np.float64) + dequantize_residual(code, bits).astype(np.float64)
    return (vector / np.linalg.norm(vector)).astype(np.float32)


@dataclass(frozen=True)
class StorageReport:
    """Arithmetic byte accounting for one index; nothing here is measured."""

    raw_float32_bytes: int
    raw_float16_bytes: int
    compressed_bytes: int

    @property
    def ratio(self) -> float:
        return self.raw_float16_bytes / self.compressed_bytes

    @staticmethod
    def for_layout(total_vectors: int, dim: int, bits: int) -> "StorageReport":
        # Per vector: int32 centroid id + packed residual levels + float32 scale.
        per_vector = 4 + math.ceil(dim * bits / 8) + 4
        return StorageReport(
            raw_float32_bytes=total_vectors * dim * 4,
            raw_float16_bytes=total_vectors * dim * 2,
            compressed_bytes=total_vectors * per_vector,
        )


@dataclass(frozen=True)
class PlaidConfig:
    num_centroids: int = 256
    ncells: int = 4
    centroid_score_threshold: float = 0.4
    ndocs: int = 4096
    residual_bits: int = 0
    kmeans_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.num_centroids < 1:
            raise ValueError("num_centroids must be >= 1")
        if not 1 <= self.ncells <= self.num_centroids:
            raise ValueError("ncells must satisfy 1 <= ncells <= num_centroids")
        if not -1.0 <= self.centroid_score_threshold <= 1.0:
            raise ValueError("centroid_score_threshold must be in [-1, 1]")
        if self.ndocs < 1:
            raise ValueError("ndocs must be >= 1")
        if self.residual_bits not in (0, 1, 2):
            raise UnsupportedBits(f"residual bits must be 0, 1 or 2, got {self.residual_bits}")

    @classmethod
    def production_scale(cls, **overrides) -> "PlaidConfig":
        return cls(**{**dict(num_centroids=PRODUCTION_SCALE_CENTROIDS, ncells=4, ndocs=4096), **overrides})


@dataclass(frozen=True)
class PlaidIndex:
    config: PlaidConfig
    centroids: np.ndarray  # (num_centroids, dim) float32 unit rows
    codes: np.ndarray  # (total_vectors,) int32, centroid per flat token
    row_offsets: np.ndarray  # (doc_count + 1,) int64, doc boundaries
    doc_ids: tuple[str, ...]
    inverted: tuple[np.ndarray, ...]  # per centroid, doc ordinals ascending
    unique_codes: tuple[np.ndarray, ...]  # per doc, sorted unique centroid ids
    residual_levels: np.ndarray | None  # (total_vectors, dim) uint8
    residual_scales: np.ndarray | None  # (total_vectors,) float32
    corpus: Corpus | None
    storage: StorageReport | None
    _decoded: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def total_vectors(self) -> int:
        return int(self.codes.shape[0])

    def doc_rows(self, ordinal: int) -> int:
        return int(self.row_offsets[ordinal + 1] - self.row_offsets[ordinal])

    def _check_ordinal(self, ordinal: int) -> None:
        if not 0 <= ordinal < self.doc_count:
            raise UnknownDoc(f"doc ordinal {ordinal} outside [0, {self.doc_count})")

    def doc_matrix(self, ordinal: int) -> TokenMatrix:
        """True vectors when residuals are off, decoded vectors otherwise."""
        self._check_ordinal(ordinal)
        if self.config.residual_bits == 0:
            if self.corpus is None:
                raise ValueError("index carries no corpus and no residuals to rescore from")
            return self.corpus.docs[self.doc_ids[ordinal]]
        cached = self._decoded.get(ordinal)
        if cached is not None:
            return cached
        lo, hi = int(self.row_offsets[ordinal]), int(self.row_offsets[ordinal + 1])
        rows = np.empty((hi - lo, self.dim), dtype=np.float32)
        for i, flat in enumerate(range(lo, hi)):
            code = ResidualCode(self.residual_levels[flat], float(self.residual_scales[flat]))
            rows[i] = decode_residual(code, self.centroids[self.codes[flat]], self.config.residual_bits)
        matrix = TokenMatrix(rows)
        self._decoded[ordinal] = matrix
        return matrix


def centroid_codes(index: PlaidIndex, ordinal: int) -> np.ndarray:
    """Stored per-row centroid assignments for one document, in row order."""
    index._check_ordinal(ordinal)
    lo, hi = int(index.row_offsets[ordinal]), int(index.row_offsets[ordinal + 1])
    return index.codes[lo:hi].copy()


def build_plaid(
    corpus: Corpus, config: PlaidConfig, centroids: np.ndarray | None = None
) -> PlaidIndex:
    """Train (or adopt) centroids, assign every vector, build the inverted map.

    Passing precomputed centroids skips training; that is how two corpora can
    be compared under one centroid space.
    """
    vectors, token_docs, _ = all_token_vectors(corpus)
    if centroids is None:
        if vectors.shape[0] < config.num_centroids:
            raise TooFewVectors(
                f"corpus has {vectors.shape[0]} vectors, fewer than "
                f"num_centroids={config.num_centroids}"
            )
        centroids = kmeans.train_kmeans(
            vectors, config.num_centroids, iters=config.kmeans_iters, seed=config.seed
        )
    elif centroids.shape[0] != config.num_centroids:
        raise ValueError("supplied centroids disagree with config.num_centroids")
    codes = kmeans.assign(vectors, centroids)
    offsets = doc_row_offsets(corpus)
    inverted = tuple(
        np.unique(token_docs[codes == c]).astype(np.int32)
        for c in range(config.num_centroids)
    )
    unique_codes = tuple(
        np.unique(codes[offsets[d]:offsets[d + 1]]).astype(np.int32)
        for d in range(len(corpus))
    )
    levels = scales = None
    storage = None
    if config.residual_bits > 0:
        dim = corpus.manifest.dim
        levels = np.empty((vectors.shape[0], dim), dtype=np.uint8)
        scales = np.empty(vectors.shape[0], dtype=np.float32)
        for flat in range(vectors.shape[0]):
            code = encode_residual(vectors[flat], centroids[codes[flat]], config.residual_bits)
            levels[flat] = code.levels
            scales[flat] = code.scale
        storage = StorageReport.for_layout(vectors.shape[0], dim, config.residual_bits)
    return PlaidIndex(
        config=config,
        centroids=centroids,
        codes=codes,
        row_offsets=offsets,
        doc_ids=corpus.doc_ids,
        inverted=inverted,
        unique_codes=unique_codes,
        residual_levels=levels,
        residual_scales=scales,
        corpus=corpus,
        storage=storage,
    )


class CandidateTrace(NamedTuple):
    """Stage 1-2 outcome, exposed so pruning behavior is inspectable."""

    candidates: tuple[int, ...]  # doc ordinals, ascending
    probed_per_row: tuple[int, ...]
    surviving_per_row: tuple[int, ...]


def _centroid_dots(index: PlaidIndex, query: TokenMatrix) -> np.ndarray:
    if query.dim != index.dim:
        raise DimensionMismatch(f"query dim {query.dim} != index dim {index.dim}")
    return query.data @ index.centroids.T


def plaid_candidates(
    index: PlaidIndex,
    query: TokenMatrix,
    ncells: int | None = None,
    threshold: float | None = None,
) -> CandidateTrace:
    """Stages 1 and 2: probe, prune by threshold, union inverted lists."""
    ncells = index.config.ncells if ncells is None else ncells
    threshold = (
        index.config.centroid_score_threshold if threshold is None else threshold
    )
    ncells = min(max(1, ncells), index.config.num_centroids)
    dots = _centroid_dots(index, query)
    surviving: set[int] = set()
    probed_counts = []
    survivor_counts = []
    ids = np.arange(index.config.num_centroids)
    for row_dots in dots:
        order = np.lexsort((ids, -row_dots))[:ncells]
        keep = order[row_dots[order] >= threshold]
        probed_counts.append(len(order))
        survivor_counts.append(len(keep))
        surviving.update(keep.tolist())
    candidates: set[int] = set()
    for centroid in surviving:
        candidates.update(index.inverted[centroid].tolist())
    return CandidateTrace(
        candidates=tuple(sorted(candidates)),
        probed_per_row=tuple(probed_counts),
        surviving_per_row=tuple(survivor_counts),
    )


def approx_doc_score(index: PlaidIndex, query: TokenMatrix, ordinal: int) -> float:
    """Stage-3 kernel: MaxSim with doc vectors replaced by their centroids."""
    index._check_ordinal(ordinal)
    dots = _centroid_dots(index, query)
    return float(np.sum(dots[:, index.unique_codes[ordinal]].max(axis=1), dtype=np.float64))


def plaid_search(
    index: PlaidIndex,
    query: TokenMatrix,
    k: int,
    ncells: int | None = None,
    threshold: float | None = None,
    ndocs: int | None = None,
    query_id: str = "",
) -> RankedList:
    if k < 1:
        raise ValueError("k must be >= 1")
    ndocs = index.config.ndocs if ndocs is None else ndocs
    if ndocs < k:
        raise NDocsTooSmall(f"ndocs={ndocs} is smaller than k={k}")
    trace = plaid_candidates(index, query, ncells, threshold)
    if not trace.candidates:
        return RankedList(query_id=query_id, hits=())
    dots = _centroid_dots(index, query)
    approx = []
    for ordinal in trace.candidates:
        score = float(np.sum(dots[:, index.unique_codes[ordinal]].max(axis=1), dtype=np.float64))
        approx.append((index.doc_ids[ordinal], score, ordinal))
    approx.sort(key=lambda item: (-item[1], item[0]))
    survivors = approx[:ndocs]
    rescored = []
    for doc_id, _, ordinal in survivors:
        rescored.append((doc_id, maxsim_score(query, index.doc_matrix(ordinal))))
    return RankedList.from_scores(query_id, rescored, k)
