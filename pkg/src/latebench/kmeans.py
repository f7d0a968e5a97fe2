"""Spherical k-means over unit vectors, shared by both index backends.

Seeding is k-means++ driven by a fixed RNG seed, assignment is by maximum dot
product (lowest centroid index on exact ties), and centroid updates are
renormalized means. Everything is deterministic for a fixed seed, which is
what makes byte-identical index rebuilds possible.
"""

from __future__ import annotations

import numpy as np

from .errors import TooFewVectors


def assign(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Argmax-dot centroid per vector; ties go to the lowest centroid index."""
    sims = vectors @ centroids.T
    return np.argmax(sims, axis=1).astype(np.int32)


def _seed_plus_plus(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    # Squared Euclidean distance to the nearest chosen centroid; on the unit
    # sphere this is 2 - 2 * dot.
    best_dot = vectors @ vectors[chosen[0]]
    for i in range(1, k):
        d2 = np.maximum(0.0, 2.0 - 2.0 * best_dot).astype(np.float64)
        total = d2.sum()
        if total <= 0.0:
            chosen[i] = rng.integers(n)
        else:
            chosen[i] = rng.choice(n, p=d2 / total)
        best_dot = np.maximum(best_dot, vectors @ vectors[chosen[i]])
    return vectors[chosen].copy()


def _renormalized_means(vectors: np.ndarray, labels: np.ndarray, k: int, prev: np.ndarray):
    dim = vectors.shape[1]
    sums = np.zeros((k, dim), dtype=np.float64)
    np.add.at(sums, labels, vectors.astype(np.float64))
    counts = np.bincount(labels, minlength=k)
    norms = np.linalg.norm(sums, axis=1)
    dead = (counts == 0) | (norms < 1e-12)
    centroids = prev.astype(np.float64).copy()
    alive = ~dead
    centroids[alive] = sums[alive] / norms[alive, None]
    return centroids.astype(np.float32), dead


def _reseed_dead(
    vectors: np.ndarray,
    labels: np.ndarray,
    centroids: np.ndarray,
    dead: np.ndarray,
) -> np.ndarray:
    """Move each dead centroid onto the vector currently farthest from its own."""
    if not dead.any():
        return centroids
    dots = np.einsum("ij,ij->i", vectors, centroids[labels])
    order = np.argsort(dots, kind="stable")  # farthest first = smallest dot
    cursor = 0
    for c in np.flatnonzero(dead):
        if cursor >= len(order):
            break
        centroids[c] = vectors[order[cursor]]
        cursor += 1
    return centroids


def train_kmeans(vectors: np.ndarray, k: int, iters: int = 20, seed: int = 0) -> np.ndarray:
    """Train k unit-norm centroids; stops early once assignments are stable.

    Raises TooFewVectors when there are fewer vectors than clusters.
    """
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[0] < k:
        raise TooFewVectors(f"need at least k={k} vectors, got {vectors.shape[0]}")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _seed_plus_plus(vectors, k, rng)
    labels = assign(vectors, centroids)
    for _ in range(max(0, iters)):
        centroids, dead = _renormalized_means(vectors, labels, k, centroids)
        centroids = _reseed_dead(vectors, labels, centroids, dead)
        new_labels = assign(vectors, centroids)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids
