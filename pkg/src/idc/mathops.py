"""Deterministic dense-vector kernels shared by every other module.

All arithmetic is float64; ties are broken by ascending index everywhere.
"""

import numpy as np

from .errors import DimensionMismatch, EmptyInput, LabelOutOfRange, ZeroNormVector

# Floor applied to probabilities before taking logs.
PROB_FLOOR = 1e-12


def _as_vector(x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


def normalized_similarity(a, b):
    """Cosine similarity mapped linearly onto [0, 1].

    Returns (cos(a, b) + 1) / 2, clamped against floating-point overshoot.
    Raises ZeroNormVector if either argument has zero L2 norm and
    DimensionMismatch on unequal lengths.
    """
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormVector("similarity is undefined for zero-norm vectors")
    cos = float(np.dot(a, b)) / (norm_a * norm_b)
    return min(1.0, max(0.0, (cos + 1.0) / 2.0))


def batch_normalized_similarity(keys, key_norms, query):
    """Row-wise normalized similarity between `keys` (N, D) and one query.

    `key_norms` must hold the precomputed positive L2 norms of the rows.
    """
    query = _as_vector(query)
    if keys.shape[1] != query.shape[0]:
        raise DimensionMismatch(
            f"key dimension {keys.shape[1]} does not match query {query.shape[0]}"
        )
    query_norm = float(np.linalg.norm(query))
    if query_norm == 0.0:
        raise ZeroNormVector("similarity is undefined for zero-norm vectors")
    cos = (keys @ query) / (key_norms * query_norm)
    return np.clip((cos + 1.0) * 0.5, 0.0, 1.0)


def top_k_indices(scores, k):
    """Indices of the k largest scores, descending, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d score array, got shape {scores.shape}")
    if scores.size == 0:
        raise EmptyInput("top_k_indices requires at least one score")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    # Stable sort of the negated scores keeps equal entries in ascending
    # index order, which is exactly the required tie-break.
    order = np.argsort(-scores, kind="stable")
    return order[: min(k, scores.size)]


def softmax(logits, axis=-1):
    """Numerically stable softmax along `axis`."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(probs, label):
    """Natural-log cross entropy of a probability vector against one label."""
    p = _as_vector(probs)
    label = int(label)
    if not 0 <= label < p.shape[0]:
        raise LabelOutOfRange(f"label {label} outside [0, {p.shape[0]})")
    return float(-np.log(max(PROB_FLOOR, float(p[label]))))


def mse(x, t):
    """Squared error between two scalars."""
    d = float(x) - float(t)
    return d * d
