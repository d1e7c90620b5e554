"""Histogram distance functions and the weighted two-representation distance.

Fourteen distances over L1-normalized histograms, plus the affine combination
D = (1 - w) * D_hand + w * D_deep used when a view carries both a hand-crafted
and a deep representation.

Divisive and logarithmic metrics (chi_square, pearson, neyman, canberra,
kl_divergence, symmetric_kl, bhattacharyya) smooth their inputs first: every
entry is floored at EPS = 1e-10 and the vector is renormalized, so zero bins
never divide or take a log.

Conventions to note:

* motyka evaluates to 0.5, not 0, for identical inputs; ranking by
  "smaller is more similar" still holds, so K-NN treats all metrics uniformly.
* pearson and neyman are asymmetric; pearson(P, Q) == neyman(Q, P).
* bhattacharyya is clamped at 0 because rounding can push sum(sqrt(P*Q))
  a hair above 1.
* the two component distances of the weighted combination are NOT rescaled to
  a common range; the weight w absorbs scale differences between metrics.
"""

import math

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidHistogram,
    MissingRepresentation,
    UnknownMetric,
)

EPS = 1e-10

METRIC_NAMES = (
    "euclidean",
    "manhattan",
    "chi_square",
    "pearson",
    "neyman",
    "canberra",
    "kl_divergence",
    "symmetric_kl",
    "motyka",
    "cosine",
    "dice",
    "bhattacharyya",
    "gower",
    "sorensen",
)

# Metrics that divide by or take logs of histogram entries.
SMOOTHED_METRICS = frozenset(
    [
        "chi_square",
        "pearson",
        "neyman",
        "canberra",
        "kl_divergence",
        "symmetric_kl",
        "bhattacharyya",
    ]
)


def canonical_metric(name):
    """Resolve a metric name case-insensitively, or raise UnknownMetric."""
    key = str(name).strip().lower()
    if key not in _FUNCS:
        raise UnknownMetric(f"unknown metric {name!r}; expected one of {', '.join(METRIC_NAMES)}")
    return key


def _euclidean(p, q):
    return math.sqrt(float(np.sum((p - q) ** 2)))


def _manhattan(p, q):
    return float(np.sum(np.abs(p - q)))


def _chi_square(p, q):
    return float(np.sum((p - q) ** 2 / (p + q)))


def _pearson(p, q):
    return float(np.sum((p - q) ** 2 / q))


def _neyman(p, q):
    return float(np.sum((p - q) ** 2 / p))


def _canberra(p, q):
    return float(np.sum(np.abs(p - q) / (p + q)))


def _kl_divergence(p, q):
    return float(np.sum(p * np.log(p / q)))


def _symmetric_kl(p, q):
    return float(np.sum((p - q) * np.log(p / q)))


def _motyka(p, q):
    return float(np.sum(np.maximum(p, q)) / np.sum(p + q))


def _cosine(p, q):
    denom = math.sqrt(float(np.sum(p * p))) * math.sqrt(float(np.sum(q * q)))
    return 1.0 - float(np.sum(p * q)) / denom


def _dice(p, q):
    return 1.0 - 2.0 * float(np.sum(p * q)) / float(np.sum(p * p) + np.sum(q * q))


def _bhattacharyya(p, q):
    coeff = float(np.sum(np.sqrt(p * q)))
    return max(0.0, -math.log(coeff))


def _gower(p, q):
    return float(np.sum(np.abs(p - q))) / p.size


def _sorensen(p, q):
    return float(np.sum(np.abs(p - q)) / np.sum(p + q))


_FUNCS = {
    "euclidean": _euclidean,
    "manhattan": _manhattan,
    "chi_square": _chi_square,
    "pearson": _pearson,
    "neyman": _neyman,
    "canberra": _canberra,
    "kl_divergence": _kl_divergence,
    "symmetric_kl": _symmetric_kl,
    "motyka": _motyka,
    "cosine": _cosine,
    "dice": _dice,
    "bhattacharyya": _bhattacharyya,
    "gower": _gower,
    "sorensen": _sorensen,
}


def _as_histogram(v, other=None):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidHistogram("histogram must be a nonempty 1-D vector")
    if other is not None and arr.size != other.size:
        raise DimensionMismatch(f"histogram lengths differ: {other.size} vs {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidHistogram("histogram contains NaN or infinite entries")
    return arr


def smooth(v):
    """Floor entries at EPS and renormalize to sum 1."""
    v = np.maximum(v, EPS)
    return v / v.sum()


def distance(metric, p, q):
    """Distance between two same-length L1-normalized histograms.

    The first argument is the query-side histogram, the second the stored
    one; this matters for the asymmetric metrics (pearson, neyman,
    kl_divergence).
    """
    name = canonical_metric(metric)
    p = _as_histogram(p)
    q = _as_histogram(q, other=p)
    if name in SMOOTHED_METRICS:
        p = smooth(p)
        q = smooth(q)
    return _FUNCS[name](p, q)


def normalize_l1(v):
    """Clamp negatives to zero and scale entries to sum 1."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidHistogram("vector must be a nonempty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidHistogram("vector contains NaN or infinite entries")
    arr = np.maximum(arr, 0.0)
    total = arr.sum()
    if total <= 0.0:
        raise InvalidHistogram("vector has no positive mass")
    return arr / total


def combined_distance(a, b, w, metric_h, metric_d):
    """Weighted distance over paired hand-crafted / deep representations.

    w = 0 uses only the hand-crafted histograms, w = 1 only the deep ones,
    and either endpoint leaves the other representation untouched (it may be
    absent). In between the result is the affine combination
    (1 - w) * distance(metric_h, a.hand, b.hand)
        + w * distance(metric_d, a.deep, b.deep).
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"combination weight must be in [0, 1], got {w}")
    if w < 1.0:
        if a.hand is None or b.hand is None:
            raise MissingRepresentation("hand-crafted histogram required when w < 1")
    if w > 0.0:
        if a.deep is None or b.deep is None:
            raise MissingRepresentation("deep feature vector required when w > 0")
    if w == 0.0:
        return distance(metric_h, a.hand, b.hand)
    if w == 1.0:
        return distance(metric_d, a.deep, b.deep)
    d_h = distance(metric_h, a.hand, b.hand)
    d_d = distance(metric_d, a.deep, b.deep)
    return (1.0 - w) * d_h + w * d_d
