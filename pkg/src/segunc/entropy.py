"""Pixel-wise entropy of the mean segmentation."""
from __future__ import annotations

import math

import numpy as np

from segunc import masks as mk

BASES = ("two", "natural")
PROB_TOLERANCE = 1e-9


def max_entropy(base: str = "two") -> float:
    if base == "two":
        return 1.0
    if base == "natural":
        return math.log(2.0)
    raise ValueError(f"unknown log base {base!r}; expected one of {BASES}")


def as_probmap(values) -> np.ndarray:
    """Validate a probability map and clamp round-off into ``[0, 1]``.

    Values further than 1e-9 outside the unit interval, or NaN, are
    rejected.
    """
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
        raise ValueError(f"probability map must be a non-empty 2-D grid, got shape {p.shape}")
    if np.isnan(p).any():
        raise ValueError("probability map contains NaN")
    if p.min() < -PROB_TOLERANCE or p.max() > 1.0 + PROB_TOLERANCE:
        raise ValueError(
            f"probability values must lie in [0, 1], got range [{p.min()}, {p.max()}]"
        )
    return np.clip(p, 0.0, 1.0)


def mean_map(masks) -> np.ndarray:
    """Per-pixel fraction of masks that mark the pixel as foreground."""
    s = mk.as_sample_set(masks)
    return np.count_nonzero(s, axis=0) / len(s)


def _plogp(p: np.ndarray, log) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * log(p[pos])
    return out


def entropy_map(p, base: str = "two") -> np.ndarray:
    """Binary entropy ``-p log p - (1-p) log(1-p)`` of each pixel.

    ``0 log 0`` is taken as 0. With ``base="two"`` the result is in bits
    and lies in ``[0, 1]``; ``base="natural"`` gives nats in ``[0, ln 2]``.
    """
    log = {"two": np.log2, "natural": np.log}.get(base)
    if log is None:
        raise ValueError(f"unknown log base {base!r}; expected one of {BASES}")
    p = as_probmap(p)
    h = -(_plogp(p, log) + _plogp(1.0 - p, log))
    return np.clip(h, 0.0, max_entropy(base))


def entropy_of_mean(masks, base: str = "two") -> np.ndarray:
    return entropy_map(mean_map(masks), base)


def mean_of_entropies(probmaps, base: str = "two") -> np.ndarray:
    """Average of per-sample entropy maps.

    A diagnostic only: it is not the entropy of the mean, and for binary
    masks it is identically zero. Useful for stacks of soft predictions.
    """
    stack = np.asarray(probmaps, dtype=np.float64)
    if stack.ndim != 3 or len(stack) == 0:
        raise ValueError("expected a non-empty stack of probability maps (n, H, W)")
    return np.mean([entropy_map(p, base) for p in stack], axis=0)


def entropy_histogram(e, bins: int, base: str = "two") -> list[tuple[tuple[float, float], int]]:
    """Equal-width histogram of an entropy map over ``[0, max_entropy]``.

    Bins are half-open ``[lo, hi)`` except the last, which also holds its
    right edge. Counts always add up to the number of pixels.
    """
    if bins < 1:
        raise ValueError("bins must be at least 1")
    e = np.asarray(e, dtype=np.float64)
    top = max_entropy(base)
    values = np.clip(e.ravel(), 0.0, top)
    counts, edges = np.histogram(values, bins=bins, range=(0.0, top))
    return [
        ((float(edges[i]), float(edges[i + 1])), int(counts[i])) for i in range(bins)
    ]
