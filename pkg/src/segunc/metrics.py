"""Generalized Energy Distance estimators over sets of binary masks.

``ged`` computes ``2 E[d(A, Y)] - E[d(A, A')] - E[d(Y, Y')]`` exactly over
two finite sample sets. ``ged_triple`` produces the three numbers used to
compare segmentation-uncertainty models: the plain GED with the Jaccard
distance, the same distance restricted to non-empty masks, and the GED
under the emptiness kernel, which isolates the detection part.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Union

import numpy as np

from segunc import masks as mk
from segunc.prng import Stream

INCLUSIVE = "inclusive"
UNBIASED = "unbiased"
ESTIMATORS = (INCLUSIVE, UNBIASED)

_PAIRWISE = {
    "iou": mk.pairwise_d_iou,
    "det": mk.pairwise_k_det,
}
_ALIASES: dict = {
    mk.d_iou: "iou",
    mk.k_det: "det",
    "d_iou": "iou",
    "k_det": "det",
    "iou": "iou",
    "det": "det",
}

Distance = Union[str, Callable]


@dataclass(frozen=True)
class CrossTermSummary:
    mean_cross: float
    mean_self_a: float
    mean_self_y: float


@dataclass(frozen=True)
class GedReport:
    d2_ged: float
    d2_iou: Optional[float]
    d2_det: float
    n_annotations: int
    n_predictions: int
    p_empty_ann: float
    p_empty_pred: float
    estimator: str = INCLUSIVE

    def as_dict(self) -> dict:
        return asdict(self)


def _resolve_distance(distance: Distance) -> str:
    try:
        return _ALIASES[distance]
    except (KeyError, TypeError):
        raise ValueError(f"unknown distance {distance!r}; use d_iou or k_det") from None


def _check_kind(kind: str) -> None:
    if kind not in ESTIMATORS:
        raise ValueError(f"unknown estimator kind {kind!r}; expected one of {ESTIMATORS}")


def _matrix_mean(matrix: np.ndarray, denominator: int) -> float:
    # fsum is correctly rounded, so the mean does not depend on pair order
    return math.fsum(matrix.ravel().tolist()) / denominator


def _self_mean(matrix: np.ndarray, kind: str) -> float:
    n = matrix.shape[0]
    if kind == INCLUSIVE:
        return _matrix_mean(matrix, n * n)
    # both distances vanish on the diagonal, so the off-diagonal sum is the full sum
    return _matrix_mean(matrix, n * (n - 1))


def subsample(masks: np.ndarray, max_samples: Optional[int], seed: int = 0) -> np.ndarray:
    """Deterministically cap a sample set at ``max_samples`` members.

    Members are chosen without replacement from a SplitMix64 stream keyed
    by ``seed``; their original relative order is kept.
    """
    masks = mk.as_sample_set(masks)
    if max_samples is None or len(masks) <= max_samples:
        return masks
    if max_samples < 1:
        raise ValueError("max_samples must be at least 1")
    chosen = Stream(seed).sample_indices(len(masks), max_samples)
    return masks[np.sort(chosen)]


def ged(
    annotations: np.ndarray,
    predictions: np.ndarray,
    distance: Distance = "iou",
    kind: str = INCLUSIVE,
) -> tuple[float, CrossTermSummary]:
    """Squared Generalized Energy Distance between two mask sets.

    Parameters
    ----------
    annotations, predictions : array_like
        Sample sets of shape ``(n, H, W)`` with a common grid.
    distance : {"iou", "det"} or {d_iou, k_det}
        Pairwise distance; Jaccard distance or the emptiness kernel.
    kind : {"inclusive", "unbiased"}
        ``inclusive`` averages the self terms over all ordered pairs,
        diagonal included (V-statistic). ``unbiased`` drops the diagonal
        and needs at least two masks in each set.

    Returns
    -------
    value : float
        ``2 * mean_cross - mean_self_a - mean_self_y``.
    summary : CrossTermSummary
        The three expectation estimates.
    """
    name = _resolve_distance(distance)
    _check_kind(kind)
    a = mk.as_sample_set(annotations)
    y = mk.as_sample_set(predictions)
    if a.shape[1:] != y.shape[1:]:
        raise ValueError(f"sample set shapes differ: {a.shape[1:]} vs {y.shape[1:]}")
    if kind == UNBIASED and (len(a) < 2 or len(y) < 2):
        raise ValueError("the unbiased estimator needs at least two masks per set")

    pairwise = _PAIRWISE[name]
    summary = CrossTermSummary(
        mean_cross=_matrix_mean(pairwise(a, y), len(a) * len(y)),
        mean_self_a=_self_mean(pairwise(a, a), kind),
        mean_self_y=_self_mean(pairwise(y, y), kind),
    )
    value = 2.0 * summary.mean_cross - summary.mean_self_a - summary.mean_self_y
    return value, summary


def ged_triple(
    annotations: np.ndarray,
    predictions: np.ndarray,
    kind: str = INCLUSIVE,
    max_samples: Optional[int] = None,
    seed: int = 0,
) -> GedReport:
    """Evaluate D2_GED, D2_IoU and D2_Det for one image.

    ``d2_iou`` is ``None`` when either set has no non-empty mask, or, for
    the unbiased estimator, fewer than two. ``max_samples`` caps each set
    through :func:`subsample` before anything is computed.
    """
    a = subsample(annotations, max_samples, seed)
    y = subsample(predictions, max_samples, seed + 1)
    d2_ged, _ = ged(a, y, "iou", kind)
    d2_det, _ = ged(a, y, "det", kind)

    fa, fy = mk.filter_nonempty(a), mk.filter_nonempty(y)
    min_len = 2 if kind == UNBIASED else 1
    if fa is None or fy is None or len(fa) < min_len or len(fy) < min_len:
        d2_iou = None
    else:
        d2_iou, _ = ged(fa, fy, "iou", kind)

    return GedReport(
        d2_ged=d2_ged,
        d2_iou=d2_iou,
        d2_det=d2_det,
        n_annotations=len(a),
        n_predictions=len(y),
        p_empty_ann=float(mk.empty_flags(a).mean()),
        p_empty_pred=float(mk.empty_flags(y).mean()),
        estimator=kind,
    )


def det_closed_form(p_a: float, p_y: float) -> float:
    """Detection GED from the two emptiness rates: ``2 (p_a - p_y)**2``.

    This is the population value, and also what the inclusive estimator
    returns when the rates are the empirical emptiness fractions.
    """
    for name, p in (("p_a", p_a), ("p_y", p_y)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return 2.0 * (p_a - p_y) ** 2
