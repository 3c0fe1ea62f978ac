"""Binary masks, sample sets and the pairwise mask distances.

A mask is a 2-D boolean numpy array with ``True`` marking foreground.
A sample set is a 3-D boolean array of shape ``(n, height, width)``
holding ``n >= 1`` masks in a fixed order.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence, Union

import numpy as np

MaskLike = Union[np.ndarray, Sequence[Sequence[int]]]


def as_mask(mask: MaskLike) -> np.ndarray:
    """Return ``mask`` as a 2-D boolean array, validating its shape.

    Integer or boolean input is accepted; anything else (floats included)
    is rejected because probability maps must be thresholded first.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"mask must have positive height and width, got {arr.shape}")
    if arr.dtype == bool:
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"mask must be boolean or integer, got dtype {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("integer masks must only contain 0 and 1")
    return arr.astype(bool)


def as_sample_set(masks: Union[np.ndarray, Iterable[MaskLike]]) -> np.ndarray:
    """Stack ``masks`` into an ``(n, H, W)`` boolean sample set.

    Raises
    ------
    ValueError
        If the set is empty or the members disagree on shape.
    """
    if isinstance(masks, np.ndarray) and masks.ndim == 3:
        if masks.shape[0] == 0:
            raise ValueError("sample set must contain at least one mask")
        as_mask(masks[0])
        return masks if masks.dtype == bool else np.stack([as_mask(m) for m in masks])
    members = [as_mask(m) for m in masks]
    if not members:
        raise ValueError("sample set must contain at least one mask")
    shape = members[0].shape
    for i, m in enumerate(members):
        if m.shape != shape:
            raise ValueError(f"mask {i} has shape {m.shape}, expected {shape}")
    return np.stack(members)


def _check_pair(a: MaskLike, b: MaskLike) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def foreground_count(mask: MaskLike) -> int:
    return int(np.count_nonzero(as_mask(mask)))


def is_empty(mask: MaskLike) -> bool:
    """Emptiness indicator: True iff the mask has no foreground pixel."""
    return not as_mask(mask).any()


def iou(a: MaskLike, b: MaskLike) -> Optional[float]:
    """Intersection over union of two masks.

    Returns ``None`` when both masks are empty, where the ratio is 0/0.
    """
    a, b = _check_pair(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return None
    return np.count_nonzero(a & b) / union


def d_iou(a: MaskLike, b: MaskLike) -> float:
    """Jaccard distance ``1 - IoU`` with ``d = 0`` for two empty masks."""
    value = iou(a, b)
    if value is None:
        return 0.0
    return 1.0 - value


def k_det(a: MaskLike, b: MaskLike) -> int:
    """Detection kernel: 1 if exactly one of the masks is empty, else 0."""
    a, b = _check_pair(a, b)
    return int(is_empty(a) != is_empty(b))


def filter_nonempty(masks: np.ndarray) -> Optional[np.ndarray]:
    """Keep the non-empty members of a sample set, in order.

    Returns ``None`` if every mask is empty.
    """
    masks = as_sample_set(masks)
    keep = masks.reshape(len(masks), -1).any(axis=1)
    if not keep.any():
        return None
    return masks[keep]


def empty_flags(masks: np.ndarray) -> np.ndarray:
    """Boolean vector with the emptiness indicator of each set member."""
    masks = as_sample_set(masks)
    return ~masks.reshape(len(masks), -1).any(axis=1)


def pairwise_d_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of Jaccard distances between every member of ``a`` and ``b``.

    Entry ``[i, j]`` equals ``d_iou(a[i], b[j])`` bit for bit: counts are
    exact integers and the per-entry arithmetic is the same expression.
    """
    a, b = as_sample_set(a), as_sample_set(b)
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"sample set shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    fa = a.reshape(len(a), -1).astype(np.float64)
    fb = b.reshape(len(b), -1).astype(np.float64)
    # float64 matmul of 0/1 vectors is exact below 2**53 pixels
    inter = fa @ fb.T
    union = fa.sum(axis=1)[:, None] + fb.sum(axis=1)[None, :] - inter
    out = np.zeros_like(inter)
    nz = union > 0
    out[nz] = 1.0 - inter[nz] / union[nz]
    return out


def pairwise_k_det(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of detection-kernel values between members of ``a`` and ``b``."""
    a, b = as_sample_set(a), as_sample_set(b)
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"sample set shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    ea, eb = empty_flags(a), empty_flags(b)
    return (ea[:, None] != eb[None, :]).astype(np.float64)
