"""Paired one-sided Wilcoxon signed-rank test and model ranking."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats as sps

EXACT_MAX_N = 25
A_LESS = "a_less"
A_GREATER = "a_greater"
ALTERNATIVES = (A_LESS, A_GREATER)
EXACT = "exact"
NORMAL = "normal-approximation"
METRICS = ("d2_ged", "d2_iou", "d2_det")


@dataclass(frozen=True)
class PairedSeries:
    image_ids: tuple
    values_a: tuple
    values_b: tuple

    def __post_init__(self):
        n = len(self.image_ids)
        if len(self.values_a) != n or len(self.values_b) != n:
            raise ValueError(
                f"length mismatch: {n} ids, {len(self.values_a)} a-values, "
                f"{len(self.values_b)} b-values"
            )
        if len(set(self.image_ids)) != n:
            raise ValueError("image ids must be unique")

    @classmethod
    def from_arrays(cls, values_a: Sequence[float], values_b: Sequence[float], image_ids=None):
        if image_ids is None:
            image_ids = range(len(values_a))
        return cls(tuple(image_ids), tuple(map(float, values_a)), tuple(map(float, values_b)))


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float
    p_value: float
    log10_p: float
    n_effective: int
    n_zeros: int
    mode: str


@lru_cache(maxsize=None)
def signed_rank_counts(n: int) -> tuple[int, ...]:
    """Number of sign assignments of ranks ``1..n`` giving each W+ value.

    Entry ``w`` counts subsets of ``{1, ..., n}`` summing to ``w``; the
    counts add up to ``2**n``.
    """
    counts = [1] + [0] * (n * (n + 1) // 2)
    top = 0
    for k in range(1, n + 1):
        top += k
        for w in range(top, k - 1, -1):
            counts[w] += counts[w - k]
    return tuple(counts)


def _exact_p(w_plus: int, n: int, alternative: str) -> float:
    counts = signed_rank_counts(n)
    if alternative == A_GREATER:
        tail = sum(counts[w_plus:])
    else:
        tail = sum(counts[: w_plus + 1])
    # int / int is correctly rounded
    return tail / 2**n


def _normal_logp(w_plus: float, n: int, tie_sizes: np.ndarray, alternative: str) -> float:
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    if var <= 0:
        return 0.0
    sd = math.sqrt(var)
    if alternative == A_GREATER:
        return float(sps.norm.logsf((w_plus - mean - 0.5) / sd))
    return float(sps.norm.logcdf((w_plus - mean + 0.5) / sd))


def wilcoxon_one_sided(
    series: PairedSeries,
    alternative: str = A_LESS,
    method: str = "auto",
) -> WilcoxonResult:
    """One-sided Wilcoxon signed-rank test on ``values_a - values_b``.

    ``a_less`` tests whether the a-values tend to be smaller (for GED:
    model a is better). Zero differences are dropped and counted; tied
    absolute differences get midranks. The exact null distribution is
    used when at most 25 non-zero differences remain and none tie;
    otherwise a normal approximation with tie-corrected variance and a
    0.5 continuity correction. ``method`` may force ``"exact"`` (tie-free
    input only) or ``"normal"``.

    The approximation works in log space. ``log10_p`` is always the true
    value; ``p_value`` is floored at the smallest normal double
    (about 2.2e-308) so it stays positive.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    if len(series.image_ids) < 1:
        raise ValueError("need at least one pair")

    diff = np.asarray(series.values_a, dtype=np.float64) - np.asarray(
        series.values_b, dtype=np.float64
    )
    nonzero = diff != 0
    n_zeros = int(np.count_nonzero(~nonzero))
    diff = diff[nonzero]
    n = len(diff)
    if n == 0:
        raise ValueError("all paired differences are zero; the test carries no information")

    absd = np.abs(diff)
    ranks = sps.rankdata(absd)
    w_plus = float(ranks[diff > 0].sum())
    _, tie_sizes = np.unique(absd, return_counts=True)
    has_ties = bool((tie_sizes > 1).any())

    if method == "exact" and has_ties:
        raise ValueError("exact mode needs tie-free absolute differences")
    use_exact = method == "exact" or (method == "auto" and n <= EXACT_MAX_N and not has_ties)

    if use_exact:
        p = _exact_p(int(round(w_plus)), n, alternative)
        log10_p = math.log10(p)
        mode = EXACT
    else:
        logp = _normal_logp(w_plus, n, tie_sizes.astype(np.float64), alternative)
        log10_p = logp / math.log(10.0)
        p = max(math.exp(logp), sys.float_info.min)
        mode = NORMAL
    return WilcoxonResult(
        w_statistic=w_plus,
        p_value=min(p, 1.0),
        log10_p=min(log10_p, 0.0),
        n_effective=n,
        n_zeros=n_zeros,
        mode=mode,
    )


def paired_metric(
    reports_a: Mapping[str, object],
    reports_b: Mapping[str, object],
    metric: str,
) -> tuple[PairedSeries, int]:
    """Pair two per-image report mappings on a metric.

    Images missing on either side or with an undefined value (``None``)
    are dropped. Returns the series and the number of dropped images from
    the union of both id sets.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    ids = sorted(set(reports_a) | set(reports_b))
    kept, va, vb = [], [], []
    for image_id in ids:
        ra, rb = reports_a.get(image_id), reports_b.get(image_id)
        if ra is None or rb is None:
            continue
        xa, xb = getattr(ra, metric), getattr(rb, metric)
        if xa is None or xb is None:
            continue
        kept.append(image_id)
        va.append(xa)
        vb.append(xb)
    if not kept:
        raise ValueError("no image has a defined value in both reports")
    return PairedSeries(tuple(kept), tuple(va), tuple(vb)), len(ids) - len(kept)


def rank_models(
    per_image: Mapping[str, Mapping[str, object]],
    metric: str,
) -> list[tuple[str, float, int]]:
    """Order models by mean metric over a common image set, best first.

    ``per_image`` maps model name to ``{image_id: GedReport}``. Only images
    that every model evaluated with a defined value are used, so the
    means are comparable. Ties are broken by model name.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    if not per_image:
        raise ValueError("no models to rank")
    common: Optional[set] = None
    for reports in per_image.values():
        valid = {i for i, r in reports.items() if getattr(r, metric) is not None}
        common = valid if common is None else common & valid
    if not common:
        raise ValueError(f"no image has a defined {metric} for every model")
    ids = sorted(common)
    ranked = []
    for model, reports in per_image.items():
        mean = math.fsum(getattr(reports[i], metric) for i in ids) / len(ids)
        ranked.append((model, mean, len(ids)))
    ranked.sort(key=lambda t: (t[1], t[0]))
    return ranked
