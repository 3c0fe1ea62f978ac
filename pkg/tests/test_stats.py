import numpy as np
import pytest

from oracles import wilcoxon_enumeration_p
from segunc.metrics import GedReport
from segunc.stats import (
    PairedSeries,
    paired_metric,
    rank_models,
    signed_rank_counts,
    wilcoxon_one_sided,
)


def test_signed_rank_counts_small():
    assert signed_rank_counts(1) == (1, 1)
    assert signed_rank_counts(3) == (1, 1, 1, 2, 1, 1, 1)
    assert sum(signed_rank_counts(20)) == 2**20


def test_all_positive_five():
    s = PairedSeries.from_arrays([2, 3, 4, 5, 6], [1.5, 1.0, 0.5, 1.25, 0.0])
    r = wilcoxon_one_sided(s, "a_greater")
    assert r.p_value == 0.03125 == wilcoxon_enumeration_p([0.5, 2, 3.5, 3.75, 6], "a_greater")[0]
    assert r.w_statistic == 15 and r.mode == "exact" and r.n_effective == 5


def test_single_nonzero_difference():
    s = PairedSeries.from_arrays([1, 2, 3, 4.5], [1, 2, 3, 4])
    r = wilcoxon_one_sided(s, "a_greater")
    assert (r.n_effective, r.n_zeros, r.p_value) == (1, 3, 0.5)
    assert wilcoxon_one_sided(s, "a_less").p_value == 1.0


def test_swap_antisymmetry(rng):
    a, b = rng.random(12), rng.random(12)
    r1 = wilcoxon_one_sided(PairedSeries.from_arrays(a, b), "a_less")
    r2 = wilcoxon_one_sided(PairedSeries.from_arrays(b, a), "a_greater")
    assert r1.p_value == r2.p_value


def test_scaling_invariance(rng):
    a, b = rng.random(40), rng.random(40)
    r1 = wilcoxon_one_sided(PairedSeries.from_arrays(a, b), "a_less")
    r2 = wilcoxon_one_sided(PairedSeries.from_arrays(a * 3.5, b * 3.5), "a_less")
    assert (r1.w_statistic, r1.p_value) == (r2.w_statistic, r2.p_value)


def test_errors():
    with pytest.raises(ValueError):
        wilcoxon_one_sided(PairedSeries.from_arrays([1, 2], [1, 2]))
    with pytest.raises(ValueError):
        PairedSeries((1, 2), (1.0,), (2.0, 3.0))
    with pytest.raises(ValueError):
        wilcoxon_one_sided(PairedSeries.from_arrays([1], [2]), "two_sided")


def test_ties_force_normal_approximation():
    a = [1.0, 2.0, 3.0, 4.0, 5.0]
    b = [0.0, 1.0, 2.0, 2.0, 1.0]  # |d| = 1,1,1,2,4
    r = wilcoxon_one_sided(PairedSeries.from_arrays(a, b), "a_greater")
    assert r.mode == "normal-approximation"
    assert r.w_statistic == 15.0  # midranks 2,2,2,4,5
    with pytest.raises(ValueError):
        wilcoxon_one_sided(PairedSeries.from_arrays(a, b), method="exact")


def test_large_n_uses_log_space():
    n = 1980
    a = np.linspace(0.1, 0.2, n)
    r = wilcoxon_one_sided(PairedSeries.from_arrays(a, a + 1.0), "a_less")
    assert r.mode == "normal-approximation"
    assert r.log10_p < -300
    assert 0 < r.p_value <= 1
    # W+ = 0: z = (0.5 - mean)/sd, ~ -38.6 for n = 1980
    assert r.w_statistic == 0.0


def _rep(**kw):
    base = dict(d2_ged=0.0, d2_iou=0.0, d2_det=0.0, n_annotations=4, n_predictions=4,
                p_empty_ann=0.0, p_empty_pred=0.0)
    base.update(kw)
    return GedReport(**base)


def test_rank_models_basic():
    one = {"m": {"i1": _rep(d2_ged=0.3), "i2": _rep(d2_ged=0.1)}}
    assert rank_models(one, "d2_ged") == [("m", pytest.approx(0.2), 2)]
    two = {
        "worse": {"i1": _rep(d2_ged=0.5), "i2": _rep(d2_ged=0.6)},
        "better": {"i1": _rep(d2_ged=0.4), "i2": _rep(d2_ged=0.5)},
    }
    assert [m for m, _, _ in rank_models(two, "d2_ged")] == ["better", "worse"]
    tie = {"b": {"i": _rep()}, "a": {"i": _rep()}}
    assert [m for m, _, _ in rank_models(tie, "d2_ged")] == ["a", "b"]


def test_rank_models_drops_undefined_pairwise():
    per = {
        "x": {"i1": _rep(d2_iou=0.2), "i2": _rep(d2_iou=None), "i3": _rep(d2_iou=0.4)},
        "y": {"i1": _rep(d2_iou=0.1), "i2": _rep(d2_iou=0.0), "i3": _rep(d2_iou=0.9)},
    }
    ranked = rank_models(per, "d2_iou")
    assert [c for _, _, c in ranked] == [2, 2]
    assert ranked[0][0] == "x"
    reordered = {m: dict(reversed(list(r.items()))) for m, r in per.items()}
    assert rank_models(reordered, "d2_iou") == ranked
    with pytest.raises(ValueError):
        rank_models({"x": {"i": _rep(d2_iou=None)}}, "d2_iou")


def test_paired_metric_bookkeeping():
    a = {"i1": _rep(d2_iou=0.1), "i2": _rep(d2_iou=None), "i3": _rep(d2_iou=0.3)}
    b = {"i1": _rep(d2_iou=0.2), "i2": _rep(d2_iou=0.5), "i4": _rep(d2_iou=0.3)}
    series, dropped = paired_metric(a, b, "d2_iou")
    assert series.image_ids == ("i1",) and dropped == 3


def test_three_models_three_leaders():
    """Hand-built instance where each metric crowns a different model.

    Annotations: two empty masks and two copies of a 10-pixel block X.
    perfect: 4 x X              -> ged 1/2, iou 0,   det 1/2
    sloppy:  2 empty + 2 x Z    -> ged 1/3, iou 4/3, det 0    (IoU(X, Z) = 1/3)
    middle:  1 empty + 3 x W    -> ged 1/5, iou 1/5, det 1/8  (IoU(X, W) = 9/10)
    """
    from oracles import brute_ged
    from segunc.metrics import ged_triple

    z = np.zeros((4, 5), bool)
    x = z.copy()
    x[0:2] = True
    zz = z.copy()
    zz[1:3] = True
    w = x.copy()
    w[0, 0] = False
    ann = np.stack([z, z, x, x])
    models = {
        "perfect": np.stack([x] * 4),
        "sloppy": np.stack([z, z, zz, zz]),
        "middle": np.stack([z, w, w, w]),
    }
    expected = {
        "perfect": (0.5, 0.0, 0.5),
        "sloppy": (1 / 3, 4 / 3, 0.0),
        "middle": (0.2, 0.2, 0.125),
    }
    per_image = {}
    for name, pred in models.items():
        rep = ged_triple(ann, pred)
        want = expected[name]
        assert rep.d2_ged == pytest.approx(want[0], abs=1e-12)
        assert rep.d2_iou == pytest.approx(want[1], abs=1e-12)
        assert rep.d2_det == pytest.approx(want[2], abs=1e-12)
        assert rep.d2_ged == pytest.approx(brute_ged(ann, pred, "iou", "inclusive"), abs=1e-12)
        per_image[name] = {f"i{k}": rep for k in range(3)}
    leaders = {m: rank_models(per_image, m)[0][0] for m in ("d2_ged", "d2_iou", "d2_det")}
    assert leaders == {"d2_ged": "middle", "d2_iou": "perfect", "d2_det": "sloppy"}
