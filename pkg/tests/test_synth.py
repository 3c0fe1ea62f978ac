import math
from dataclasses import replace

import numpy as np
import pytest

from segunc import synth
from segunc.entropy import entropy_of_mean
from segunc.masks import empty_flags, pairwise_d_iou
from segunc.metrics import det_closed_form, ged_triple
from segunc.prng import Stream
from segunc.synth import AnnotatorProfile, SynthScenario, TrueShape, TruthParams


def inside_oracle(shape, grid):
    """Per-pixel loop over pixel centres; independent of the vectorised path."""
    h, w = grid
    out = np.zeros(grid, dtype=bool)
    if not shape.presence:
        return out
    (cx, cy), (rx, ry) = shape.center, shape.radii
    for i in range(h):
        for j in range(w):
            x, y = j + 0.5, i + 0.5
            out[i, j] = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0
    return out


def test_rasterize_examples():
    assert not synth.rasterize(TrueShape("absent"), (5, 5)).any()
    tiny = synth.rasterize(TrueShape("disk", (2.5, 2.5), (0.4, 0.4)), (5, 5))
    want = np.zeros((5, 5), bool)
    want[2, 2] = True
    assert np.array_equal(tiny, want)
    assert np.array_equal(tiny, inside_oracle(TrueShape("disk", (2.5, 2.5), (0.4, 0.4)), (5, 5)))
    assert not synth.rasterize(TrueShape("disk", (40.0, -30.0), (5.0, 5.0)), (10, 10)).any()
    ell = TrueShape("ellipse", (7.3, 5.1), (4.2, 2.7))
    assert np.array_equal(synth.rasterize(ell, (12, 15)), inside_oracle(ell, (12, 15)))


def test_shape_validation():
    with pytest.raises(ValueError):
        TrueShape("disk", (0, 0), (1.0, 2.0))
    with pytest.raises(ValueError):
        TrueShape("square")
    with pytest.raises(ValueError):
        AnnotatorProfile(empty_rate=1.5)
    with pytest.raises(ValueError):
        AnnotatorProfile(noise_sigma=0.1, noise_harmonics=0)
    with pytest.raises(ValueError):
        TruthParams(radius_range=(5.0, 2.0))


def test_annotate_degenerate_noise_is_rasterize():
    shape = TrueShape("ellipse", (10.2, 9.7), (6.0, 4.5))
    m = synth.annotate(shape, AnnotatorProfile(), Stream(1), (20, 20))
    assert np.array_equal(m, synth.rasterize(shape, (20, 20)))


def test_annotate_always_empty():
    shape = TrueShape("disk", (8.0, 8.0), (4.0, 4.0))
    p = AnnotatorProfile(empty_rate=1.0, noise_sigma=0.2)
    assert not any(synth.annotate(shape, p, Stream(s), (16, 16)).any() for s in range(20))


def test_annotate_determinism_and_jitter_bound():
    shape = TrueShape("disk", (16.0, 16.0), (8.0, 8.0))
    p = AnnotatorProfile(noise_sigma=0.25, noise_harmonics=5)
    a = synth.annotate(shape, p, Stream(77), (32, 32))
    b = synth.annotate(shape, p, Stream(77), (32, 32))
    assert np.array_equal(a, b)
    ys, xs = np.mgrid[0:32, 0:32] + 0.5
    r = np.hypot(xs - 16.0, ys - 16.0)
    assert a[r <= 8.0 * 0.75].all()
    assert not a[r > 8.0 * 1.25].any()


def test_scale_and_offset_bias():
    shape = TrueShape("disk", (10.0, 10.0), (3.0, 3.0))
    p = AnnotatorProfile(scale_bias=2.0, offset_bias=(4.0, -2.0))
    got = synth.annotate(shape, p, Stream(0), (24, 24))
    assert np.array_equal(got, synth.rasterize(TrueShape("disk", (14.0, 8.0), (6.0, 6.0)), (24, 24)))


def test_generate_empty_scenario():
    assert synth.generate(synth.preset("lidc_like", n_images=0)) == []


def test_generate_is_deterministic_across_workers():
    sc = synth.preset("lidc_like", n_images=12, seed=99)
    serial = synth.generate(sc)
    parallel = synth.generate(sc, workers=3)
    assert [i.image_id for i in serial] == [i.image_id for i in parallel]
    for a, b in zip(serial, parallel):
        assert a.truth == b.truth and np.array_equal(a.annotations, b.annotations)
    assert len(serial[0].annotations) == 4


def test_generate_image_order_independent():
    sc = synth.preset("prostate_like", n_images=6, seed=3)
    full = synth.generate(sc)
    assert np.array_equal(synth.generate_image(sc, 4).annotations, full[4].annotations)


def test_prostate_like_entropy_in_boundary_band():
    sc = synth.preset("prostate_like", n_images=30, seed=11)
    sigma = sc.annotators[0].noise_sigma
    ys, xs = np.mgrid[0 : sc.shape[0], 0 : sc.shape[1]] + 0.5
    for img in synth.generate(sc):
        e = entropy_of_mean(img.annotations)
        (cx, cy), (r, _) = img.truth.center, img.truth.radii
        dist = np.abs(np.hypot(xs - cx, ys - cy) - r)
        assert e.any()
        assert dist[e > 0].max() <= sigma * r + 1e-9
        assert sigma * r <= sc.max_jitter()


def test_lidc_like_emptiness_fraction():
    sc = synth.preset("lidc_like", seed=5)
    images = synth.generate(sc)
    n = len(images) * len(sc.annotators)
    frac = np.mean([empty_flags(i.annotations).mean() for i in images])
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_neutral_noiseless_annotators_agree():
    sc = SynthScenario(
        shape=(32, 32), n_images=10,
        truth=TruthParams(radius_range=(4.0, 9.0), aspect_range=(0.6, 1.4), presence_prob=0.8),
        annotators=(AnnotatorProfile(),) * 5, seed=21,
    )
    for img in synth.generate(sc):
        want = synth.rasterize(img.truth, sc.shape)
        assert all(np.array_equal(m, want) for m in img.annotations)


def test_noise_monotonicity():
    base = synth.preset("prostate_like", n_images=200, seed=8)
    means = []
    for sigma in (0.0, 0.03, 0.06, 0.12, 0.2):
        sc = replace(base, annotators=tuple(replace(a, noise_sigma=sigma) for a in base.annotators))
        vals = []
        for img in synth.generate(sc):
            d = pairwise_d_iou(img.annotations, img.annotations)
            n = len(d)
            vals.append(d.sum() / (n * (n - 1)))
        means.append(float(np.mean(vals)))
    assert means[0] == 0.0
    assert all(b >= a - 0.01 for a, b in zip(means, means[1:]))
    assert means[-1] > means[0]


def test_predictor_styles_shapes_and_errors():
    sc = synth.preset("lidc_like", n_images=5)
    images = synth.generate(sc)
    for style in synth.STYLES:
        preds = synth.synthetic_predictor(images, style, sc, n_samples=8)
        assert len(preds) == 5 and preds[0].shape == (8, 64, 64)
        again = synth.synthetic_predictor(images, style, sc, n_samples=8)
        assert all(np.array_equal(a, b) for a, b in zip(preds, again))
    perfect = synth.synthetic_predictor(images, "always_segment_perfect", sc, 3)
    assert not empty_flags(perfect[0]).any()
    sloppy = synth.synthetic_predictor(images, "match_emptiness_sloppy", sc, 16)
    assert all(empty_flags(p).sum() == 8 for p in sloppy)
    with pytest.raises(ValueError):
        synth.synthetic_predictor(images, "bayesian", sc)


def test_oracle_ged_shrinks_with_samples():
    sc = synth.preset("lidc_like", n_images=100, seed=4)
    images = synth.generate(sc)
    means = {}
    for n in (4, 32):
        preds = synth.synthetic_predictor(images, "oracle", sc, n_samples=n)
        means[n] = np.mean([ged_triple(i.annotations, p).d2_ged for i, p in zip(images, preds)])
    assert means[32] < means[4]


def test_perfect_and_sloppy_detection_terms():
    sc = synth.preset("lidc_like", n_images=200, seed=17)
    images = synth.generate(sc)
    perfect = synth.synthetic_predictor(images, "always_segment_perfect", sc, 16)
    sloppy = synth.synthetic_predictor(images, "match_emptiness_sloppy", sc, 16)
    det_u = []
    for img, p, s in zip(images, perfect, sloppy):
        rp = ged_triple(img.annotations, p)
        rs = ged_triple(img.annotations, s)
        # inclusive estimator equals the closed form at the empirical rates
        assert rp.d2_det == pytest.approx(det_closed_form(rp.p_empty_ann, 0.0), abs=1e-12)
        assert rs.d2_det == pytest.approx(det_closed_form(rs.p_empty_ann, rs.p_empty_pred), abs=1e-12)
        det_u.append(ged_triple(img.annotations, p, "unbiased").d2_det)
    # population value 2 * (0.5 - 0)**2; the unbiased estimator has that mean
    se = np.std(det_u, ddof=1) / math.sqrt(len(det_u))
    assert abs(np.mean(det_u) - det_closed_form(0.5, 0.0)) <= 3 * se
    assert det_closed_form(0.5, 0.5) == 0.0
