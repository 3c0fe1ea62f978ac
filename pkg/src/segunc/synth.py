"""Synthetic multi-annotator mask datasets.

Each annotation is the true shape seen through an annotator: scaled and
shifted by a systematic bias, possibly left out entirely (the annotator
sees no object), and drawn with a wobbly boundary. The boundary radius
at polar angle ``t`` is ``r * scale * (1 + sigma * eta(t))`` where
``eta`` is a convex mix of random-phase cosines at frequencies
``2 .. harmonics + 1``, so ``|eta| <= 1`` and the boundary never moves
more than ``sigma * r * scale`` pixels from the biased shape.

Pixel ``(row, col)`` is foreground iff its center ``(col + 0.5, row + 0.5)``
lies inside the boundary. All randomness comes from :mod:`segunc.prng`
substreams keyed by ``(seed, image, lane[, annotator])``, so output does
not depend on generation order or worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from segunc.prng import Stream

TRUTH_LANE = 0
ANNOTATOR_LANE = 1
PREDICTOR_LANE = 2

STYLES = ("match_emptiness_sloppy", "always_segment_perfect", "oracle")
_STYLE_CODE = {name: i for i, name in enumerate(STYLES)}

# sloppy predictor: centre shifted by half a radius, plus boundary wobble
SLOPPY_SHIFT = 0.5
SLOPPY_SIGMA = 0.15
SLOPPY_HARMONICS = 3


@dataclass(frozen=True)
class TrueShape:
    kind: str = "disk"
    center: tuple = (0.0, 0.0)
    radii: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("disk", "ellipse", "absent"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind != "absent" and min(self.radii) <= 0:
            raise ValueError("radii must be positive")
        if self.kind == "disk" and self.radii[0] != self.radii[1]:
            raise ValueError("a disk needs equal radii")

    @property
    def presence(self) -> bool:
        return self.kind != "absent"


@dataclass(frozen=True)
class AnnotatorProfile:
    scale_bias: float = 1.0
    offset_bias: tuple = (0.0, 0.0)
    empty_rate: float = 0.0
    noise_sigma: float = 0.0
    noise_harmonics: int = 4

    def __post_init__(self):
        if self.scale_bias <= 0:
            raise ValueError("scale_bias must be positive")
        if not 0.0 <= self.empty_rate <= 1.0:
            raise ValueError("empty_rate must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.noise_sigma > 0 and self.noise_harmonics < 1:
            raise ValueError("noise_harmonics must be at least 1 when noise_sigma > 0")


@dataclass(frozen=True)
class TruthParams:
    radius_range: tuple = (8.0, 16.0)
    aspect_range: tuple = (1.0, 1.0)
    presence_prob: float = 1.0

    def __post_init__(self):
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radius_range must satisfy 0 < low <= high")
        alo, ahi = self.aspect_range
        if not 0 < alo <= ahi:
            raise ValueError("aspect_range must satisfy 0 < low <= high")
        if not 0.0 <= self.presence_prob <= 1.0:
            raise ValueError("presence_prob must lie in [0, 1]")


@dataclass(frozen=True)
class SynthScenario:
    shape: tuple = (64, 64)
    n_images: int = 10
    truth: TruthParams = field(default_factory=TruthParams)
    annotators: tuple = (AnnotatorProfile(),)
    seed: int = 0
    preset: Optional[str] = None

    def __post_init__(self):
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise ValueError("grid height and width must be at least 1")
        if self.n_images < 0:
            raise ValueError("n_images must be non-negative")
        if not self.annotators:
            raise ValueError("at least one annotator profile is required")

    def max_jitter(self) -> float:
        """Largest boundary displacement (pixels) any annotator can draw."""
        r = max(self.truth.radius_range) * max(self.truth.aspect_range[1], 1.0)
        return max(a.noise_sigma * a.scale_bias * r for a in self.annotators)

    def as_dict(self) -> dict:
        """Fields in scenario-document form (``grid`` instead of ``shape``)."""
        d = asdict(self)
        del d["shape"]
        d["grid"] = {"height": self.shape[0], "width": self.shape[1]}
        if d["preset"] is None:
            del d["preset"]
        return d


@dataclass(frozen=True)
class SynthImage:
    image_id: str
    truth: TrueShape
    annotations: np.ndarray


def image_id(index: int) -> str:
    return f"img{index:05d}"


def _boundary_terms(stream: Stream, harmonics: int) -> list[tuple[float, int, float]]:
    raw = []
    for k in range(harmonics):
        amplitude = 1.0 - stream.uniform()  # in (0, 1]
        raw.append((amplitude, k + 2, stream.angle()))
    total = sum(a for a, _, _ in raw)
    return [(a / total, f, phase) for a, f, phase in raw]


def _render(
    grid: tuple,
    center: tuple,
    radii: tuple,
    sigma: float = 0.0,
    terms: Sequence[tuple[float, int, float]] = (),
) -> np.ndarray:
    h, w = grid
    ys = np.arange(h, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(w, dtype=np.float64)[None, :] + 0.5
    u = (xs - center[0]) / radii[0]
    v = (ys - center[1]) / radii[1]
    rho = np.hypot(u, v)
    if sigma == 0.0 or not terms:
        return rho <= 1.0
    theta = np.arctan2(v, u)
    eta = np.zeros_like(rho)
    for weight, freq, phase in terms:
        eta += weight * np.cos(freq * theta + phase)
    return rho <= np.maximum(1.0 + sigma * eta, 0.0)


def rasterize(shape: TrueShape, grid: tuple) -> np.ndarray:
    """Mask of pixels whose centers fall inside ``shape`` (edge inclusive)."""
    if not shape.presence:
        return np.zeros(grid, dtype=bool)
    return _render(grid, shape.center, shape.radii)


def annotate(shape: TrueShape, profile: AnnotatorProfile, stream: Stream, grid: tuple) -> np.ndarray:
    """Draw one annotation of ``shape`` by an annotator with ``profile``.

    Draw order on ``stream``: one uniform for the empty decision, then an
    amplitude and a phase per harmonic. Draws happen whatever the
    parameters, so changing ``noise_sigma`` alone keeps every other draw.
    """
    skip = stream.uniform() < profile.empty_rate
    terms = _boundary_terms(stream, profile.noise_harmonics) if profile.noise_harmonics > 0 else []
    if not shape.presence or skip:
        return np.zeros(grid, dtype=bool)
    center = (
        shape.center[0] + profile.offset_bias[0],
        shape.center[1] + profile.offset_bias[1],
    )
    radii = (shape.radii[0] * profile.scale_bias, shape.radii[1] * profile.scale_bias)
    return _render(grid, center, radii, profile.noise_sigma, terms)


def draw_truth(params: TruthParams, grid: tuple, stream: Stream) -> TrueShape:
    present = stream.uniform() < params.presence_prob
    r = stream.uniform_range(*params.radius_range)
    aspect = stream.uniform_range(*params.aspect_range)
    rx, ry = r, r * aspect
    h, w = grid
    cx = stream.uniform_range(rx, w - rx) if w > 2 * rx else w / 2.0
    cy = stream.uniform_range(ry, h - ry) if h > 2 * ry else h / 2.0
    if not present:
        return TrueShape("absent", (cx, cy), (rx, ry))
    kind = "disk" if rx == ry else "ellipse"
    return TrueShape(kind, (cx, cy), (rx, ry))


def generate_image(scenario: SynthScenario, index: int) -> SynthImage:
    truth = draw_truth(
        scenario.truth, scenario.shape, Stream.derive(scenario.seed, index, TRUTH_LANE)
    )
    annotations = np.stack(
        [
            annotate(truth, profile, Stream.derive(scenario.seed, index, ANNOTATOR_LANE, j), scenario.shape)
            for j, profile in enumerate(scenario.annotators)
        ]
    )
    return SynthImage(image_id(index), truth, annotations)


def _generate_chunk(args) -> list[SynthImage]:
    scenario, indices = args
    return [generate_image(scenario, i) for i in indices]


def generate(scenario: SynthScenario, workers: int = 1) -> list[SynthImage]:
    """Generate every image of ``scenario``, in index order."""
    indices = list(range(scenario.n_images))
    if workers <= 1 or len(indices) < 2:
        return [generate_image(scenario, i) for i in indices]
    chunks = [indices[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_generate_chunk, [(scenario, c) for c in chunks if c]))
    by_index = {int(img.image_id[3:]): img for part in parts for img in part}
    return [by_index[i] for i in indices]


def _sloppy_sample(truth: TrueShape, grid: tuple, stream: Stream) -> np.ndarray:
    r = 0.5 * (truth.radii[0] + truth.radii[1])
    direction = stream.angle()
    center = (
        truth.center[0] + SLOPPY_SHIFT * r * math.cos(direction),
        truth.center[1] + SLOPPY_SHIFT * r * math.sin(direction),
    )
    terms = _boundary_terms(stream, SLOPPY_HARMONICS)
    return _render(grid, center, truth.radii, SLOPPY_SIGMA, terms)


def synthetic_predictor(
    images: Sequence[SynthImage],
    style: str,
    scenario: SynthScenario,
    n_samples: int = 16,
    seed: Optional[int] = None,
) -> list[np.ndarray]:
    """Prediction sample sets for each image from a model archetype.

    ``match_emptiness_sloppy``
        ``round(n_samples * mean empty rate)`` empty masks at random
        positions; the rest are the true shape shifted by half a radius in
        a random direction with a wobbly boundary (IoU near 0.5).
    ``always_segment_perfect``
        ``n_samples`` copies of the rasterized truth; empty only when the
        object is absent.
    ``oracle``
        Each sample is a fresh annotation by a uniformly chosen annotator.
    """
    if style not in _STYLE_CODE:
        raise ValueError(f"unknown predictor style {style!r}; expected one of {STYLES}")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    seed = scenario.seed if seed is None else seed
    grid = scenario.shape
    code = _STYLE_CODE[style]
    empty_rate = float(np.mean([a.empty_rate for a in scenario.annotators]))
    out = []
    for img in images:
        index = int(img.image_id[3:])
        base = Stream.derive(seed, index, PREDICTOR_LANE, code)
        if style == "always_segment_perfect":
            truth_mask = rasterize(img.truth, grid)
            out.append(np.repeat(truth_mask[None], n_samples, axis=0))
            continue
        samples = []
        if style == "oracle":
            for s in range(n_samples):
                stream = base.spawn(s)
                profile = scenario.annotators[stream.below(len(scenario.annotators))]
                samples.append(annotate(img.truth, profile, stream, grid))
        else:
            n_empty = int(math.floor(empty_rate * n_samples + 0.5)) if img.truth.presence else n_samples
            empties = set(base.sample_indices(n_samples, n_empty))
            for s in range(n_samples):
                if s in empties:
                    samples.append(np.zeros(grid, dtype=bool))
                else:
                    samples.append(_sloppy_sample(img.truth, grid, base.spawn(s)))
        out.append(np.stack(samples))
    return out


def _preset_prostate_like() -> SynthScenario:
    profile = AnnotatorProfile(noise_sigma=0.04, noise_harmonics=4)
    return SynthScenario(
        shape=(64, 64),
        n_images=20,
        truth=TruthParams(radius_range=(12.0, 20.0), aspect_range=(1.0, 1.0), presence_prob=1.0),
        annotators=(profile,) * 6,
        seed=0,
        preset="prostate_like",
    )


def _preset_lidc_like() -> SynthScenario:
    annotators = tuple(
        AnnotatorProfile(scale_bias=s, offset_bias=off, empty_rate=0.5, noise_sigma=0.1, noise_harmonics=4)
        for s, off in ((0.9, (0.0, 0.0)), (1.0, (1.0, 0.0)), (1.1, (0.0, -1.0)), (1.0, (-1.0, 1.0)))
    )
    return SynthScenario(
        shape=(64, 64),
        n_images=200,
        truth=TruthParams(radius_range=(5.0, 12.0), aspect_range=(0.7, 1.3), presence_prob=1.0),
        annotators=annotators,
        seed=0,
        preset="lidc_like",
    )


PRESETS = {
    "prostate_like": _preset_prostate_like,
    "lidc_like": _preset_lidc_like,
}


def preset(name: str, **overrides) -> SynthScenario:
    """Named scenario, optionally with some fields replaced.

    ``prostate_like``: six unbiased annotators, boundary wobble only.
    ``lidc_like``: four annotators who each skip the object half the time,
    with mild scale and offset biases.
    """
    try:
        base = PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return replace(base, **overrides)
