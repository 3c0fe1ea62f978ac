"""PGM mask/probability-map files, dataset layout and CSV reports.

Masks are 8-bit binary PGM (``P5``, maxval 255); probability maps are
16-bit big-endian ``P5`` with maxval 65535. A dataset directory holds one
sub-directory per image::

    <root>/<image_id>/annotations/*.pgm
    <root>/<image_id>/predictions/<model>/*.pgm
    <root>/<image_id>/probmaps/<model>/*.pgm      (optional)
    <root>/<image_id>/truth/truth.pgm             (synthetic datasets)

File names sorted lexicographically fix the order inside a sample set.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import re
import tempfile
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from segunc import masks as mk
from segunc.entropy import as_probmap

PathLike = Union[str, os.PathLike]

MASK_THRESHOLD = 128
PROB_SCALE = 65535
ANNOTATIONS = "annotations"
PREDICTIONS = "predictions"
PROBMAPS = "probmaps"
TRUTH = "truth"
MASK_SUFFIX = ".pgm"


class PGMError(ValueError):
    """Base class for unreadable PGM files."""


class MalformedHeaderError(PGMError):
    pass


class UnsupportedMaxvalError(PGMError):
    pass


class TruncatedPayloadError(PGMError):
    pass


class LayoutError(ValueError):
    """Dataset directory does not follow the expected layout."""


_TOKEN = re.compile(rb"\s*((?:#[^\n]*\n\s*)*)(\S+)")


def _parse_header(data: bytes) -> tuple[int, int, int, int]:
    """Return ``(width, height, maxval, payload_offset)``."""
    if not data.startswith(b"P5"):
        raise MalformedHeaderError("not a binary PGM file (missing 'P5' magic)")
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        if pos >= len(data) or not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            raise MalformedHeaderError(f"expected whitespace before {name}")
        m = _TOKEN.match(data, pos)
        if m is None or not m.group(2).isdigit():
            raise MalformedHeaderError(f"invalid or missing {name}")
        values.append(int(m.group(2)))
        pos = m.end()
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    return width, height, maxval, pos + 1


def _read_pgm(path: PathLike, expected_maxval: int) -> np.ndarray:
    data = Path(path).read_bytes()
    width, height, maxval, offset = _parse_header(data)
    if maxval != expected_maxval:
        raise UnsupportedMaxvalError(f"{path}: maxval {maxval}, expected {expected_maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{path}: header claims {width}x{height} ({need} bytes), got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(height, width)


def _pgm_bytes(pixels: np.ndarray, maxval: int) -> bytes:
    height, width = pixels.shape
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + pixels.astype(dtype).tobytes()


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write ``payload`` to a temp file next to ``path`` and rename it over."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_mask(path: PathLike, threshold: int = MASK_THRESHOLD) -> np.ndarray:
    """Read an 8-bit PGM mask; a pixel is foreground iff value >= threshold."""
    return _read_pgm(path, 255) >= threshold


def write_mask(mask, path: PathLike) -> None:
    """Write a mask as 8-bit PGM with foreground 255 and background 0."""
    m = mk.as_mask(mask)
    atomic_write_bytes(path, _pgm_bytes(m.astype(np.uint8) * 255, 255))


def read_probmap(path: PathLike) -> np.ndarray:
    """Read a 16-bit PGM probability map as ``value / 65535``."""
    return _read_pgm(path, PROB_SCALE) / PROB_SCALE


def quantize_probmap(p) -> np.ndarray:
    # round half away from zero; p >= 0 so floor(x + 0.5) does it
    return np.floor(as_probmap(p) * PROB_SCALE + 0.5).astype(np.uint16)


def write_probmap(p, path: PathLike) -> None:
    atomic_write_bytes(path, _pgm_bytes(quantize_probmap(p), PROB_SCALE))


# --- dataset layout -------------------------------------------------------


def _pgm_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix == MASK_SUFFIX)


def _load_set(directory: Path, image_id: str, threshold: int) -> np.ndarray:
    if not directory.is_dir():
        raise LayoutError(f"image {image_id}: missing directory {directory}")
    files = _pgm_files(directory)
    if not files:
        raise LayoutError(f"image {image_id}: no {MASK_SUFFIX} files in {directory}")
    masks = [read_mask(f, threshold) for f in files]
    try:
        return mk.as_sample_set(masks)
    except ValueError as exc:
        raise LayoutError(f"image {image_id}: {exc}") from None


def list_images(root: PathLike) -> list[str]:
    """Sorted ids of image directories (those with an annotations folder)."""
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"dataset root {root} is not a directory")
    return sorted(p.name for p in root.iterdir() if (p / ANNOTATIONS).is_dir())


def discover_models(root: PathLike, kind: str = PREDICTIONS) -> list[str]:
    root = Path(root)
    found = set()
    for image in list_images(root):
        d = root / image / kind
        if d.is_dir():
            found.update(p.name for p in d.iterdir() if p.is_dir())
    return sorted(found)


def load_annotations(root: PathLike, image_id: str, threshold: int = MASK_THRESHOLD) -> np.ndarray:
    return _load_set(Path(root) / image_id / ANNOTATIONS, image_id, threshold)


def load_predictions(
    root: PathLike, image_id: str, model: str, threshold: int = MASK_THRESHOLD
) -> np.ndarray:
    return _load_set(Path(root) / image_id / PREDICTIONS / model, image_id, threshold)


def load_probmaps(root: PathLike, image_id: str, model: str) -> np.ndarray:
    directory = Path(root) / image_id / PROBMAPS / model
    if not directory.is_dir():
        raise LayoutError(f"image {image_id}: missing directory {directory}")
    files = _pgm_files(directory)
    if not files:
        raise LayoutError(f"image {image_id}: no probability maps in {directory}")
    return np.stack([read_probmap(f) for f in files])


def write_sample_set(masks, directory: PathLike, prefix: str = "") -> None:
    directory = Path(directory)
    s = mk.as_sample_set(masks)
    width = max(3, len(str(len(s) - 1)))
    for i, m in enumerate(s):
        write_mask(m, directory / f"{prefix}{i:0{width}d}{MASK_SUFFIX}")


# --- reports ----------------------------------------------------------------

REPORT_HEADER = (
    "image_id",
    "model",
    "d2_ged",
    "d2_iou",
    "d2_det",
    "n_ann",
    "n_pred",
    "p_empty_ann",
    "p_empty_pred",
    "estimator",
)


@dataclass(frozen=True)
class ReportRow:
    image_id: str
    model: str
    d2_ged: float
    d2_iou: Optional[float]
    d2_det: float
    n_ann: int
    n_pred: int
    p_empty_ann: float
    p_empty_pred: float
    estimator: str

    @classmethod
    def from_report(cls, image_id: str, model: str, report) -> "ReportRow":
        return cls(
            image_id=image_id,
            model=model,
            d2_ged=report.d2_ged,
            d2_iou=report.d2_iou,
            d2_det=report.d2_det,
            n_ann=report.n_annotations,
            n_pred=report.n_predictions,
            p_empty_ann=report.p_empty_ann,
            p_empty_pred=report.p_empty_pred,
            estimator=report.estimator,
        )


_INT_FIELDS = {"n_ann", "n_pred"}
_FLOAT_FIELDS = {"d2_ged", "d2_iou", "d2_det", "p_empty_ann", "p_empty_pred"}


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _format_cell(name: str, value) -> str:
    if value is None:
        return ""
    if name in _FLOAT_FIELDS:
        return format_float(value)
    return str(value)


def report_csv(rows: Iterable[ReportRow]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow([_format_cell(f.name, v) for f, v in zip(fields(ReportRow), astuple(row))])
    return buf.getvalue()


def write_report(rows: Iterable[ReportRow], path: PathLike) -> None:
    atomic_write_text(path, report_csv(rows))


def _parse_cell(name: str, cell: str, line: int):
    if name in _INT_FIELDS:
        try:
            return int(cell)
        except ValueError:
            raise ValueError(f"line {line}: column {name} is not an integer: {cell!r}") from None
    if name in _FLOAT_FIELDS:
        if cell == "" and name == "d2_iou":
            return None
        try:
            value = float(cell)
        except ValueError:
            raise ValueError(f"line {line}: column {name} is not numeric: {cell!r}") from None
        if math.isnan(value):
            raise ValueError(f"line {line}: column {name} is NaN")
        return value
    return cell


def read_report(path: PathLike) -> list[ReportRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != REPORT_HEADER:
            raise ValueError(f"{path}: unknown report header {header!r}")
        rows = []
        for line, cells in enumerate(reader, start=2):
            if len(cells) != len(REPORT_HEADER):
                raise ValueError(f"{path}: line {line} has {len(cells)} cells, expected {len(REPORT_HEADER)}")
            rows.append(ReportRow(*(_parse_cell(n, c, line) for n, c in zip(REPORT_HEADER, cells))))
    return rows


def write_json(payload: dict, path: PathLike) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
