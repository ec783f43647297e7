"""Loss-log and image-snapshot ingestion.

Loss logs are line oriented (JSONL, or CSV with an ``epoch,g_loss,d_loss``
header) so a live trainer's log can be tailed. Images are binary P5 PGM
(8-bit grayscale PNG is read through Pillow when it is installed).
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence, Union

import numpy as np

MIN_IMAGE_SIDE = 16

PathLike = Union[str, os.PathLike]


class TelemetryError(ValueError):
    """Raised for malformed loss logs or image files."""


class LossKind(str, Enum):
    BCE = "binary-cross-entropy"
    RELATIVISTIC_HINGE = "relativistic-hinge"
    OTHER = "other"


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    g_loss: float
    d_loss: float

    def __post_init__(self):
        if isinstance(self.epoch, bool) or not isinstance(self.epoch, (int, np.integer)):
            raise TelemetryError(f"epoch must be an integer, got {self.epoch!r}")
        if self.epoch < 0:
            raise TelemetryError(f"epoch must be non-negative, got {self.epoch}")
        for name in ("g_loss", "d_loss"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise TelemetryError(f"epoch {self.epoch}: {name} is not finite ({value!r})")


@dataclass(frozen=True)
class LossSeries:
    """Validated, epoch-ordered loss records of one run.

    ``gaps`` lists ``(after_epoch, next_epoch)`` pairs wherever the log
    skips epochs; detectors operate on the epochs that are present.
    """

    records: tuple[LossRecord, ...]
    loss_kind: LossKind = LossKind.BCE
    gaps: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.records:
            raise TelemetryError("loss series is empty")
        epochs = [r.epoch for r in self.records]
        for prev, cur in zip(epochs, epochs[1:]):
            if cur <= prev:
                raise TelemetryError(f"epochs must be strictly increasing ({prev} then {cur})")
        gaps = tuple((a, b) for a, b in zip(epochs, epochs[1:]) if b != a + 1)
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        object.__setattr__(self, "gaps", gaps)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LossRecord]:
        return iter(self.records)

    @property
    def epochs(self) -> np.ndarray:
        return np.array([r.epoch for r in self.records], dtype=np.int64)

    @property
    def g(self) -> np.ndarray:
        return np.array([r.g_loss for r in self.records], dtype=np.float64)

    @property
    def d(self) -> np.ndarray:
        return np.array([r.d_loss for r in self.records], dtype=np.float64)

    @classmethod
    def from_arrays(cls, epochs, g, d, loss_kind=LossKind.BCE) -> "LossSeries":
        recs = tuple(LossRecord(int(e), float(gv), float(dv)) for e, gv, dv in zip(epochs, g, d))
        return cls(recs, loss_kind)


@dataclass(frozen=True, eq=False)
class ImageSet:
    """Grayscale rasters of identical size with pixels in [0, 1].

    ``images`` is a read-only ``(n, height, width)`` float64 array.
    """

    images: np.ndarray

    def __post_init__(self):
        arr = np.array(self.images, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] == 0:
            raise TelemetryError("an image set needs at least one 2-D image")
        h, w = arr.shape[1:]
        if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
            raise TelemetryError(f"images must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {h}x{w}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise TelemetryError("pixel values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "images", arr)

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, idx) -> np.ndarray:
        return self.images[idx]

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    def subset(self, indices: Sequence[int]) -> "ImageSet":
        return ImageSet(self.images[np.asarray(indices, dtype=np.int64)])


# ---------------------------------------------------------------------------
# Loss logs

def _as_text_lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            yield from _as_text_lines(fh)
        return
    for raw in source:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def _number(value, lineno: int, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TelemetryError(f"line {lineno}: field {name} is not a number ({value!r})")
    value = float(value)
    if not math.isfinite(value):
        raise TelemetryError(f"line {lineno}: field {name} is not finite ({value!r})")
    return value


def _record_from_mapping(obj, lineno: int) -> LossRecord:
    if not isinstance(obj, dict):
        raise TelemetryError(f"line {lineno}: expected a JSON object")
    for key in ("epoch", "g_loss", "d_loss"):
        if key not in obj:
            raise TelemetryError(f"line {lineno}: missing field {key}")
    epoch = obj["epoch"]
    if isinstance(epoch, float) and epoch.is_integer():
        epoch = int(epoch)
    if isinstance(epoch, bool) or not isinstance(epoch, int) or epoch < 0:
        raise TelemetryError(f"line {lineno}: field epoch must be a non-negative integer ({epoch!r})")
    return LossRecord(epoch, _number(obj["g_loss"], lineno, "g_loss"), _number(obj["d_loss"], lineno, "d_loss"))


def _reject_constant(token):
    raise ValueError(f"non-finite literal {token}")


def iter_loss_records(source, format: str = "jsonl") -> Iterator[LossRecord]:
    """Yield records one line at a time, in file order.

    This is the streaming half of :func:`parse_loss_log`: it validates each
    line but does not sort or check for duplicates, so a caller can act on
    each epoch before the rest of the stream has arrived.
    """
    if format == "jsonl":
        for lineno, line in enumerate(_as_text_lines(source), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except ValueError as exc:
                # NaN/Infinity literals land here too; name the field if we can
                m = re.search(r'"(g_loss|d_loss)"\s*:\s*(-?NaN|-?Infinity)', line)
                if m:
                    raise TelemetryError(f"line {lineno}: field {m.group(1)} is not finite") from None
                raise TelemetryError(f"line {lineno}: unparseable JSON ({exc})") from None
            yield _record_from_mapping(obj, lineno)
    elif format == "csv":
        lines = _as_text_lines(source)
        reader = csv.reader(lines)
        header = None
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                header = [c.strip() for c in row]
                if sorted(header) != ["d_loss", "epoch", "g_loss"]:
                    raise TelemetryError(f"line {lineno}: CSV header must be epoch,g_loss,d_loss")
                continue
            if len(row) != 3:
                raise TelemetryError(f"line {lineno}: expected 3 columns, got {len(row)}")
            cells = dict(zip(header, (c.strip() for c in row)))
            try:
                epoch = int(cells["epoch"])
            except ValueError:
                raise TelemetryError(f"line {lineno}: field epoch is not an integer ({cells['epoch']!r})") from None
            vals = {}
            for name in ("g_loss", "d_loss"):
                try:
                    vals[name] = float(cells[name])
                except ValueError:
                    raise TelemetryError(f"line {lineno}: field {name} is not a number ({cells[name]!r})") from None
                if not math.isfinite(vals[name]):
                    raise TelemetryError(f"line {lineno}: field {name} is not finite")
            if epoch < 0:
                raise TelemetryError(f"line {lineno}: field epoch must be non-negative")
            yield LossRecord(epoch, vals["g_loss"], vals["d_loss"])
    else:
        raise TelemetryError(f"unknown loss log format {format!r}")


def parse_loss_log(source, format: str = "jsonl", loss_kind=LossKind.BCE) -> LossSeries:
    """Parse a whole loss log into a validated :class:`LossSeries`.

    ``source`` may be a path, a binary or text stream, or any iterable of
    lines. Records are sorted by epoch; duplicate epochs are an error.
    """
    records = list(iter_loss_records(source, format))
    if not records:
        raise TelemetryError("loss log is empty")
    records.sort(key=lambda r: r.epoch)
    for prev, cur in zip(records, records[1:]):
        if prev.epoch == cur.epoch:
            raise TelemetryError(f"duplicate epoch {cur.epoch}")
    return LossSeries(tuple(records), loss_kind)


def format_loss_record(rec: LossRecord, format: str = "jsonl") -> str:
    # repr() round-trips floats exactly
    if format == "jsonl":
        return f'{{"epoch":{rec.epoch},"g_loss":{rec.g_loss!r},"d_loss":{rec.d_loss!r}}}\n'
    if format == "csv":
        return f"{rec.epoch},{rec.g_loss!r},{rec.d_loss!r}\n"
    raise TelemetryError(f"unknown loss log format {format!r}")


def emit_loss_log(series: Iterable[LossRecord], stream: IO[str], format: str = "jsonl") -> None:
    if format == "csv":
        stream.write("epoch,g_loss,d_loss\n")
    for rec in series:
        stream.write(format_loss_record(rec, format))


def slice_window(series: LossSeries, end_epoch: int, width: int) -> LossSeries:
    """Sub-series covering epochs ``(end_epoch - width, end_epoch]``."""
    if width < 2:
        raise TelemetryError(f"window width must be >= 2, got {width}")
    epochs = series.epochs
    pos = np.searchsorted(epochs, end_epoch)
    if pos >= len(epochs) or epochs[pos] != end_epoch:
        raise TelemetryError(f"epoch {end_epoch} is not in the series")
    lo = np.searchsorted(epochs, end_epoch - width, side="right")
    return LossSeries(series.records[lo:pos + 1], series.loss_kind)


# ---------------------------------------------------------------------------
# Images

def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    pos = 2
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise TelemetryError("malformed PGM header")
        tokens.append(int(data[start:pos]))
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise TelemetryError(f"{path}: not a binary P5 PGM file")
    (width, height, maxval), offset = _pgm_tokens(data, 3)
    if not 0 < maxval < 256:
        raise TelemetryError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    if len(data) - offset < width * height:
        raise TelemetryError(f"{path}: truncated raster")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    return raster.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path: PathLike, image: np.ndarray) -> None:
    """Write a [0, 1] image as 8-bit P5 PGM (rounded to the nearest level)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise TelemetryError("write_pgm expects a 2-D image")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = raw.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raw.tobytes())


def _read_png(path: PathLike) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on environment
        raise TelemetryError(f"{path}: PNG support requires Pillow") from None
    with Image.open(path) as im:
        if im.mode != "L":
            raise TelemetryError(f"{path}: only 8-bit grayscale PNG is supported (mode {im.mode})")
        return np.asarray(im, dtype=np.float64) / 255.0


def read_image(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic[:2] == b"P5":
        return read_pgm(path)
    if magic == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise TelemetryError(f"{path}: unsupported image format")


def load_image_set(paths: Sequence[PathLike]) -> ImageSet:
    """Load grayscale images, in the given order, into one :class:`ImageSet`."""
    paths = list(paths)
    if not paths:
        raise TelemetryError("no image files given")
    rasters = []
    for p in paths:
        img = read_image(p)
        if rasters and img.shape != rasters[0].shape:
            h0, w0 = rasters[0].shape
            h1, w1 = img.shape
            raise TelemetryError(f"mixed image dimensions: {h0}x{w0} ({paths[0]}) and {h1}x{w1} ({p})")
        rasters.append(img)
    return ImageSet(np.stack(rasters))


IMAGE_SUFFIXES = (".pgm", ".png")


def list_images(directory: PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise TelemetryError(f"{directory}: not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_image_dir(directory: PathLike) -> ImageSet:
    return load_image_set(list_images(directory))


_EPOCH_DIR = re.compile(r"^epoch_(\d+)$")


def find_snapshot_dirs(snapshots_dir: PathLike) -> dict[int, Path]:
    """Map epoch -> directory for every ``epoch_<N>/`` under ``snapshots_dir``."""
    root = Path(snapshots_dir)
    if not root.is_dir():
        raise TelemetryError(f"{snapshots_dir}: not a directory")
    found = {}
    for child in root.iterdir():
        m = _EPOCH_DIR.match(child.name)
        if m and child.is_dir():
            found[int(m.group(1))] = child
    return dict(sorted(found.items()))


def write_image_set(directory: PathLike, images: ImageSet, prefix: str = "img") -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(images) - 1)))
    out = []
    for i, img in enumerate(images.images):
        p = d / f"{prefix}_{i:0{width}d}.pgm"
        write_pgm(p, img)
        out.append(p)
    return out


def read_text_or_stdin(source: str) -> IO:
    """Open ``source`` for binary reading; ``-`` means standard input."""
    import sys

    if source == "-":
        return sys.stdin.buffer
    return open(source, "rb")


__all__ = [
    "TelemetryError", "LossKind", "LossRecord", "LossSeries", "ImageSet",
    "iter_loss_records", "parse_loss_log", "emit_loss_log", "format_loss_record",
    "slice_window", "read_pgm", "write_pgm", "read_image", "load_image_set",
    "load_image_dir", "list_images", "find_snapshot_dirs", "write_image_set",
    "MIN_IMAGE_SIDE",
]
