"""Grid data model, bit-exact file I/O, nearest-neighbor resampling and
quality-mask application.

Conventions fixed here and relied on everywhere else:

* a grid header's origin is the upper-left corner of the upper-left pixel,
  x grows with columns and y decreases with rows;
* nodata is an IEEE quiet NaN in float payloads;
* rasters are immutable after construction and all operations are pure.

File format: a JSON header sidecar ``<name>.hdr.json`` plus a raw
row-major payload, little-endian float32 (``<name>.f32``) for value grids
or uint8 (``<name>.u8``) for category masks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, CorruptFileError, FormatError

# QA categories understood by apply_qa_mask.
QA_CLEAR = 0
QA_CLOUD_MEDIUM = 1
QA_CLOUD_HIGH = 2
QA_GAP = 3
QA_OUTSIDE = 255
QA_CATEGORIES = frozenset({QA_CLEAR, QA_CLOUD_MEDIUM, QA_CLOUD_HIGH, QA_GAP, QA_OUTSIDE})

# Categories rejected when building composites: medium/high-confidence
# cloud and scan-gap pixels.
DEFAULT_REJECT = frozenset({QA_CLOUD_MEDIUM, QA_CLOUD_HIGH, QA_GAP})


@dataclass(frozen=True)
class GridHeader:
    """Geometry of a regular grid; two grids align iff all fields are equal."""

    width: int
    height: int
    origin_x: float
    origin_y: float
    pixel_size: float
    crs_label: str = "local"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise FormatError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not self.pixel_size > 0:
            raise FormatError(f"pixel_size must be positive, got {self.pixel_size}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        x = self.origin_x + (col + 0.5) * self.pixel_size
        y = self.origin_y - (row + 0.5) * self.pixel_size
        return x, y

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        """Containing pixel of a map coordinate; boundaries go to the pixel
        with the larger index (floor convention)."""
        col = math.floor((x - self.origin_x) / self.pixel_size)
        row = math.floor((self.origin_y - y) / self.pixel_size)
        return row, col

    def contains_index(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


def _as_grid(values, dtype, header: GridHeader):
    a = np.asarray(values, dtype=dtype)
    if a.ndim == 1:
        a = a.reshape(header.height, header.width)
    if a.shape != (header.height, header.width):
        raise FormatError(
            f"payload shape {a.shape} does not match header {header.height}x{header.width}"
        )
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Raster:
    """A single-band float32 grid; NaN marks nodata."""

    header: GridHeader
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid(self.values, np.float32, self.header))

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def with_values(self, values) -> "Raster":
        return Raster(self.header, values)


@dataclass(frozen=True)
class MaskRaster:
    """A categorical uint8 grid (QA band)."""

    header: GridHeader
    categories: np.ndarray

    def __post_init__(self):
        a = _as_grid(self.categories, np.uint8, self.header)
        bad = ~np.isin(a, list(QA_CATEGORIES))
        if bad.any():
            raise FormatError(
                f"mask contains categories outside {sorted(QA_CATEGORIES)}: "
                f"{sorted(np.unique(a[bad]).tolist())}"
            )
        object.__setattr__(self, "categories", a)


def ensure_aligned(*grids) -> GridHeader:
    """Return the common header, raising AlignmentError on any mismatch."""
    head = grids[0].header
    for g in grids[1:]:
        if g.header != head:
            raise AlignmentError(f"grids are not aligned: {g.header} vs {head}")
    return head


def full_like(header: GridHeader, fill=np.nan) -> Raster:
    return Raster(header, np.full(header.shape, fill, dtype=np.float32))


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def _header_path(base: Path) -> Path:
    return base.with_name(base.name + ".hdr.json")


def write_grid(base_path, grid) -> Path:
    """Write a Raster (.f32) or MaskRaster (.u8) with its header sidecar.

    ``base_path`` carries no extension; returns the payload path.
    A write-then-read roundtrip is bit-exact, including NaN positions.
    """
    base = Path(base_path)
    if isinstance(grid, Raster):
        dtype, ext, payload = "f32", ".f32", grid.values.astype("<f4", copy=False)
    elif isinstance(grid, MaskRaster):
        dtype, ext, payload = "u8", ".u8", grid.categories
    else:
        raise FormatError(f"cannot write object of type {type(grid).__name__}")
    h = grid.header
    header = {
        "width": h.width,
        "height": h.height,
        "origin_x": h.origin_x,
        "origin_y": h.origin_y,
        "pixel_size": h.pixel_size,
        "crs_label": h.crs_label,
        "dtype": dtype,
    }
    _header_path(base).write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    out = base.with_name(base.name + ext)
    out.write_bytes(payload.tobytes(order="C"))
    return out


def read_grid(base_path):
    """Read a grid written by write_grid; returns Raster or MaskRaster."""
    base = Path(base_path)
    hdr_file = _header_path(base)
    if not hdr_file.exists():
        raise FormatError(f"missing header sidecar {hdr_file}")
    try:
        meta = json.loads(hdr_file.read_text())
        header = GridHeader(
            width=int(meta["width"]),
            height=int(meta["height"]),
            origin_x=float(meta["origin_x"]),
            origin_y=float(meta["origin_y"]),
            pixel_size=float(meta["pixel_size"]),
            crs_label=str(meta["crs_label"]),
        )
        dtype_key = meta["dtype"]
        dtype = _DTYPES[dtype_key]
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"unreadable header {hdr_file}: {exc}") from exc
    ext = ".f32" if dtype_key == "f32" else ".u8"
    payload_file = base.with_name(base.name + ext)
    if not payload_file.exists():
        raise CorruptFileError(f"missing payload {payload_file}")
    raw = payload_file.read_bytes()
    expected = header.width * header.height * dtype.itemsize
    if len(raw) != expected:
        raise CorruptFileError(
            f"{payload_file}: payload is {len(raw)} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype=dtype).reshape(header.height, header.width)
    if dtype_key == "f32":
        return Raster(header, values.astype(np.float32))
    return MaskRaster(header, values)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _nearest_index(coords: np.ndarray, origin: float, pixel_size: float, sign: float,
                   size: int) -> np.ndarray:
    """Index of the source pixel whose center is nearest to each coordinate.

    ``sign`` is +1 for x (columns grow with x) and -1 for y (rows grow
    against y). Distance ties break toward the smaller index. Out-of-grid
    results are returned as -1.
    """
    u = sign * (coords - origin) / pixel_size  # in pixel units from the grid edge
    jf = u - 0.5
    lo = np.floor(jf)
    pick_hi = (jf - lo) > 0.5  # strict: ties stay at the smaller index
    j = lo.astype(np.int64) + pick_hi
    j[(j < 0) | (j >= size)] = -1
    return j


def resample_nearest(src: Raster, target: GridHeader) -> Raster:
    """Resample a raster onto a target grid by nearest pixel center.

    Target pixels whose nearest source center falls outside the source grid
    become nodata. Identical headers reproduce the input exactly.
    """
    if src.header.crs_label != target.crs_label:
        raise AlignmentError(
            f"cannot resample across CRS: {src.header.crs_label!r} vs {target.crs_label!r}"
        )
    if src.header == target:
        return Raster(target, src.values)
    tx = target.origin_x + (np.arange(target.width) + 0.5) * target.pixel_size
    ty = target.origin_y - (np.arange(target.height) + 0.5) * target.pixel_size
    cols = _nearest_index(tx, src.header.origin_x, src.header.pixel_size, +1.0,
                          src.header.width)
    rows = _nearest_index(ty, src.header.origin_y, src.header.pixel_size, -1.0,
                          src.header.height)
    out = np.full(target.shape, np.nan, dtype=np.float32)
    ok_r = rows >= 0
    ok_c = cols >= 0
    if ok_r.any() and ok_c.any():
        rr = rows[ok_r][:, None]
        cc = cols[ok_c][None, :]
        block = src.values[rr, cc]
        out[np.ix_(ok_r, ok_c)] = block
    return Raster(target, out)


def apply_qa_mask(band: Raster, qa: MaskRaster, reject=DEFAULT_REJECT) -> Raster:
    """Set band pixels whose QA category is in ``reject`` to nodata."""
    ensure_aligned(band, qa)
    if not reject:
        return band
    rejected = np.isin(qa.categories, list(reject))
    out = band.values.copy()
    out[rejected] = np.nan
    return Raster(band.header, out)
