"""Spatially constrained sample generation, spatial-autocorrelation
diagnostics and class-ratio-controlled training allocation.

Sample labels come from a land-cover raster whose pixel values are indices
into SUBCLASSES; subclass "landslide" is the positive class, the other six
are the non-landslide land covers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllocationError,
    DiagnosticError,
    InputError,
    ParameterError,
    SamplingError,
)
from .features import FeatureStack
from .raster import Raster

SUBCLASSES = ("landslide", "building", "road", "agriculture", "forest", "barren", "water")
SUBCLASS_CODES = {name: i for i, name in enumerate(SUBCLASSES)}
NON_LANDSLIDE_SUBCLASSES = SUBCLASSES[1:]

LABEL_NON_LANDSLIDE = "non-landslide"
LABEL_LANDSLIDE = "landslide"

# How many consecutive rejections the min-distance sampler tolerates per
# requested point before declaring saturation.
REJECTION_FACTOR = 50


@dataclass(frozen=True)
class SamplePoint:
    x: float
    y: float
    year: int
    label: str
    subclass: str

    def __post_init__(self):
        if self.subclass not in SUBCLASS_CODES:
            raise InputError(f"unknown subclass {self.subclass!r}")
        expected = LABEL_LANDSLIDE if self.subclass == "landslide" else LABEL_NON_LANDSLIDE
        if self.label != expected:
            raise InputError(f"label {self.label!r} inconsistent with subclass {self.subclass!r}")


@dataclass
class SampleSet:
    points: list = field(default_factory=list)
    min_distance: float = 0.0
    saturated: bool = False

    def __len__(self):
        return len(self.points)

    def by_label(self, label: str) -> list:
        return [p for p in self.points if p.label == label]

    def by_year(self, year: int) -> "SampleSet":
        return SampleSet([p for p in self.points if p.year == year], self.min_distance)

    def years(self) -> list:
        return sorted({p.year for p in self.points})


def merge_sets(sets) -> SampleSet:
    """Concatenate sample sets drawn with the same distance rule."""
    sets = list(sets)
    dists = {s.min_distance for s in sets}
    if len(dists) > 1:
        raise InputError(f"cannot merge sets with different min distances {sorted(dists)}")
    points = [p for s in sets for p in s.points]
    return SampleSet(points, dists.pop() if dists else 0.0,
                     saturated=any(s.saturated for s in sets))


@dataclass
class TrainingMatrix:
    """Feature rows for a point set; rows with missing values are removed.

    `kept_indices` maps each row back to the index of its point in the
    extraction input (None when the matrix was built directly).
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    n_dropped: int = 0
    kept_indices: np.ndarray | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise InputError("features and labels disagree on row count")
        if np.isnan(self.features).any():
            raise InputError("training matrix must not contain missing values")


# ---------------------------------------------------------------------------
# Moran's I correlogram
# ---------------------------------------------------------------------------


def _lag_offsets(lag: int, connectivity: str):
    if connectivity == "queen":
        offs = [
            (dr, dc)
            for dr in range(-lag, lag + 1)
            for dc in range(-lag, lag + 1)
            if max(abs(dr), abs(dc)) == lag
        ]
    elif connectivity == "rook":
        offs = [(-lag, 0), (lag, 0), (0, -lag), (0, lag)]
    else:
        raise ParameterError(f"connectivity must be 'queen' or 'rook', got {connectivity!r}")
    return offs


def morans_correlogram(raster: Raster, max_lag: int, connectivity: str = "queen"):
    """Moran's I at pixel lags 1..max_lag with binary neighbor weights.

    Queen connectivity pairs pixels at Chebyshev distance equal to the lag;
    rook restricts pairs to the same row or column. Lags with no valid
    pixel pair yield NaN.
    """
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    v = raster.values.astype(np.float64)
    valid = np.isfinite(v)
    n = int(valid.sum())
    vals = v[valid]
    if n < 2 or np.all(vals == vals.ravel()[0]):
        raise DiagnosticError("Moran's I needs at least two distinct valid values")
    z = np.where(valid, v - vals.mean(), 0.0)
    denom = float((z[valid] ** 2).sum())
    h, w = v.shape
    out = []
    for lag in range(1, max_lag + 1):
        cross = 0.0
        pairs = 0
        for dr, dc in _lag_offsets(lag, connectivity):
            r0, r1 = max(0, -dr), min(h, h - dr)
            c0, c1 = max(0, -dc), min(w, w - dc)
            if r0 >= r1 or c0 >= c1:
                continue
            a = z[r0:r1, c0:c1]
            b = z[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
            both = valid[r0:r1, c0:c1] & valid[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
            cross += float((a * b)[both].sum())
            pairs += int(both.sum())
        i_value = (n / pairs) * (cross / denom) if pairs > 0 else float("nan")
        out.append((lag, i_value))
    return out


# ---------------------------------------------------------------------------
# Min-distance sampling
# ---------------------------------------------------------------------------


class _DistanceIndex:
    """Grid-bucket index answering 'is any accepted point within d'."""

    def __init__(self, min_dist: float):
        self.min_dist = min_dist
        self.cell = max(min_dist, 1e-9)
        self.buckets = {}

    def far_enough(self, x: float, y: float) -> bool:
        if self.min_dist <= 0:
            return True
        gx, gy = int(x // self.cell), int(y // self.cell)
        d2 = self.min_dist * self.min_dist
        for bx in (gx - 1, gx, gx + 1):
            for by in (gy - 1, gy, gy + 1):
                for (px, py) in self.buckets.get((bx, by), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < d2:
                        return False
        return True

    def add(self, x: float, y: float):
        if self.min_dist <= 0:
            return
        self.buckets.setdefault((int(x // self.cell), int(y // self.cell)), []).append((x, y))


def _point_from_pixel(labels: Raster, row: int, col: int, year: int) -> SamplePoint:
    code = int(labels.values[row, col])
    subclass = SUBCLASSES[code]
    label = LABEL_LANDSLIDE if subclass == "landslide" else LABEL_NON_LANDSLIDE
    x, y = labels.header.pixel_center(row, col)
    return SamplePoint(x=x, y=y, year=year, label=label, subclass=subclass)


def sample_min_distance(labels: Raster, n: int, min_dist: float,
                        rng: np.random.Generator, year: int = 0) -> SampleSet:
    """Draw up to n pixel-center points, pairwise at least min_dist apart.

    Candidates are a seeded permutation of the valid pixels (rejection
    sampling without replacement); the draw stops early and flags
    saturation after 50*n consecutive rejections or when the permutation
    is exhausted.
    """
    if min_dist < 0:
        raise ParameterError(f"min_dist must be >= 0, got {min_dist}")
    valid = np.isfinite(labels.values)
    flat = np.flatnonzero(valid.ravel())
    if flat.size == 0:
        raise SamplingError("labels raster has no valid pixels")
    order = rng.permutation(flat.size)
    index = _DistanceIndex(min_dist)
    points = []
    rejections = 0
    limit = REJECTION_FACTOR * max(n, 1)
    saturated = False
    w = labels.header.width
    for k in order:
        if len(points) >= n:
            break
        if rejections >= limit:
            saturated = True
            break
        pix = int(flat[k])
        row, col = divmod(pix, w)
        x, y = labels.header.pixel_center(row, col)
        if index.far_enough(x, y):
            points.append(_point_from_pixel(labels, row, col, year))
            index.add(x, y)
            rejections = 0
        else:
            rejections += 1
    if len(points) < n and not saturated:
        saturated = True  # permutation exhausted before reaching n
    return SampleSet(points, min_distance=min_dist, saturated=saturated)


def split_disjoint(training: SampleSet, validation: SampleSet, min_dist: float) -> SampleSet:
    """Drop validation points closer than min_dist to any same-year training point."""
    if min_dist <= 0 or not training.points:
        return SampleSet(list(validation.points), validation.min_distance)
    by_year = {}
    for p in training.points:
        by_year.setdefault(p.year, _DistanceIndex(min_dist)).add(p.x, p.y)
    kept = []
    for p in validation.points:
        idx = by_year.get(p.year)
        if idx is None or idx.far_enough(p.x, p.y):
            kept.append(p)
    return SampleSet(kept, validation.min_distance)


# ---------------------------------------------------------------------------
# Class-ratio allocation
# ---------------------------------------------------------------------------


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _split_even(total: int, k: int):
    """Split total into k near-equal integers, larger shares first."""
    base, rem = divmod(total, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def _proportional_allocation(quotas: dict, extra: int, weights: dict) -> dict:
    """Distribute `extra` across keys proportionally to weights using the
    largest-remainder rule; ties resolve in SUBCLASSES order."""
    total_w = sum(weights.values())
    shares = {k: extra * weights[k] / total_w for k in quotas}
    floors = {k: int(math.floor(shares[k])) for k in quotas}
    leftover = extra - sum(floors.values())
    order = sorted(quotas, key=lambda k: (-(shares[k] - floors[k]), SUBCLASSES.index(k)))
    for k in order[:leftover]:
        floors[k] += 1
    return {k: quotas[k] + floors[k] for k in quotas}


def _draw_stratified_by_year(pool_points: list, count: int, rng: np.random.Generator) -> list:
    """Draw `count` points without replacement, spread as evenly as possible
    across the years present; shortfalls in one year are taken from the
    years with the most remaining points."""
    years = sorted({p.year for p in pool_points})
    by_year = {y: [p for p in pool_points if p.year == y] for y in years}
    targets = dict(zip(years, _split_even(count, len(years))))
    # Reassign capacity shortfalls deterministically.
    short = sum(max(0, targets[y] - len(by_year[y])) for y in years)
    for y in years:
        targets[y] = min(targets[y], len(by_year[y]))
    while short > 0:
        spare = sorted(years, key=lambda y: -(len(by_year[y]) - targets[y]))
        y = spare[0]
        room = len(by_year[y]) - targets[y]
        if room <= 0:
            raise AllocationError("pool too shallow across years")
        take = min(room, short)
        targets[y] += take
        short -= take
    chosen = []
    for y in years:
        pts = by_year[y]
        idx = rng.choice(len(pts), size=targets[y], replace=False)
        chosen.extend(pts[i] for i in sorted(idx.tolist()))
    return chosen


def beta_allocate(pool: SampleSet, beta: float, total: int, min_per_subclass: int,
                  rng: np.random.Generator) -> SampleSet:
    """Draw a training set with a non-landslide-to-landslide ratio of beta.

    The landslide share is round(total / (1 + beta)); within the
    non-landslide share every subclass first receives min_per_subclass
    points and the remainder is allocated proportionally to subclass pool
    frequency. Draws are without replacement and spread near-evenly over
    the years present in the pool.
    """
    if beta < 1:
        raise ParameterError(f"beta must be >= 1, got {beta}")
    pools = {s: [p for p in pool.points if p.subclass == s] for s in SUBCLASSES}
    missing = [s for s in SUBCLASSES if not pools[s]]
    if missing:
        raise AllocationError(f"pool lacks subclasses {missing}", subclass=missing[0])
    n_landslide = _round_half_away(total / (1.0 + beta))
    n_non = total - n_landslide
    if n_non < min_per_subclass * len(NON_LANDSLIDE_SUBCLASSES):
        raise AllocationError(
            f"non-landslide share {n_non} cannot cover the minimum of "
            f"{min_per_subclass} points for {len(NON_LANDSLIDE_SUBCLASSES)} subclasses"
        )
    quotas = {s: min_per_subclass for s in NON_LANDSLIDE_SUBCLASSES}
    extra = n_non - min_per_subclass * len(NON_LANDSLIDE_SUBCLASSES)
    weights = {s: len(pools[s]) for s in NON_LANDSLIDE_SUBCLASSES}
    quotas = _proportional_allocation(quotas, extra, weights)
    quotas["landslide"] = n_landslide
    for s in SUBCLASSES:
        if quotas.get(s, 0) > len(pools[s]):
            raise AllocationError(
                f"subclass {s!r} has {len(pools[s])} points, needs {quotas[s]}",
                subclass=s,
            )
    chosen = []
    for s in SUBCLASSES:  # fixed draw order for reproducibility
        if quotas.get(s, 0):
            chosen.extend(_draw_stratified_by_year(pools[s], quotas[s], rng))
    return SampleSet(chosen, pool.min_distance)


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------


def extract_features(points, stack: FeatureStack) -> TrainingMatrix:
    """Sample the stack at each point's containing pixel.

    Points outside the stack extent or hitting any nodata layer are
    dropped and counted, not errors. Labels are 1 for landslide, 0 for
    non-landslide.
    """
    pts = points.points if isinstance(points, SampleSet) else list(points)
    header = stack.header
    rows, cols, keep = [], [], []
    for i, p in enumerate(pts):
        r, c = header.index_of(p.x, p.y)
        if header.contains_index(r, c):
            rows.append(r)
            cols.append(c)
            keep.append(i)
    if keep:
        cube = np.stack([rast.values for _, rast in stack.layers])  # (p, h, w)
        feats = cube[:, rows, cols].T.astype(np.float64)
        complete = ~np.isnan(feats).any(axis=1)
        feats = feats[complete]
        kept = np.asarray(keep, dtype=np.int64)[complete]
        labels = np.array(
            [1 if pts[i].label == LABEL_LANDSLIDE else 0 for i in keep], dtype=np.int64
        )[complete]
    else:
        feats = np.empty((0, len(stack.layers)))
        labels = np.empty((0,), dtype=np.int64)
        kept = np.empty((0,), dtype=np.int64)
    dropped = len(pts) - feats.shape[0]
    return TrainingMatrix(
        features=feats,
        labels=labels,
        feature_names=stack.layer_names,
        n_dropped=dropped,
        kept_indices=kept,
    )


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

_CSV_FIELDS = ("x", "y", "year", "label", "subclass")


def save_samples(samples: SampleSet, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for p in samples.points:
            writer.writerow([repr(p.x), repr(p.y), p.year, p.label, p.subclass])


def load_samples(path, min_distance: float = 0.0) -> SampleSet:
    points = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(_CSV_FIELDS):
            raise InputError(f"unexpected sample columns {reader.fieldnames}")
        for row in reader:
            points.append(
                SamplePoint(
                    x=float(row["x"]),
                    y=float(row["y"]),
                    year=int(row["year"]),
                    label=row["label"],
                    subclass=row["subclass"],
                )
            )
    return SampleSet(points, min_distance)
