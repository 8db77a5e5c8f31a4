"""Temporal landslide-activity metrics and annual area composition from a
stack of annual binary maps.

Per-pixel semantics over a year series of {landslide, non-landslide,
unobserved}:

* frequency: landslide years / observed years;
* first occurrence: earliest landslide year (flagged left-censored when
  the first observed year is already landslide);
* persistence: longest run of consecutive landslide years, where an
  unobserved year breaks the run;
* reoccurrence: number of landslide intervals, where an interval ends only
  at an observed non-landslide year (an unobserved year does not end it,
  and an interval still active in the last year counts).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .raster import GridHeader, Raster, ensure_aligned

LANDSLIDE = 1
NON_LANDSLIDE = 0
UNOBSERVED = -1


@dataclass
class AnnualMapStack:
    """Aligned per-year binary maps (1 landslide, 0 non-landslide, NaN unobserved)."""

    years: list
    maps: list

    def __post_init__(self):
        if len(self.years) != len(self.maps):
            raise InputError("years and maps differ in length")
        if not self.years:
            raise InputError("empty map stack")
        if any(b <= a for a, b in zip(self.years, self.years[1:])):
            raise InputError(f"years must be strictly increasing, got {self.years}")
        ensure_aligned(*self.maps)
        for year, m in zip(self.years, self.maps):
            vals = m.values[np.isfinite(m.values)]
            if vals.size and not np.isin(vals, (0.0, 1.0)).all():
                raise InputError(f"map {year} contains values other than 0/1/nodata")

    @property
    def header(self) -> GridHeader:
        return self.maps[0].header

    @property
    def pixel_area(self) -> float:
        return self.header.pixel_size**2

    def cube(self) -> np.ndarray:
        """(years, height, width) int8 cube with -1 for unobserved."""
        out = np.empty((len(self.years), *self.header.shape), dtype=np.int8)
        for i, m in enumerate(self.maps):
            v = m.values
            out[i] = np.where(np.isfinite(v), v, UNOBSERVED).astype(np.int8)
        return out


@dataclass(frozen=True)
class PixelMetrics:
    frequency: float | None
    first_occurrence: int | None
    persistence: int | None
    reoccurrence: int | None
    left_censored: bool = False


@dataclass
class MetricsRasters:
    frequency: Raster
    first_occurrence: Raster
    persistence: Raster
    reoccurrence: Raster
    left_censored: Raster


@dataclass(frozen=True)
class AreaComposition:
    """Pairwise change areas for one year against the year before."""

    year: int
    old_km2: float
    new_km2: float
    revegetated_km2: float
    valid_fraction: float


def _metrics_cube(cube: np.ndarray, years) -> dict:
    """Vectorized metric planes from a (years, h, w) int8 cube."""
    n_years = cube.shape[0]
    shape = cube.shape[1:]
    observed = cube >= 0
    slide = cube == LANDSLIDE

    obs_count = observed.sum(axis=0)
    slide_count = slide.sum(axis=0)
    any_obs = obs_count > 0
    with np.errstate(invalid="ignore"):
        frequency = np.where(any_obs, slide_count / np.maximum(obs_count, 1), np.nan)

    years_arr = np.asarray(years)
    any_slide = slide.any(axis=0)
    first_idx = slide.argmax(axis=0)
    first_occurrence = np.where(any_slide, years_arr[first_idx], np.nan)

    run = np.zeros(shape, dtype=np.int32)
    persistence = np.zeros(shape, dtype=np.int32)
    count = np.zeros(shape, dtype=np.int32)
    prev_state = np.zeros(shape, dtype=np.int8)  # last observed value, 0 before any
    first_obs_val = np.full(shape, UNOBSERVED, dtype=np.int8)
    for t in range(n_years):
        s = slide[t]
        o = observed[t]
        run = np.where(s, run + 1, 0)
        persistence = np.maximum(persistence, run)
        count += (s & (prev_state == NON_LANDSLIDE)).astype(np.int32)
        prev_state = np.where(o, cube[t], prev_state)
        unset = first_obs_val == UNOBSERVED
        first_obs_val = np.where(unset & o, cube[t], first_obs_val)

    left_censored = first_obs_val == LANDSLIDE
    return {
        "frequency": frequency,  # float64; rasterization quantizes later
        "first_occurrence": np.where(any_obs, first_occurrence, np.nan),
        "persistence": np.where(any_obs, persistence, np.nan),
        "reoccurrence": np.where(any_obs, count, np.nan),
        "left_censored": np.where(any_obs, left_censored, np.nan),
        "any_obs": any_obs,
    }


def pixel_metrics(series, years=None) -> PixelMetrics:
    """Metrics for one pixel series of {1, 0, None} observations."""
    obs = list(series)
    if not obs:
        raise InputError("empty pixel series")
    years = list(range(1, len(obs) + 1)) if years is None else list(years)
    cube = np.array(
        [[ [UNOBSERVED if v is None else int(v)] ] for v in obs], dtype=np.int8
    )
    planes = _metrics_cube(cube, years)
    if not planes["any_obs"][0, 0]:
        return PixelMetrics(None, None, None, None, False)
    first = planes["first_occurrence"][0, 0]
    return PixelMetrics(
        frequency=float(planes["frequency"][0, 0]),
        first_occurrence=None if np.isnan(first) else int(first),
        persistence=int(planes["persistence"][0, 0]),
        reoccurrence=int(planes["reoccurrence"][0, 0]),
        left_censored=bool(planes["left_censored"][0, 0]),
    )


def stack_metrics(stack: AnnualMapStack) -> MetricsRasters:
    """Per-pixel metric rasters; pixels observed in no year are nodata."""
    planes = _metrics_cube(stack.cube(), stack.years)
    hdr = stack.header
    return MetricsRasters(
        frequency=Raster(hdr, planes["frequency"].astype(np.float32)),
        first_occurrence=Raster(hdr, planes["first_occurrence"].astype(np.float32)),
        persistence=Raster(hdr, planes["persistence"].astype(np.float32)),
        reoccurrence=Raster(hdr, planes["reoccurrence"].astype(np.float32)),
        left_censored=Raster(hdr, planes["left_censored"].astype(np.float32)),
    )


def area_composition(stack: AnnualMapStack) -> list:
    """Old/new/revegetated areas per year from consecutive map pairs.

    Pixels unobserved in either year of a pair are excluded; the counted
    areas are scaled by the inverse of the year's observed fraction to
    compensate for missing coverage. A fully unobserved year yields NaN
    areas and valid_fraction 0.
    """
    if len(stack.years) < 2:
        raise InputError("area composition needs at least two years")
    cube = stack.cube()
    total = cube.shape[1] * cube.shape[2]
    km2 = stack.pixel_area / 1e6
    out = []
    for t in range(1, len(stack.years)):
        prev, cur = cube[t - 1], cube[t]
        both = (prev >= 0) & (cur >= 0)
        old = int(((prev == 1) & (cur == 1) & both).sum())
        new = int(((prev == 0) & (cur == 1) & both).sum())
        reveg = int(((prev == 1) & (cur == 0) & both).sum())
        valid_fraction = float((cur >= 0).sum() / total)
        if valid_fraction > 0:
            scale = km2 / valid_fraction
            areas = (old * scale, new * scale, reveg * scale)
        else:
            areas = (float("nan"),) * 3
        out.append(
            AreaComposition(
                year=int(stack.years[t]),
                old_km2=areas[0],
                new_km2=areas[1],
                revegetated_km2=areas[2],
                valid_fraction=valid_fraction,
            )
        )
    return out


def save_area_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "old_km2", "new_km2", "reveg_km2", "valid_fraction"])
        for r in rows:
            writer.writerow([r.year, repr(r.old_km2), repr(r.new_km2),
                             repr(r.revegetated_km2), repr(r.valid_fraction)])
