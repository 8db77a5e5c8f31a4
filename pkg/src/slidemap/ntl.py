"""Harmonization of the two nighttime-light families onto one radiometric
scale.

The newer sensor's radiances are clamped to (0.2, 40), log-transformed and
stretched with a linear-log regression against the older sensor's 0-63
digital numbers; the fitted transform for the 2013 overlap year is
slope 26.139, intercept 23.179.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import FitError, ParameterError
from .raster import Raster, ensure_aligned

NTL_SCALE_MAX = 63.0  # top of the harmonized luminosity scale


@dataclass(frozen=True)
class NtlCalibration:
    slope: float
    intercept: float
    clamp_low: float = 0.2
    clamp_high: float = 40.0
    correlation: float = float("nan")

    def __post_init__(self):
        if not self.clamp_low < self.clamp_high:
            raise ParameterError(
                f"clamp_low {self.clamp_low} must be below clamp_high {self.clamp_high}"
            )
        if not np.isfinite(self.slope):
            raise ParameterError("calibration slope must be finite")


# Coefficients of the 2013 overlap-year regression between the two sensor
# families, used as a regression-test fixture and as a fallback transform.
DMSP_VIIRS_2013 = NtlCalibration(slope=26.139, intercept=23.179, correlation=0.94)


def clamp_outliers(v: Raster, low: float, high: float) -> Raster:
    """Clamp values into [low, high]; nodata passes through."""
    if not low < high:
        raise ParameterError(f"low {low} must be below high {high}")
    return Raster(v.header, np.clip(v.values, low, high))


def _pair_values(grid) -> np.ndarray:
    if isinstance(grid, Raster):
        return grid.values.astype(np.float64).ravel()
    return np.asarray(grid, dtype=np.float64).ravel()


def fit_calibration(viirs, dmsp, clamp_low: float = 0.2,
                    clamp_high: float = 40.0) -> NtlCalibration:
    """Least-squares fit of dmsp ~ slope*log10(clamped viirs) + intercept.

    Accepts aligned rasters or plain arrays of pixel pairs. Uses pairs
    where both sides are valid and viirs is positive; correlation is the
    Pearson r between log10(clamped viirs) and dmsp.
    """
    if isinstance(viirs, Raster) and isinstance(dmsp, Raster):
        ensure_aligned(viirs, dmsp)
    v = _pair_values(viirs)
    d = _pair_values(dmsp)
    if v.size != d.size:
        raise FitError(f"pair length mismatch: {v.size} vs {d.size}")
    good = np.isfinite(v) & np.isfinite(d) & (v > 0)
    if good.sum() < 3:
        raise FitError(f"need at least 3 valid pixel pairs, got {int(good.sum())}")
    x = np.log10(np.clip(v[good], clamp_low, clamp_high))
    y = d[good]
    if np.all(x == x[0]):
        raise FitError("zero variance in log-transformed predictor")
    x0 = x - x.mean()
    y0 = y - y.mean()
    sxx = float((x0 * x0).sum())
    syy = float((y0 * y0).sum())
    sxy = float((x0 * y0).sum())
    if sxx <= 0:
        raise FitError("zero variance in log-transformed predictor")
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    correlation = sxy / np.sqrt(sxx * syy) if syy > 0 else 0.0
    return NtlCalibration(
        slope=float(slope),
        intercept=intercept,
        clamp_low=clamp_low,
        clamp_high=clamp_high,
        correlation=float(correlation),
    )


def apply_calibration(viirs: Raster, cal: NtlCalibration) -> Raster:
    """Stretch clamped radiances onto the 0-63 scale; nodata passes through."""
    v = np.clip(viirs.values.astype(np.float64), cal.clamp_low, cal.clamp_high)
    with np.errstate(invalid="ignore"):
        out = cal.slope * np.log10(v) + cal.intercept
    out = np.clip(out, 0.0, NTL_SCALE_MAX)
    return Raster(viirs.header, out.astype(np.float32))


def save_calibration(cal: NtlCalibration, path) -> None:
    payload = asdict(cal)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_calibration(path) -> NtlCalibration:
    data = json.loads(Path(path).read_text())
    return NtlCalibration(**data)
