"""Seasonal mean composites, spectral indices, terrain slope and
model-variant feature stacks.

Layer vocabulary: six reflectance bands (blue, green, red, nir, swir1,
swir2) plus two indices computed per scene and then averaged across the
season: ndvi = (nir - red) / (nir + red) and ndwi = (green - swir1) /
(green + swir1). A feature stack is season-major (winter, spring, summer),
followed by slope and, when the variant asks for it, nighttime light.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigError, InputError
from .raster import DEFAULT_REJECT, GridHeader, MaskRaster, Raster, apply_qa_mask, ensure_aligned

BAND_NAMES = ("blue", "green", "red", "nir", "swir1", "swir2")
INDEX_NAMES = ("ndvi", "ndwi")
COMPOSITE_LAYERS = BAND_NAMES + INDEX_NAMES
SEASON_ORDER = ("winter", "spring", "summer")

REFLECTANCE_MIN = -0.2
REFLECTANCE_MAX = 1.6

# Denominator guard for normalized differences.
EPS_DENOMINATOR = 1e-9


@dataclass(frozen=True)
class SeasonDefinition:
    """A named set of months; December counts toward the following year."""

    name: str
    months: tuple[int, ...]

    def contains(self, date: dt.date, year: int) -> bool:
        if date.month == 12:
            return 12 in self.months and date.year == year - 1
        return date.month in self.months and date.year == year


WINTER = SeasonDefinition("winter", (12, 1, 2))
SPRING = SeasonDefinition("spring", (3, 4, 5))
SUMMER = SeasonDefinition("summer", (6, 7, 8))
SEASONS = {"winter": WINTER, "spring": SPRING, "summer": SUMMER}


@dataclass(frozen=True)
class DatedScene:
    """One acquisition: six reflectance bands plus a QA mask, all aligned."""

    acquisition_date: dt.date
    bands: dict
    qa: MaskRaster

    def __post_init__(self):
        missing = [b for b in BAND_NAMES if b not in self.bands]
        if missing:
            raise InputError(f"scene {self.acquisition_date} missing bands {missing}")
        ensure_aligned(*[self.bands[b] for b in BAND_NAMES], self.qa)
        for name in BAND_NAMES:
            v = self.bands[name].values
            finite = v[np.isfinite(v)]
            if finite.size and (finite.min() < REFLECTANCE_MIN or finite.max() > REFLECTANCE_MAX):
                raise InputError(
                    f"band {name} of scene {self.acquisition_date} outside "
                    f"[{REFLECTANCE_MIN}, {REFLECTANCE_MAX}]"
                )

    @property
    def header(self) -> GridHeader:
        return self.qa.header


@dataclass(frozen=True)
class ModelVariant:
    """Which seasons feed the classifier, and whether nighttime light does."""

    seasons: tuple[str, ...]
    use_ntl: bool = False

    def __post_init__(self):
        if not self.seasons:
            raise ConfigError("a model variant needs at least one season")
        unknown = [s for s in self.seasons if s not in SEASON_ORDER]
        if unknown:
            raise ConfigError(f"unknown seasons {unknown}")
        ordered = tuple(s for s in SEASON_ORDER if s in self.seasons)
        object.__setattr__(self, "seasons", ordered)

    @property
    def layer_names(self) -> tuple[str, ...]:
        names = [f"{season}_{layer}" for season in self.seasons for layer in COMPOSITE_LAYERS]
        names.append("slope")
        if self.use_ntl:
            names.append("ntl")
        return tuple(names)

    @property
    def n_layers(self) -> int:
        return len(self.layer_names)


WINTER_ONLY = ModelVariant(("winter",))
SPRING_ONLY = ModelVariant(("spring",))
SUMMER_ONLY = ModelVariant(("summer",))
MULTI_SEASON = ModelVariant(SEASON_ORDER)
MULTI_SEASON_NTL = ModelVariant(SEASON_ORDER, use_ntl=True)

VARIANTS = {
    "winter": WINTER_ONLY,
    "spring": SPRING_ONLY,
    "summer": SUMMER_ONLY,
    "multi": MULTI_SEASON,
    "multi_ntl": MULTI_SEASON_NTL,
}


@dataclass
class FeatureStack:
    """An ordered, aligned set of feature rasters for one year."""

    variant: ModelVariant
    year: int
    layers: list = field(default_factory=list)  # list of (name, Raster)

    def __post_init__(self):
        names = tuple(n for n, _ in self.layers)
        if names != self.variant.layer_names:
            raise ConfigError(
                f"layer order {names} does not match variant order {self.variant.layer_names}"
            )
        ensure_aligned(*[r for _, r in self.layers])

    @property
    def header(self) -> GridHeader:
        return self.layers[0][1].header

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.layers)

    def matrix(self) -> np.ndarray:
        """Feature values as a (height*width, n_layers) float64 matrix."""
        return np.column_stack(
            [r.values.ravel().astype(np.float64) for _, r in self.layers]
        )


def normalized_difference(a: Raster, b: Raster) -> Raster:
    """(a - b) / (a + b); nodata where a or b is, or where |a + b| vanishes."""
    ensure_aligned(a, b)
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    den = av + bv
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (av - bv) / den
    out[np.abs(den) < EPS_DENOMINATOR] = np.nan
    return Raster(a.header, out.astype(np.float32))


def seasonal_composite(scenes, season: SeasonDefinition, year: int,
                       reject=DEFAULT_REJECT) -> dict:
    """Per-pixel seasonal means of the six bands and two indices.

    Indices are computed per scene and then averaged. QA categories in
    ``reject`` are discarded before averaging; pixels with no clear
    observation are nodata. An empty scene list yields all-nodata layers
    only when a grid can be inferred, otherwise raises.
    """
    selected = [s for s in scenes if season.contains(s.acquisition_date, year)]
    if not selected:
        if not scenes:
            raise InputError(f"no scenes supplied for {season.name} {year}")
        header = scenes[0].header
        nodata = np.full(header.shape, np.nan, dtype=np.float32)
        return {name: Raster(header, nodata) for name in COMPOSITE_LAYERS}
    header = ensure_aligned(*[s.qa for s in selected])
    sums = {name: np.zeros(header.shape, dtype=np.float64) for name in COMPOSITE_LAYERS}
    counts = {name: np.zeros(header.shape, dtype=np.int32) for name in COMPOSITE_LAYERS}
    for scene in selected:
        if scene.header != header:
            raise AlignmentError(f"scene {scene.acquisition_date} not aligned with season grid")
        masked = {b: apply_qa_mask(scene.bands[b], scene.qa, reject) for b in BAND_NAMES}
        layers = dict(masked)
        layers["ndvi"] = normalized_difference(masked["nir"], masked["red"])
        layers["ndwi"] = normalized_difference(masked["green"], masked["swir1"])
        for name, rast in layers.items():
            good = np.isfinite(rast.values)
            sums[name][good] += rast.values[good]
            counts[name][good] += 1
    out = {}
    for name in COMPOSITE_LAYERS:
        with np.errstate(invalid="ignore"):
            mean = np.where(counts[name] > 0, sums[name] / np.maximum(counts[name], 1), np.nan)
        out[name] = Raster(header, mean.astype(np.float32))
    return out


def compute_slope(dem: Raster) -> Raster:
    """Slope in degrees from a 3x3 finite-difference gradient (Horn).

    Border pixels use edge replication; a nodata cell anywhere in the 3x3
    window makes the output nodata.
    """
    z = dem.values.astype(np.float64)
    px = dem.header.pixel_size
    zp = np.pad(z, 1, mode="edge")
    # 3x3 neighborhood views: n[dr][dc] is the window shifted by (dr-1, dc-1).
    n = [[zp[r : r + z.shape[0], c : c + z.shape[1]] for c in range(3)] for r in range(3)]
    gx = ((n[0][2] + 2 * n[1][2] + n[2][2]) - (n[0][0] + 2 * n[1][0] + n[2][0])) / (8 * px)
    gy = ((n[2][0] + 2 * n[2][1] + n[2][2]) - (n[0][0] + 2 * n[0][1] + n[0][2])) / (8 * px)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))
    window_nan = np.zeros(z.shape, dtype=bool)
    for r in range(3):
        for c in range(3):
            window_nan |= np.isnan(n[r][c])
    slope[window_nan] = np.nan
    return Raster(dem.header, slope.astype(np.float32))


def assemble_stack(composites: dict, slope: Raster, ntl, variant: ModelVariant,
                   year: int) -> FeatureStack:
    """Order composite, slope and nighttime-light layers for one variant.

    ``composites`` maps season name to the dict produced by
    seasonal_composite. ``ntl`` must be present exactly when the variant
    uses nighttime light.
    """
    if variant.use_ntl and ntl is None:
        raise ConfigError("variant uses nighttime light but none was supplied")
    if not variant.use_ntl and ntl is not None:
        raise ConfigError("nighttime light supplied to a variant that does not use it")
    layers = []
    for season in variant.seasons:
        if season not in composites:
            raise ConfigError(f"variant needs season {season!r} but no composite was supplied")
        season_layers = composites[season]
        for name in COMPOSITE_LAYERS:
            layers.append((f"{season}_{name}", season_layers[name]))
    layers.append(("slope", slope))
    if variant.use_ntl:
        layers.append(("ntl", ntl))
    return FeatureStack(variant=variant, year=year, layers=layers)
