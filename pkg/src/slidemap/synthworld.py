"""Deterministic synthetic-world generator for desk-scale validation.

A world consists of fractal terrain, a static land-cover layout (towns,
roads, agriculture, forest, barren patches, water), a seeded
birth/survival/revegetation landslide process restricted to steep slopes,
per-season optical scenes drawn from class-conditional spectra, and two
generations of nighttime-light grids at their native coarse resolutions.

Design contrasts baked in:

* built-up surfaces share the bare-soil spectrum of landslides to a degree
  set by `confusability` (1 = indistinguishable by day) but carry high
  nighttime light, while landslides stay dark at night;
* vegetation swings seasonally (`seasonal_swing`): agriculture looks green
  in summer and increasingly bare in winter, so single-winter models face
  extra confusion that multi-season models can resolve;
* the newer nighttime sensor is synthesized by inverting the published
  log-linear stretch on the older sensor's field, so the calibration fit
  has a recoverable ground truth.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .chronology import AnnualMapStack
from .errors import ConfigError, FormatError
from .features import BAND_NAMES, DatedScene, compute_slope
from .ntl import DMSP_VIIRS_2013
from .raster import GridHeader, MaskRaster, Raster, write_grid, read_grid
from .sampling import SUBCLASSES

# Land-cover codes double as raster values (see sampling.SUBCLASSES).
LANDSLIDE, BUILDING, ROAD, AGRICULTURE, FOREST, BARREN, WATER = range(7)

# Background / road / town luminosities on the 0-63 night-light scale.
NTL_BACKGROUND = 6.0
NTL_ROAD = 25.0
NTL_TOWN = 55.0

# Reflectance endpoints of the soil-vegetation continuum, band order
# blue, green, red, nir, swir1, swir2. Each pixel carries a static
# greenness in [0, 1] mixing the two; seasons rescale greenness.
_SOIL = np.array([0.09, 0.13, 0.17, 0.25, 0.30, 0.25])
_VEG = np.array([0.03, 0.06, 0.05, 0.47, 0.12, 0.06])
_ROAD_SPECTRUM = np.array([0.06, 0.07, 0.08, 0.10, 0.12, 0.11])
_WATER_SPECTRUM = np.array([0.06, 0.05, 0.04, 0.02, 0.01, 0.01])
# Built surfaces sit at the bare end of the continuum; this offset pulls
# them away from landslide soil as confusability drops toward zero. The
# quadratic fade makes mid-range confusability genuinely ambiguous for the
# classifier instead of merely shrinking a still-separable margin.
_BUILDING_OFFSET = np.array([0.05, 0.03, -0.03, -0.06, -0.08, -0.05])


def _building_offset_scale(confusability: float) -> float:
    return (1.0 - confusability) ** 3

# Seasonal greenness multipliers per (class, season); `swing` scales the
# winter/spring dips. Agriculture goes nearly bare in winter, mountain
# forest only partly so.
_SEASON_DIP = {
    FOREST: {"winter": 0.28, "spring": 0.10, "summer": 0.0},
    AGRICULTURE: {"winter": 0.85, "spring": 0.35, "summer": 0.0},
}

_SCENE_DAYS = {
    "winter": ((12, 20), (2, 5), (1, 15), (2, 20)),
    "spring": ((4, 5), (5, 10), (3, 15), (5, 25)),
    "summer": ((7, 5), (8, 10), (6, 15), (8, 25)),
}


@dataclass(frozen=True)
class WorldConfig:
    width: int = 256
    height: int = 256
    pixel_size: float = 30.0
    years: int = 20
    start_year: int = 1998
    landslide_prevalence: float = 0.10
    builtup_prevalence: float = 0.08
    cloud_rate: float = 0.15
    gap_rate: float = 0.05
    confusability: float = 0.5
    seasonal_swing: float = 1.0
    slope_threshold: float = 15.0
    scenes_per_season: int = 2
    spectral_noise: float = 0.02
    viirs_start_year: int = 2014
    # Night-light grids stay meaningful at desk scale when their pixel size
    # is proportionate to the world; the 2:1 old/new-sensor ratio is kept.
    # Set 900/450 on large worlds to mirror the real sensors' footprints.
    ntl_coarse_pixel_size: float = 240.0
    ntl_fine_pixel_size: float = 120.0
    prevalence_spikes: tuple = ()        # ((year, birth multiplier), ...)
    cloud_rate_by_year: tuple = ()       # ((year, rate), ...)
    seed: int = 0

    def __post_init__(self):
        if self.width * self.height < 64:
            raise ConfigError("world must contain at least 64 pixels")
        for name in ("landslide_prevalence", "builtup_prevalence", "cloud_rate",
                     "gap_rate", "confusability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.scenes_per_season < 1 or self.scenes_per_season > 4:
            raise ConfigError("scenes_per_season must be between 1 and 4")
        if self.years < 1:
            raise ConfigError("need at least one year")
        object.__setattr__(self, "prevalence_spikes",
                           tuple((int(y), float(m)) for y, m in self.prevalence_spikes))
        object.__setattr__(self, "cloud_rate_by_year",
                           tuple((int(y), float(r)) for y, r in self.cloud_rate_by_year))

    @property
    def year_list(self) -> list:
        return list(range(self.start_year, self.start_year + self.years))

    def header(self) -> GridHeader:
        return GridHeader(
            width=self.width,
            height=self.height,
            origin_x=0.0,
            origin_y=self.height * self.pixel_size,
            pixel_size=self.pixel_size,
            crs_label="synth",
        )

    def cloud_rate_for(self, year: int) -> float:
        return dict(self.cloud_rate_by_year).get(year, self.cloud_rate)


@dataclass
class SyntheticWorld:
    config: WorldConfig
    dem: Raster
    truth: AnnualMapStack
    landcover: dict          # year -> Raster of subclass codes
    scenes: dict             # year -> list of DatedScene
    ntl_dmsp: dict           # year -> coarse Raster (900 m class)
    ntl_viirs: dict          # year -> finer Raster (450 m class)

    @property
    def years(self) -> list:
        return list(self.truth.years)


def _stream(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _smooth_noise(rng, shape, sigma) -> np.ndarray:
    f = gaussian_filter(rng.normal(size=shape), sigma, mode="wrap")
    sd = f.std()
    return f / sd if sd > 0 else f


def _fractal_dem(config: WorldConfig) -> Raster:
    """Mountain ranges rising out of plains, with multi-octave roughness."""
    rng = _stream(config.seed, 0)
    shape = (config.height, config.width)
    region = _smooth_noise(rng, shape, max(shape) / 4.5)
    # 0 on plains, ramping to 1 inside mountain ranges; the wide ramp keeps
    # a substantial belt of moderate foothill slopes.
    mountain = np.clip((region - np.quantile(region, 0.40)) / 1.6, 0.0, 1.0)
    rough = np.zeros(shape)
    for sigma, amp in ((12.0, 1.0), (5.0, 0.5), (2.0, 0.22)):
        rough += amp * _smooth_noise(rng, shape, sigma)
    rough -= rough.min()
    relief = 16.0 * config.pixel_size
    plain = 1.5 * _smooth_noise(rng, shape, 20.0)
    z = mountain * rough * relief + plain * config.pixel_size * 0.04
    z -= z.min()
    return Raster(config.header(), z.astype(np.float32))


def _threshold_mask(score: np.ndarray, eligible: np.ndarray, count: int) -> np.ndarray:
    """Top `count` eligible cells by score, as a boolean mask."""
    out = np.zeros(score.shape, dtype=bool)
    if count <= 0:
        return out
    idx = np.flatnonzero(eligible.ravel())
    if idx.size == 0:
        return out
    count = min(count, idx.size)
    ranked = idx[np.argsort(score.ravel()[idx], kind="stable")[::-1][:count]]
    out.ravel()[ranked] = True
    return out


def _static_landcover(config: WorldConfig, slope: np.ndarray):
    rng = _stream(config.seed, 1)
    shape = (config.height, config.width)
    total = config.height * config.width

    codes = np.full(shape, FOREST, dtype=np.float32)

    water = _threshold_mask(-slope + _smooth_noise(rng, shape, 8.0) * 2.0,
                            slope < 8.0, int(0.03 * total))
    codes[water] = WATER

    # Towns are clumped so coarse night-light blocks stay bright; a share
    # sits on moderate slopes where night light is the only separator from
    # landslides.
    town_score = _smooth_noise(rng, shape, 10.0) + 0.3 * _smooth_noise(rng, shape, 3.0)
    gentle = (slope < 12.0) & ~water
    moderate = (slope >= 12.0) & (slope <= config.slope_threshold + 15.0) & ~water
    n_town = int(config.builtup_prevalence * total)
    towns = _threshold_mask(town_score, gentle, int(n_town * 0.5))
    towns |= _threshold_mask(town_score, moderate & ~towns, n_town - int(towns.sum()))
    codes[towns] = BUILDING

    roads = np.zeros(shape, dtype=bool)
    rr, cc = np.meshgrid(np.arange(config.height), np.arange(config.width), indexing="ij")
    spacing = max(24, config.width // 6)
    phase = int(rng.integers(spacing))
    roads |= (cc % spacing == phase)
    roads |= (rr % spacing == (phase * 2) % spacing)
    roads &= (slope <= 25.0) & ~water
    roads &= ~towns
    codes[roads] = ROAD

    ag = _threshold_mask(_smooth_noise(rng, shape, 6.0),
                         (slope < 12.0) & ~water & ~towns & ~roads,
                         int(0.16 * total))
    codes[ag] = AGRICULTURE

    barren = _threshold_mask(_smooth_noise(rng, shape, 4.0),
                             (slope < config.slope_threshold) & (codes == FOREST),
                             int(0.05 * total))
    codes[barren] = BARREN
    return codes


def _landslide_states(config: WorldConfig, slope: np.ndarray,
                      static_codes: np.ndarray) -> list:
    """Yearly landslide masks from a birth/survival process on steep land."""
    rng = _stream(config.seed, 2)
    shape = (config.height, config.width)
    total = config.height * config.width
    protected = np.isin(static_codes, (BUILDING, ROAD, WATER))
    eligible = (slope > config.slope_threshold) & ~protected
    n_eligible = int(eligible.sum())
    if n_eligible == 0:
        return [np.zeros(shape, dtype=bool) for _ in config.year_list]
    occupancy = min(0.9, config.landslide_prevalence * total / n_eligible)
    survival = 0.65
    birth = occupancy * (1.0 - survival) / max(1e-9, 1.0 - occupancy)
    spikes = dict(config.prevalence_spikes)

    state = _threshold_mask(_smooth_noise(rng, shape, 2.0), eligible,
                            int(round(occupancy * n_eligible)))
    states = [state]
    for year in config.year_list[1:]:
        b = min(0.95, birth * spikes.get(year, 1.0))
        candidates = eligible & ~state
        n_births = int(round(b * candidates.sum()))
        births = _threshold_mask(_smooth_noise(rng, shape, 2.0), candidates, n_births)
        survives = rng.random(shape) < survival
        state = (state & survives) | births
        states.append(state)
    return states


def _greenness_fields(config: WorldConfig) -> dict:
    """Static per-pixel greenness for the continuum classes."""
    rng = _stream(config.seed, 7)
    shape = (config.height, config.width)
    veg = np.clip(0.82 + 0.10 * _smooth_noise(rng, shape, 3.0), 0.60, 1.0)
    ag = np.clip(0.88 + 0.08 * _smooth_noise(rng, shape, 3.0), 0.60, 1.0)
    bare = np.clip(0.15 + 0.12 * _smooth_noise(rng, shape, 2.0), 0.0, 0.40)
    barren = np.clip(0.20 + 0.10 * _smooth_noise(rng, shape, 2.0), 0.0, 0.45)
    # Building greenness mirrors the landslide bareness distribution so the
    # two classes only differ by the confusability offset and night light.
    building_g = np.clip(0.15 + 0.12 * _smooth_noise(rng, shape, 2.0), 0.0, 0.40)
    # Per-pixel amplitude jitter of the building offset keeps the
    # built-up/landslide boundary soft instead of a hard spectral wall.
    building = np.clip(1.0 + 0.25 * _smooth_noise(rng, shape, 2.0), 0.55, 1.5)
    return {"veg": veg, "ag": ag, "bare": bare, "barren": barren,
            "building": building, "building_g": building_g}


def _season_greenness(codes: np.ndarray, fields: dict, season: str,
                      config: WorldConfig) -> np.ndarray:
    """Per-pixel greenness for one season given the year's land cover."""
    swing = config.seasonal_swing
    g = np.zeros(codes.shape)
    forest = codes == FOREST
    ag = codes == AGRICULTURE
    g[forest] = fields["veg"][forest] * (1.0 - _SEASON_DIP[FOREST][season] * swing)
    g[ag] = fields["ag"][ag] * (1.0 - _SEASON_DIP[AGRICULTURE][season] * swing)
    g[codes == LANDSLIDE] = fields["bare"][codes == LANDSLIDE]
    g[codes == BARREN] = fields["barren"][codes == BARREN]
    g[codes == BUILDING] = fields["building_g"][codes == BUILDING]
    return g


def _scene_dates(year: int, season: str, k: int) -> list:
    dates = []
    for month, day in _SCENE_DAYS[season][:k]:
        y = year - 1 if month == 12 else year
        dates.append(dt.date(y, month, day))
    return dates


def _qa_mask(config: WorldConfig, rng, header: GridHeader, cloud_rate: float,
             gap_rate: float) -> np.ndarray:
    shape = header.shape
    qa = np.zeros(shape, dtype=np.uint8)
    if gap_rate > 0:
        period = 40
        width = int(round(gap_rate * period))
        if width > 0:
            rr, cc = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
            offset = int(rng.integers(period))
            qa[((cc - rr + offset) % period) < width] = 3
    if cloud_rate > 0:
        if cloud_rate >= 1.0:
            qa[:] = 2
        else:
            blob = _smooth_noise(rng, shape, 5.0)
            hi = np.quantile(blob, 1.0 - cloud_rate * 0.8)
            mid = np.quantile(blob, 1.0 - cloud_rate)
            cloud_hi = blob >= hi
            cloud_mid = (blob >= mid) & ~cloud_hi
            qa[cloud_mid] = 1
            qa[cloud_hi] = 2
    return qa


def _year_scenes(config: WorldConfig, year_index: int, codes: np.ndarray,
                 fields: dict, texture: np.ndarray) -> list:
    header = config.header()
    year = config.year_list[year_index]
    rng = _stream(config.seed, 3, year_index)
    cloud_rate = config.cloud_rate_for(year)
    road = codes == ROAD
    water = codes == WATER
    building = codes == BUILDING
    offset_amp = building * fields["building"] * _building_offset_scale(config.confusability)
    scenes = []
    for season in ("winter", "spring", "summer"):
        g = _season_greenness(codes, fields, season, config)
        for date in _scene_dates(year, season, config.scenes_per_season):
            bands = {}
            for bi, name in enumerate(BAND_NAMES):
                mean = g * _VEG[bi] + (1.0 - g) * _SOIL[bi]
                mean[road] = _ROAD_SPECTRUM[bi]
                mean[water] = _WATER_SPECTRUM[bi]
                mean = mean + offset_amp * _BUILDING_OFFSET[bi]
                vals = mean + texture[bi] + rng.normal(0.0, config.spectral_noise,
                                                       header.shape)
                bands[name] = Raster(header, np.clip(vals, -0.2, 1.6).astype(np.float32))
            qa = MaskRaster(header, _qa_mask(config, rng, header, cloud_rate,
                                             config.gap_rate))
            scenes.append(DatedScene(acquisition_date=date, bands=bands, qa=qa))
    return scenes


def _coarse_header(fine: GridHeader, pixel_size: float) -> GridHeader:
    return GridHeader(
        width=math.ceil(fine.width * fine.pixel_size / pixel_size),
        height=math.ceil(fine.height * fine.pixel_size / pixel_size),
        origin_x=fine.origin_x,
        origin_y=fine.origin_y,
        pixel_size=pixel_size,
        crs_label=fine.crs_label,
    )


def _block_mean(values: np.ndarray, fine: GridHeader, coarse: GridHeader) -> np.ndarray:
    step = int(round(coarse.pixel_size / fine.pixel_size))
    out = np.empty(coarse.shape)
    for r in range(coarse.height):
        for c in range(coarse.width):
            block = values[r * step : (r + 1) * step, c * step : (c + 1) * step]
            out[r, c] = block.mean() if block.size else NTL_BACKGROUND
    return out


def _night_lights(config: WorldConfig, codes: np.ndarray):
    """Per-year coarse grids for the two sensor families."""
    header = config.header()
    lum = np.full(header.shape, NTL_BACKGROUND)
    lum[codes == ROAD] = NTL_ROAD
    lum[codes == BUILDING] = NTL_TOWN
    lum = np.clip(gaussian_filter(lum, 2.0), 0.0, 63.0)

    dmsp_hdr = _coarse_header(header, config.ntl_coarse_pixel_size)
    viirs_hdr = _coarse_header(header, config.ntl_fine_pixel_size)
    d_base = _block_mean(lum, header, dmsp_hdr)
    v_base = _block_mean(lum, header, viirs_hdr)

    dmsp = {}
    viirs = {}
    overlap_year = config.viirs_start_year - 1
    for yi, year in enumerate(config.year_list):
        rng = _stream(config.seed, 4, yi)
        if year < config.viirs_start_year:
            vals = np.clip(d_base + rng.normal(0.0, 0.8, dmsp_hdr.shape), 0.0, 63.0)
            dmsp[year] = Raster(dmsp_hdr, vals.astype(np.float32))
        if year >= overlap_year:
            radiance = 10.0 ** ((v_base - DMSP_VIIRS_2013.intercept)
                                / DMSP_VIIRS_2013.slope)
            radiance = radiance * np.exp(rng.normal(0.0, 0.05, viirs_hdr.shape))
            viirs[year] = Raster(viirs_hdr, np.clip(radiance, 0.01, 80.0)
                                 .astype(np.float32))
    return dmsp, viirs


def generate_world(config: WorldConfig) -> SyntheticWorld:
    """Build a complete world; identical config and seed give identical bits."""
    dem = _fractal_dem(config)
    slope = compute_slope(dem).values.astype(np.float64)
    static_codes = _static_landcover(config, slope)
    states = _landslide_states(config, slope, static_codes)

    header = config.header()
    texture_rng = _stream(config.seed, 5)
    texture = np.stack([
        0.008 * _smooth_noise(texture_rng, header.shape, 2.0) for _ in BAND_NAMES
    ])
    fields = _greenness_fields(config)

    landcover = {}
    truth_maps = []
    scenes = {}
    for yi, year in enumerate(config.year_list):
        codes = static_codes.copy()
        codes[states[yi]] = LANDSLIDE
        landcover[year] = Raster(header, codes)
        truth_maps.append(Raster(header, states[yi].astype(np.float32)))
        scenes[year] = _year_scenes(config, yi, codes, fields, texture)

    ntl_dmsp, ntl_viirs = _night_lights(config, static_codes)
    truth = AnnualMapStack(years=config.year_list, maps=truth_maps)
    return SyntheticWorld(
        config=config,
        dem=dem,
        truth=truth,
        landcover=landcover,
        scenes=scenes,
        ntl_dmsp=ntl_dmsp,
        ntl_viirs=ntl_viirs,
    )


def degrade(world: SyntheticWorld, cloud_rate: float, gap_rate: float,
            seed: int) -> SyntheticWorld:
    """Overlay extra seeded cloud blobs and gap stripes on every scene's QA.

    Truth, land cover and radiometry are untouched; rates of zero return an
    identical world.
    """
    if not (0.0 <= cloud_rate <= 1.0 and 0.0 <= gap_rate <= 1.0):
        raise ConfigError("degradation rates must lie in [0, 1]")
    config = world.config
    new_scenes = {}
    for yi, year in enumerate(world.years):
        out = []
        for si, scene in enumerate(world.scenes[year]):
            if cloud_rate == 0.0 and gap_rate == 0.0:
                out.append(scene)
                continue
            rng = _stream(seed, 6, yi, si)
            extra = _qa_mask(config, rng, scene.header, cloud_rate, gap_rate)
            merged = scene.qa.categories.copy()
            take = extra > 0
            merged[take] = extra[take]
            out.append(DatedScene(scene.acquisition_date, scene.bands,
                                  MaskRaster(scene.header, merged)))
        new_scenes[year] = out
    return SyntheticWorld(
        config=config,
        dem=world.dem,
        truth=world.truth,
        landcover=world.landcover,
        scenes=new_scenes,
        ntl_dmsp=world.ntl_dmsp,
        ntl_viirs=world.ntl_viirs,
    )


# ---------------------------------------------------------------------------
# Persistence: observable inputs and truth live in separate subtrees.
# ---------------------------------------------------------------------------


def save_world(world: SyntheticWorld, directory) -> Path:
    root = Path(directory)
    (root / "inputs" / "scenes").mkdir(parents=True, exist_ok=True)
    (root / "inputs" / "ntl").mkdir(parents=True, exist_ok=True)
    (root / "truth").mkdir(parents=True, exist_ok=True)

    write_grid(root / "inputs" / "dem", world.dem)
    scene_index = {}
    for year, scenes in world.scenes.items():
        entries = []
        for si, scene in enumerate(scenes):
            stem = f"{year}_{si:02d}"
            for band in BAND_NAMES:
                write_grid(root / "inputs" / "scenes" / f"{stem}_{band}",
                           scene.bands[band])
            write_grid(root / "inputs" / "scenes" / f"{stem}_qa", scene.qa)
            entries.append({"stem": stem, "date": scene.acquisition_date.isoformat()})
        scene_index[str(year)] = entries
    for year, rast in world.ntl_dmsp.items():
        write_grid(root / "inputs" / "ntl" / f"dmsp_{year}", rast)
    for year, rast in world.ntl_viirs.items():
        write_grid(root / "inputs" / "ntl" / f"viirs_{year}", rast)
    for year, rast in world.landcover.items():
        write_grid(root / "truth" / f"landcover_{year}", rast)
    for year, rast in zip(world.truth.years, world.truth.maps):
        write_grid(root / "truth" / f"landslide_{year}", rast)

    manifest = {
        "config": asdict(world.config),
        "years": world.years,
        "scenes": scene_index,
        "ntl_dmsp_years": sorted(world.ntl_dmsp),
        "ntl_viirs_years": sorted(world.ntl_viirs),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2)
                                        + "\n")
    return root


def _load_config(manifest: dict) -> WorldConfig:
    cfg = dict(manifest["config"])
    cfg["prevalence_spikes"] = tuple(tuple(x) for x in cfg.get("prevalence_spikes", ()))
    cfg["cloud_rate_by_year"] = tuple(tuple(x) for x in cfg.get("cloud_rate_by_year", ()))
    return WorldConfig(**cfg)


def load_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise FormatError(f"missing world manifest {path}")
    return json.loads(path.read_text())


def load_world_inputs(directory):
    """Observable inputs only: (config, dem, scenes by year, dmsp, viirs)."""
    root = Path(directory)
    manifest = load_manifest(root)
    config = _load_config(manifest)
    dem = read_grid(root / "inputs" / "dem")
    scenes = {}
    for year_key, entries in manifest["scenes"].items():
        year = int(year_key)
        out = []
        for entry in entries:
            stem = entry["stem"]
            bands = {
                band: read_grid(root / "inputs" / "scenes" / f"{stem}_{band}")
                for band in BAND_NAMES
            }
            qa = read_grid(root / "inputs" / "scenes" / f"{stem}_qa")
            out.append(DatedScene(dt.date.fromisoformat(entry["date"]), bands, qa))
        scenes[year] = out
    dmsp = {
        year: read_grid(root / "inputs" / "ntl" / f"dmsp_{year}")
        for year in manifest["ntl_dmsp_years"]
    }
    viirs = {
        year: read_grid(root / "inputs" / "ntl" / f"viirs_{year}")
        for year in manifest["ntl_viirs_years"]
    }
    return config, dem, scenes, dmsp, viirs


def load_world_truth(directory):
    """Reference data only: (truth stack, landcover rasters by year)."""
    root = Path(directory)
    manifest = load_manifest(root)
    years = [int(y) for y in manifest["years"]]
    maps = [read_grid(root / "truth" / f"landslide_{y}") for y in years]
    landcover = {y: read_grid(root / "truth" / f"landcover_{y}") for y in years}
    return AnnualMapStack(years=years, maps=maps), landcover
