"""Batch pipeline: declarative run configuration, file-based stage handoff
and a manifest that records everything needed to re-execute a run.

Stage order for a full run: simulate (when the config describes a world),
composite, slope, calibrate-ntl, sample, sweep-beta, train, classify,
assess, metrics. Every stage reads its inputs from the output directory of
the preceding stages, so each is independently re-runnable from the CLI.

Truth rasters live under the world's `truth/` subtree and are only opened
by the sampling and assessment stages.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chronology import AnnualMapStack, area_composition, stack_metrics
from .errors import ConfigError, DataError, SlidemapError, StageError
from .evaluation import (
    beta_sweep,
    default_beta_grid,
    find_optimal_beta,
    pooled_features,
    replicate_assessment,
)
from .features import (
    BAND_NAMES,
    COMPOSITE_LAYERS,
    SEASONS,
    FeatureStack,
    ModelVariant,
    assemble_stack,
    compute_slope,
    seasonal_composite,
)
from .forest import ForestParams, classify_stack, load_model, save_model, train_forest
from .ntl import (
    DMSP_VIIRS_2013,
    apply_calibration,
    clamp_outliers,
    fit_calibration,
    load_calibration,
    save_calibration,
)
from .raster import Raster, read_grid, resample_nearest, write_grid
from .reports import emit_reports
from .sampling import (
    TrainingMatrix,
    beta_allocate,
    load_samples,
    merge_sets,
    morans_correlogram,
    sample_min_distance,
    save_samples,
    split_disjoint,
)
from .synthworld import WorldConfig, generate_world, load_world_inputs, load_world_truth, save_world

STAGES = ("simulate", "composite", "slope", "calibrate-ntl", "sample", "sweep-beta",
          "train", "classify", "assess", "metrics")


@dataclass
class RunConfig:
    seed: int
    output_dir: Path
    variant: ModelVariant
    training_years: list
    world: WorldConfig | None = None
    world_dir: Path | None = None
    beta_grid: np.ndarray = field(default_factory=default_beta_grid)
    beta_fixed: float | None = None
    folds: int = 50
    train_total: int = 2000
    min_per_subclass: int = 100
    min_distance: float = 0.0
    train_pool_per_year: int = 8000
    val_pool_per_year: int = 8000
    replications: int = 100
    n_val_landslide: int = 500
    n_val_non: int = 5500
    forest: ForestParams = field(default_factory=ForestParams)
    sweep_trees: int = 64  # smaller ensembles keep the 41x50 sweep tractable
    workers: int = 1

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"missing run configuration {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"unparseable run configuration {path}: {exc}") from exc
        if "seed" not in raw:
            raise ConfigError("run configuration must set an explicit seed")
        if "output_dir" not in raw:
            raise ConfigError("run configuration must set output_dir")
        variant_raw = raw.get("variant", {"seasons": ["winter", "spring", "summer"],
                                          "use_ntl": True})
        variant = ModelVariant(tuple(variant_raw["seasons"]),
                               bool(variant_raw.get("use_ntl", False)))
        world = None
        if "world" in raw:
            w = dict(raw["world"])
            w.setdefault("seed", raw["seed"])
            w["prevalence_spikes"] = tuple(tuple(x) for x in w.get("prevalence_spikes", ()))
            w["cloud_rate_by_year"] = tuple(tuple(x) for x in w.get("cloud_rate_by_year", ()))
            world = WorldConfig(**w)
        world_dir = raw.get("inputs", {}).get("world_dir")
        if world is None and world_dir is None:
            raise ConfigError("configuration needs a 'world' section or inputs.world_dir")
        beta = raw.get("beta", {})
        if "grid" in beta:
            grid = np.asarray(beta["grid"], dtype=np.float64)
        else:
            start = float(beta.get("start", 1.0))
            stop = float(beta.get("stop", 5.0))
            step = float(beta.get("step", 0.1))
            grid = np.round(np.arange(round(start * 10), round(stop * 10) + 1,
                                      round(step * 10)) / 10.0, 1)
        sampling = raw.get("sampling", {})
        evaluation = raw.get("evaluation", {})
        forest_raw = dict(raw.get("forest", {}))
        forest_raw.setdefault("seed", raw["seed"])
        training_years = [int(y) for y in raw.get("training_years", [])]
        if not training_years:
            raise ConfigError("configuration must list training_years")
        return cls(
            seed=int(raw["seed"]),
            output_dir=Path(raw["output_dir"]),
            variant=variant,
            training_years=training_years,
            world=world,
            world_dir=Path(world_dir) if world_dir else None,
            beta_grid=grid,
            beta_fixed=beta.get("fixed"),
            folds=int(beta.get("folds", 50)),
            train_total=int(raw.get("train_total", 2000)),
            min_per_subclass=int(raw.get("min_per_subclass", 100)),
            min_distance=float(sampling.get("min_distance", 0.0)),
            train_pool_per_year=int(sampling.get("train_pool_per_year", 8000)),
            val_pool_per_year=int(sampling.get("val_pool_per_year", 8000)),
            replications=int(evaluation.get("replications", 100)),
            n_val_landslide=int(evaluation.get("n_landslide", 500)),
            n_val_non=int(evaluation.get("n_non", 5500)),
            forest=ForestParams(**forest_raw),
            sweep_trees=int(beta.get("sweep_trees", 64)),
            workers=int(raw.get("workers", 1)),
        )

    def resolved_world_dir(self, out: Path) -> Path:
        return self.world_dir if self.world_dir is not None else out / "world"


def _rng(cfg: RunConfig, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=key))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_simulate(cfg: RunConfig, out: Path) -> dict:
    if cfg.world is None:
        raise ConfigError("no 'world' section in the configuration; nothing to simulate")
    world = generate_world(cfg.world)
    save_world(world, out / "world")
    return {"world_dir": str(out / "world"), "years": world.years}


def _world_inputs(cfg: RunConfig, out: Path):
    world_dir = cfg.resolved_world_dir(out)
    if not (world_dir / "manifest.json").exists():
        raise ConfigError(f"world directory {world_dir} is missing; run simulate first")
    return load_world_inputs(world_dir)


def stage_composite(cfg: RunConfig, out: Path) -> dict:
    _, _, scenes, _, _ = _world_inputs(cfg, out)
    comp_dir = out / "composites"
    comp_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for year, year_scenes in sorted(scenes.items()):
        for season_name in cfg.variant.seasons:
            comps = seasonal_composite(year_scenes, SEASONS[season_name], year)
            for layer_name, rast in comps.items():
                base = comp_dir / f"{year}_{season_name}_{layer_name}"
                files.append(str(write_grid(base, rast)))
    manifest = comp_dir / "stack_manifest.json"
    manifest.write_text(json.dumps(list(cfg.variant.layer_names), indent=2) + "\n")
    return {"files": files, "stack_manifest": str(manifest)}


def stage_slope(cfg: RunConfig, out: Path) -> dict:
    _, dem, _, _, _ = _world_inputs(cfg, out)
    slope = compute_slope(dem)
    (out / "slope").mkdir(parents=True, exist_ok=True)
    path = write_grid(out / "slope" / "slope", slope)
    return {"files": [str(path)]}


def stage_calibrate_ntl(cfg: RunConfig, out: Path) -> dict:
    config, dem, scenes, dmsp, viirs = _world_inputs(cfg, out)
    ntl_dir = out / "ntl"
    ntl_dir.mkdir(parents=True, exist_ok=True)
    grid = dem.header
    notes = {}
    overlap = [y for y in dmsp if y in viirs]
    if overlap:
        year = max(overlap)
        v30 = resample_nearest(viirs[year], grid)
        d30 = resample_nearest(dmsp[year], grid)
        cal = fit_calibration(v30, d30)
        notes["fit"] = {"overlap_year": year, "grid": "analysis grid "
                        f"{grid.pixel_size:g} m"}
    else:
        cal = DMSP_VIIRS_2013
        notes["fit"] = {"overlap_year": None,
                        "note": "no overlap year available; built-in coefficients"}
    save_calibration(cal, ntl_dir / "calibration.json")
    files = [str(ntl_dir / "calibration.json")]
    for year in sorted(set(dmsp) | set(viirs)):
        if year in viirs and year >= config.viirs_start_year:
            harmonized = resample_nearest(apply_calibration(viirs[year], cal), grid)
        else:
            harmonized = resample_nearest(
                clamp_outliers(dmsp[year], 0.0, 63.0), grid
            )
        files.append(str(write_grid(ntl_dir / f"ntl_{year}", harmonized)))
    return {"files": files, **notes}


def stage_sample(cfg: RunConfig, out: Path) -> dict:
    world_dir = cfg.resolved_world_dir(out)
    truth, landcover = load_world_truth(world_dir)
    sample_dir = out / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)

    train_parts = []
    for i, year in enumerate(cfg.training_years):
        if year not in landcover:
            raise ConfigError(f"training year {year} not present in the world")
        rng = _rng(cfg, 1, i)
        train_parts.append(sample_min_distance(landcover[year], cfg.train_pool_per_year,
                                               cfg.min_distance, rng, year=year))
    training = merge_sets(train_parts)

    val_parts = []
    for i, year in enumerate(truth.years):
        rng = _rng(cfg, 2, i)
        val_parts.append(sample_min_distance(landcover[year], cfg.val_pool_per_year,
                                             cfg.min_distance, rng, year=year))
    validation = split_disjoint(training, merge_sets(val_parts), cfg.min_distance)

    save_samples(training, sample_dir / "training.csv")
    save_samples(validation, sample_dir / "validation.csv")

    correlogram = morans_correlogram(truth.maps[0], max_lag=6)
    with (sample_dir / "morans.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "morans_i"])
        for lag, value in correlogram:
            writer.writerow([lag, repr(value)])
    return {
        "files": [str(sample_dir / n) for n in ("training.csv", "validation.csv",
                                                "morans.csv")],
        "training_points": len(training),
        "validation_points": len(validation),
        "training_year_split": "near-equal thirds across training years",
    }


def _load_stack(cfg: RunConfig, out: Path, year: int) -> FeatureStack:
    comp_dir = out / "composites"
    composites = {}
    for season in cfg.variant.seasons:
        layers = {}
        for layer_name in COMPOSITE_LAYERS:
            base = comp_dir / f"{year}_{season}_{layer_name}"
            layers[layer_name] = read_grid(base)
        composites[season] = layers
    slope = read_grid(out / "slope" / "slope")
    ntl = None
    if cfg.variant.use_ntl:
        ntl = read_grid(out / "ntl" / f"ntl_{year}")
    return assemble_stack(composites, slope, ntl, cfg.variant, year)


def _load_stacks(cfg: RunConfig, out: Path, years) -> dict:
    return {year: _load_stack(cfg, out, year) for year in years}


def _load_pools(cfg: RunConfig, out: Path):
    sample_dir = out / "samples"
    for name in ("training.csv", "validation.csv"):
        if not (sample_dir / name).exists():
            raise ConfigError(f"missing {sample_dir / name}; run the sample stage first")
    training = load_samples(sample_dir / "training.csv", cfg.min_distance)
    validation = load_samples(sample_dir / "validation.csv", cfg.min_distance)
    return training, validation


def stage_sweep_beta(cfg: RunConfig, out: Path) -> dict:
    sweep_dir = out / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    if cfg.beta_fixed is not None:
        payload = {"beta_n": float(cfg.beta_fixed), "source": "configuration override"}
        (sweep_dir / "optimal_beta.json").write_text(json.dumps(payload, indent=2) + "\n")
        return {"files": [str(sweep_dir / "optimal_beta.json")], **payload}
    training, validation = _load_pools(cfg, out)
    eval_pool = merge_sets([validation.by_year(y) for y in cfg.training_years])
    stacks = _load_stacks(cfg, out, cfg.training_years)
    sweep = beta_sweep(
        training, eval_pool, stacks,
        grid=cfg.beta_grid, folds=cfg.folds, total_train=cfg.train_total,
        eval_n_landslide=cfg.n_val_landslide, eval_n_non=cfg.n_val_non,
        min_per_subclass=cfg.min_per_subclass,
        params=dataclasses.replace(cfg.forest, n_trees=cfg.sweep_trees),
        seed=cfg.seed, workers=cfg.workers,
    )
    beta_n = find_optimal_beta(sweep)
    emit_reports({"sweep": sweep, "beta_n": beta_n}, sweep_dir)
    payload = {"beta_n": beta_n, "folds": sweep.folds, "source": "sweep"}
    (sweep_dir / "optimal_beta.json").write_text(json.dumps(payload, indent=2) + "\n")
    return {
        "files": [str(sweep_dir / n) for n in ("beta_sweep.csv", "beta_sweep.svg",
                                               "optimal_beta.json")],
        "beta_n": beta_n,
    }


def _beta_n(cfg: RunConfig, out: Path) -> float:
    if cfg.beta_fixed is not None:
        return float(cfg.beta_fixed)
    path = out / "sweep" / "optimal_beta.json"
    if not path.exists():
        raise ConfigError(f"missing {path}; run sweep-beta first or set beta.fixed")
    return float(json.loads(path.read_text())["beta_n"])


def stage_train(cfg: RunConfig, out: Path) -> dict:
    training, _ = _load_pools(cfg, out)
    stacks = _load_stacks(cfg, out, cfg.training_years)
    beta_n = _beta_n(cfg, out)
    evaluable, feats, labels = pooled_features(training, stacks)
    rng = _rng(cfg, 3)
    chosen = beta_allocate(evaluable, beta_n, cfg.train_total, cfg.min_per_subclass, rng)
    index = {(p.x, p.y, p.year): i for i, p in enumerate(evaluable.points)}
    rows = np.array([index[(p.x, p.y, p.year)] for p in chosen.points])
    tm = TrainingMatrix(feats[rows], labels[rows],
                        tuple(stacks[cfg.training_years[0]].layer_names))
    model = train_forest(tm, cfg.forest, workers=cfg.workers)
    model_dir = out / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, model_dir / "forest.bin")
    with (model_dir / "importance.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "importance"])
        for name, value in zip(model.feature_names, model.importance):
            writer.writerow([name, repr(float(value))])
    return {
        "files": [str(model_dir / "forest.bin"), str(model_dir / "importance.csv")],
        "beta_n": beta_n,
        "oob_accuracy": model.oob_accuracy,
    }


def stage_classify(cfg: RunConfig, out: Path) -> dict:
    world_dir = cfg.resolved_world_dir(out)
    manifest = json.loads((world_dir / "manifest.json").read_text())
    years = [int(y) for y in manifest["years"]]
    model = load_model(out / "model" / "forest.bin")
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for year in years:
        stack = _load_stack(cfg, out, year)
        label_map = classify_stack(model, stack, workers=cfg.workers)
        files.append(str(write_grid(maps_dir / f"landslide_{year}", label_map)))
    return {"files": files, "years": years}


def stage_assess(cfg: RunConfig, out: Path) -> dict:
    _, validation = _load_pools(cfg, out)
    model = load_model(out / "model" / "forest.bin")
    world_dir = cfg.resolved_world_dir(out)
    manifest = json.loads((world_dir / "manifest.json").read_text())
    years = [int(y) for y in manifest["years"]]
    assess_dir = out / "assess"
    assess_dir.mkdir(parents=True, exist_ok=True)
    annual = {}
    for i, year in enumerate(years):
        pool = validation.by_year(year)
        if not pool.points:
            continue
        stack = _load_stack(cfg, out, year)
        annual[year] = replicate_assessment(
            model, pool, {year: stack}, reps=cfg.replications,
            rng=_rng(cfg, 4, i), n_landslide=cfg.n_val_landslide,
            n_non=cfg.n_val_non,
        )
    emit_reports({"annual": annual}, assess_dir)
    files = []
    if annual:
        files = [str(assess_dir / "annual_accuracy.csv"),
                 str(assess_dir / "annual_accuracy.svg")]
    return {"files": files, "years_assessed": sorted(annual)}


def stage_metrics(cfg: RunConfig, out: Path) -> dict:
    maps_dir = out / "maps"
    world_dir = cfg.resolved_world_dir(out)
    manifest = json.loads((world_dir / "manifest.json").read_text())
    years = [int(y) for y in manifest["years"]]
    maps = []
    for year in years:
        base = maps_dir / f"landslide_{year}"
        if not (maps_dir / f"landslide_{year}.f32").exists():
            raise ConfigError(f"missing map {base}.f32; run classify first")
        maps.append(read_grid(base))
    stack = AnnualMapStack(years=years, maps=maps)
    metrics_dir = out / "metrics"
    metrics_dir.mkdir(parents=True, exist_ok=True)
    metrics = stack_metrics(stack)
    files = []
    for name in ("frequency", "first_occurrence", "persistence", "reoccurrence",
                 "left_censored"):
        files.append(str(write_grid(metrics_dir / name, getattr(metrics, name))))
    rows = area_composition(stack) if len(years) >= 2 else []
    if rows:
        emit_reports({"area": rows}, metrics_dir)
        files += [str(metrics_dir / "area_composition.csv"),
                  str(metrics_dir / "area_composition.svg")]
    return {"files": files}


_STAGE_FUNCS = {
    "simulate": stage_simulate,
    "composite": stage_composite,
    "slope": stage_slope,
    "calibrate-ntl": stage_calibrate_ntl,
    "sample": stage_sample,
    "sweep-beta": stage_sweep_beta,
    "train": stage_train,
    "classify": stage_classify,
    "assess": stage_assess,
    "metrics": stage_metrics,
}


def _relativize(obj, out: Path):
    """Rewrite absolute paths under `out` as relative strings, recursively."""
    prefix = str(out)
    if isinstance(obj, str) and obj.startswith(prefix):
        rel = obj[len(prefix):].lstrip("/")
        return rel or "."
    if isinstance(obj, list):
        return [_relativize(v, out) for v in obj]
    if isinstance(obj, dict):
        return {k: _relativize(v, out) for k, v in obj.items()}
    return obj


def run_stage(name: str, cfg: RunConfig, out: Path) -> dict:
    func = _STAGE_FUNCS.get(name)
    if func is None:
        raise ConfigError(f"unknown stage {name!r}; valid stages: {', '.join(STAGES)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _relativize(func(cfg, out), out)
    except SlidemapError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def run_pipeline(cfg: RunConfig, out: Path | None = None,
                 progress=None) -> Path:
    """Execute every stage in order and write the run manifest."""
    out = Path(out) if out is not None else Path(cfg.output_dir)
    stages = list(STAGES)
    if cfg.world is None:
        stages.remove("simulate")
    results = {}
    for name in stages:
        if progress is not None:
            progress(name)
        results[name] = run_stage(name, cfg, out)
    manifest = {
        "tool": {"name": "slidemap", "version": __version__},
        "seed": cfg.seed,
        "variant": {"seasons": list(cfg.variant.seasons), "use_ntl": cfg.variant.use_ntl},
        "training_years": cfg.training_years,
        "parameters": {
            "beta_grid": [float(b) for b in cfg.beta_grid],
            "beta_fixed": cfg.beta_fixed,
            "folds": cfg.folds,
            "train_total": cfg.train_total,
            "min_per_subclass": cfg.min_per_subclass,
            "min_distance": cfg.min_distance,
            "train_pool_per_year": cfg.train_pool_per_year,
            "val_pool_per_year": cfg.val_pool_per_year,
            "replications": cfg.replications,
            "validation_allocation": [cfg.n_val_landslide, cfg.n_val_non],
            "forest": dataclasses.asdict(cfg.forest),
            "workers": cfg.workers,
        },
        "notes": {
            "training_year_split": "near-equal thirds across training years",
            "model_comparison": "unpaired one-sided Welch t-test",
            "ntl_fit_grid": "both sensors resampled to the analysis grid",
        },
        "stages": results,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2)
                                       + "\n")
    return out
