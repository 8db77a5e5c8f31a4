"""Accuracy bookkeeping, replicated validation, class-ratio sweeps and
model-comparison significance tests.

Landslide is the positive class throughout. Validation replications use
the fixed 500/5500 allocation of landslide and non-landslide points per
6000-point sample; confidence intervals are normal-approximation
1.96 * sd / sqrt(replications).
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import AllocationError, InputError, ParameterError
from .forest import ForestParams, RandomForestModel, predict_matrix, train_forest
from .sampling import (
    LABEL_LANDSLIDE,
    SampleSet,
    TrainingMatrix,
    beta_allocate,
    extract_features,
)

Z_95 = 1.96


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise InputError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class AccuracyReport:
    oa: float
    ua: float
    pa: float
    oa_ci: float
    ua_ci: float
    pa_ci: float
    replications: int


@dataclass
class BetaSweepResult:
    grid: np.ndarray
    ua_mean: np.ndarray
    pa_mean: np.ndarray
    ua_ci: np.ndarray
    pa_ci: np.ndarray
    folds: int


@dataclass(frozen=True)
class ModelComparison:
    t_statistic: float
    p_value: float
    significant: bool
    alpha: float = 0.001


def confusion(pred, ref) -> ConfusionCounts:
    """Counts with landslide (1) as the positive class."""
    pred = np.asarray(pred)
    ref = np.asarray(ref)
    if pred.shape != ref.shape:
        raise InputError(f"length mismatch: {pred.shape} vs {ref.shape}")
    p = pred.astype(bool)
    r = ref.astype(bool)
    return ConfusionCounts(
        tp=int((p & r).sum()),
        tn=int((~p & ~r).sum()),
        fp=int((p & ~r).sum()),
        fn=int((~p & r).sum()),
    )


def accuracy_report(c: ConfusionCounts):
    """(overall, user's, producer's) accuracy; undefined ratios are None."""
    if c.total == 0:
        raise InputError("cannot compute accuracies of zero points")
    oa = (c.tp + c.tn) / c.total
    ua = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else None
    pa = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    return oa, ua, pa


def allocate_validation(pool: SampleSet, n_landslide: int = 500, n_non: int = 5500,
                        rng: np.random.Generator | None = None) -> SampleSet:
    """Draw exact per-class counts without replacement from the pool."""
    rng = rng or np.random.default_rng()
    landslide = pool.by_label(LABEL_LANDSLIDE)
    non = [p for p in pool.points if p.label != LABEL_LANDSLIDE]
    if len(landslide) < n_landslide:
        raise AllocationError(
            f"pool has {len(landslide)} landslide points, needs {n_landslide}",
            subclass="landslide",
        )
    if len(non) < n_non:
        raise AllocationError(f"pool has {len(non)} non-landslide points, needs {n_non}")
    chosen = []
    if n_landslide:
        idx = rng.choice(len(landslide), size=n_landslide, replace=False)
        chosen.extend(landslide[i] for i in sorted(idx.tolist()))
    if n_non:
        idx = rng.choice(len(non), size=n_non, replace=False)
        chosen.extend(non[i] for i in sorted(idx.tolist()))
    return SampleSet(chosen, pool.min_distance)


def _mean_ci(values) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(arr)
    if not ok.any():
        return float("nan"), float("nan")
    v = arr[ok]
    mean = float(v.mean())
    ci = float(Z_95 * v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return mean, ci


def pooled_features(pool: SampleSet, stacks_by_year: dict):
    """Extract features for every evaluable pool point.

    Returns (points kept in order, features, binary labels). Points whose
    year has no stack, that fall outside the grid or that hit nodata are
    silently excluded, mirroring the missing-value removal rule.
    """
    kept_points = []
    feats = []
    labels = []
    for year in pool.years():
        stack = stacks_by_year.get(year)
        if stack is None:
            continue
        pts = pool.by_year(year).points
        tm = extract_features(pts, stack)
        if tm.kept_indices is not None and len(tm.kept_indices):
            kept_points.extend(pts[i] for i in tm.kept_indices)
            feats.append(tm.features)
            labels.append(tm.labels)
    if not feats:
        return SampleSet([], pool.min_distance), np.empty((0, 0)), np.empty(0, np.int64)
    return (
        SampleSet(kept_points, pool.min_distance),
        np.vstack(feats),
        np.concatenate(labels),
    )


def _point_index(points) -> dict:
    return {(p.x, p.y, p.year): i for i, p in enumerate(points)}


def replicate_assessment(model: RandomForestModel, pool: SampleSet, stacks_by_year: dict,
                         reps: int = 100, rng: np.random.Generator | None = None,
                         n_landslide: int = 500, n_non: int = 5500) -> AccuracyReport:
    """Mean and 95% CI of OA/UA/PA over repeated validation allocations.

    Model predictions are computed once per distinct pool point; each
    replication draws a fresh allocation and re-scores it.
    """
    if reps < 2:
        raise InputError(f"need at least 2 replications, got {reps}")
    rng = rng or np.random.default_rng()
    evaluable, feats, labels = pooled_features(pool, stacks_by_year)
    if not evaluable.points:
        raise AllocationError("no evaluable points: every pool point lacks features")
    preds, _ = predict_matrix(model, feats)
    index = _point_index(evaluable.points)
    oas = np.empty(reps)
    uas = np.empty(reps)
    pas = np.empty(reps)
    for r in range(reps):
        chosen = allocate_validation(evaluable, n_landslide, n_non, rng)
        rows = np.fromiter(
            (index[(p.x, p.y, p.year)] for p in chosen.points), dtype=np.int64,
            count=len(chosen.points),
        )
        oa, ua, pa = accuracy_report(confusion(preds[rows], labels[rows]))
        oas[r] = oa
        uas[r] = np.nan if ua is None else ua
        pas[r] = np.nan if pa is None else pa
    oa_m, oa_c = _mean_ci(oas)
    ua_m, ua_c = _mean_ci(uas)
    pa_m, pa_c = _mean_ci(pas)
    return AccuracyReport(oa=oa_m, ua=ua_m, pa=pa_m, oa_ci=oa_c, ua_ci=ua_c,
                          pa_ci=pa_c, replications=reps)


def default_beta_grid() -> np.ndarray:
    """The 41-point ratio grid 1.0, 1.1, ..., 5.0."""
    return np.round(np.arange(10, 51) / 10.0, 1)


@dataclass
class _SweepContext:
    train_points: list
    train_feats: np.ndarray
    train_labels: np.ndarray
    train_min_distance: float
    eval_points: list
    eval_feats: np.ndarray
    eval_labels: np.ndarray
    eval_min_distance: float
    feature_names: tuple
    grid: np.ndarray
    total_train: int
    min_per_subclass: int
    n_eval_landslide: int
    n_eval_non: int
    params: ForestParams
    seed: int


_SWEEP_CTX = None


def _sweep_init(ctx):
    global _SWEEP_CTX
    _SWEEP_CTX = ctx


def _run_fold(ctx: _SweepContext, beta_index: int, fold: int) -> tuple:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=ctx.seed, spawn_key=(beta_index, fold))
    )
    beta = float(ctx.grid[beta_index])
    train_pool = SampleSet(ctx.train_points, ctx.train_min_distance)
    chosen = beta_allocate(train_pool, beta, ctx.total_train, ctx.min_per_subclass, rng)
    index = _point_index(ctx.train_points)
    rows = np.fromiter(
        (index[(p.x, p.y, p.year)] for p in chosen.points), dtype=np.int64,
        count=len(chosen.points),
    )
    tm = TrainingMatrix(ctx.train_feats[rows], ctx.train_labels[rows], ctx.feature_names)
    params = dataclasses.replace(ctx.params, seed=int(rng.integers(2**62)))
    model = train_forest(tm, params, workers=1)

    eval_pool = SampleSet(ctx.eval_points, ctx.eval_min_distance)
    val = allocate_validation(eval_pool, ctx.n_eval_landslide, ctx.n_eval_non, rng)
    eval_index = _point_index(ctx.eval_points)
    vrows = np.fromiter(
        (eval_index[(p.x, p.y, p.year)] for p in val.points), dtype=np.int64,
        count=len(val.points),
    )
    preds, _ = predict_matrix(model, ctx.eval_feats[vrows])
    _, ua, pa = accuracy_report(confusion(preds, ctx.eval_labels[vrows]))
    return (
        beta_index,
        fold,
        np.nan if ua is None else ua,
        np.nan if pa is None else pa,
    )


def _sweep_task(args):
    beta_index, fold = args
    return _run_fold(_SWEEP_CTX, beta_index, fold)


def beta_sweep(train_pool: SampleSet, eval_pool: SampleSet, stacks_by_year: dict,
               grid=None, folds: int = 50, total_train: int = 2000,
               eval_total: int = 6000, eval_n_landslide: int | None = None,
               eval_n_non: int | None = None, min_per_subclass: int = 100,
               params: ForestParams = ForestParams(), seed: int = 0,
               workers: int = 1) -> BetaSweepResult:
    """UA/PA means with CIs for each class ratio in the grid.

    Every (ratio, fold) pair trains a fresh forest on a beta-allocated
    subsample and scores it on a freshly allocated validation sample
    (by default the 500-in-6000 landslide share); the fold RNG stream is
    derived from (seed, ratio index, fold) so parallel execution reproduces
    the sequential result.
    """
    grid = default_beta_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or (np.diff(grid) <= 0).any():
        raise ParameterError("beta grid must be non-empty and strictly increasing")
    if grid[0] < 1.0 or grid[-1] > 5.0:
        raise ParameterError("beta grid must lie within [1, 5]")
    if folds < 1:
        raise ParameterError(f"folds must be >= 1, got {folds}")
    train_ev, train_feats, train_labels = pooled_features(train_pool, stacks_by_year)
    eval_ev, eval_feats, eval_labels = pooled_features(eval_pool, stacks_by_year)
    if not train_ev.points or not eval_ev.points:
        raise AllocationError("sweep pools have no evaluable points")
    n_eval_landslide = (int(round(eval_total / 12)) if eval_n_landslide is None
                        else eval_n_landslide)
    if eval_n_non is not None:
        eval_total = n_eval_landslide + eval_n_non
    ctx = _SweepContext(
        train_points=train_ev.points,
        train_feats=train_feats,
        train_labels=train_labels,
        train_min_distance=train_ev.min_distance,
        eval_points=eval_ev.points,
        eval_feats=eval_feats,
        eval_labels=eval_labels,
        eval_min_distance=eval_ev.min_distance,
        feature_names=tuple(next(iter(stacks_by_year.values())).layer_names),
        grid=grid,
        total_train=total_train,
        min_per_subclass=min_per_subclass,
        n_eval_landslide=n_eval_landslide,
        n_eval_non=eval_total - n_eval_landslide,
        params=params,
        seed=seed,
    )
    tasks = [(bi, fold) for bi in range(grid.size) for fold in range(folds)]
    ua = np.full((grid.size, folds), np.nan)
    pa = np.full((grid.size, folds), np.nan)
    if workers <= 1:
        for bi, fold in tasks:
            _, _, u, p = _run_fold(ctx, bi, fold)
            ua[bi, fold] = u
            pa[bi, fold] = p
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_sweep_init,
                                 initargs=(ctx,)) as pool:
            for bi, fold, u, p in pool.map(_sweep_task, tasks, chunksize=8):
                ua[bi, fold] = u
                pa[bi, fold] = p
    ua_stats = [_mean_ci(ua[bi]) for bi in range(grid.size)]
    pa_stats = [_mean_ci(pa[bi]) for bi in range(grid.size)]
    return BetaSweepResult(
        grid=grid,
        ua_mean=np.array([s[0] for s in ua_stats]),
        pa_mean=np.array([s[0] for s in pa_stats]),
        ua_ci=np.array([s[1] for s in ua_stats]),
        pa_ci=np.array([s[1] for s in pa_stats]),
        folds=folds,
    )


def find_optimal_beta(sweep: BetaSweepResult) -> float:
    """Grid ratio minimizing |UA - PA|; ties resolve to the smaller ratio."""
    if sweep.grid.size == 0:
        raise InputError("empty sweep")
    gap = np.abs(sweep.ua_mean - sweep.pa_mean)
    return float(sweep.grid[int(np.argmin(gap))])


def compare_models(acc_a, acc_b, alpha: float = 0.001,
                   two_sided: bool = False) -> ModelComparison:
    """Welch two-sample t-test of mean(acc_b) > mean(acc_a).

    One-sided by default, matching the direction "model b improves on
    model a"; `two_sided` switches the alternative.
    """
    a = np.asarray(acc_a, dtype=np.float64)
    b = np.asarray(acc_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InputError("each accuracy sample needs at least 2 values")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    se2 = va / a.size + vb / b.size
    if se2 == 0:
        if mb > ma:
            t_stat, p = float("inf"), 0.0
        elif mb < ma:
            t_stat, p = float("-inf"), 1.0
        else:
            t_stat, p = 0.0, 1.0
    else:
        t_stat = float((mb - ma) / math.sqrt(se2))
        df = se2**2 / (
            (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
        )
        if two_sided:
            p = float(2 * stats.t.sf(abs(t_stat), df))
        else:
            p = float(stats.t.sf(t_stat, df))
    return ModelComparison(t_statistic=t_stat, p_value=p, significant=p < alpha,
                           alpha=alpha)
