"""CSV reports and SVG charts for sweep, assessment and area results.

Charts are rendered with matplotlib to SVG with text kept as text and a
fixed hash salt, so outputs are stable across identical runs.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.fonttype"] = "none"
matplotlib.rcParams["svg.hashsalt"] = "slidemap"

_SVG_META = {"Date": None}


def write_beta_sweep_csv(sweep, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "ua_mean", "ua_ci", "pa_mean", "pa_ci"])
        for i, beta in enumerate(sweep.grid):
            writer.writerow([
                repr(float(beta)),
                repr(float(sweep.ua_mean[i])),
                repr(float(sweep.ua_ci[i])),
                repr(float(sweep.pa_mean[i])),
                repr(float(sweep.pa_ci[i])),
            ])
    return path


def beta_sweep_figure(sweep, beta_n, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(sweep.grid, sweep.ua_mean, "-", color="#1f77b4", label="user's accuracy")
    ax.fill_between(sweep.grid, sweep.ua_mean - sweep.ua_ci, sweep.ua_mean + sweep.ua_ci,
                    color="#1f77b4", alpha=0.2, linewidth=0)
    ax.plot(sweep.grid, sweep.pa_mean, "--", color="#d62728", label="producer's accuracy")
    ax.fill_between(sweep.grid, sweep.pa_mean - sweep.pa_ci, sweep.pa_mean + sweep.pa_ci,
                    color="#d62728", alpha=0.2, linewidth=0)
    ax.axvline(beta_n, color="0.3", linewidth=0.8, linestyle=":")
    ax.annotate(f"beta_n = {beta_n:g}", xy=(beta_n, ax.get_ylim()[0]),
                xytext=(4, 6), textcoords="offset points", fontsize=9)
    ax.set_xlabel("class ratio (non-landslide : landslide)")
    ax.set_ylabel("accuracy")
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def write_annual_accuracy_csv(reports_by_year: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "oa", "oa_ci", "ua", "ua_ci", "pa", "pa_ci",
                         "replications"])
        for year in sorted(reports_by_year):
            r = reports_by_year[year]
            writer.writerow([year, repr(r.oa), repr(r.oa_ci), repr(r.ua), repr(r.ua_ci),
                             repr(r.pa), repr(r.pa_ci), r.replications])
    return path


def annual_accuracy_figure(reports_by_year: dict, path) -> Path:
    path = Path(path)
    years = sorted(reports_by_year)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for attr, ci_attr, style, color in (
        ("oa", "oa_ci", "-o", "#2ca02c"),
        ("ua", "ua_ci", "-s", "#1f77b4"),
        ("pa", "pa_ci", "-^", "#d62728"),
    ):
        vals = [getattr(reports_by_year[y], attr) for y in years]
        cis = [getattr(reports_by_year[y], ci_attr) for y in years]
        ax.errorbar(years, vals, yerr=cis, fmt=style, color=color, markersize=4,
                    capsize=2, label=attr.upper())
    ax.set_xlabel("year")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def area_figure(rows, path) -> Path:
    path = Path(path)
    years = [r.year for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(years, [r.old_km2 for r in rows], color="#8c564b", label="old")
    ax.bar(years, [r.new_km2 for r in rows],
           bottom=[r.old_km2 for r in rows], color="#d62728", label="new")
    ax.plot(years, [r.revegetated_km2 for r in rows], "-o", color="#2ca02c",
            markersize=4, label="revegetated")
    ax.set_xlabel("year")
    ax.set_ylabel("area (km^2)")
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def emit_reports(results: dict, outdir) -> list:
    """Write every report present in `results` into `outdir`.

    Recognized keys: "sweep" (+ "beta_n"), "annual" (year -> AccuracyReport),
    "area" (list of AreaComposition). Returns the written paths; an empty
    assessment emits a warning instead of a CSV.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    sweep = results.get("sweep")
    if sweep is not None:
        written.append(write_beta_sweep_csv(sweep, outdir / "beta_sweep.csv"))
        written.append(beta_sweep_figure(sweep, results.get("beta_n", float("nan")),
                                         outdir / "beta_sweep.svg"))
    if "annual" in results:
        annual = results["annual"]
        if annual:
            written.append(write_annual_accuracy_csv(annual,
                                                     outdir / "annual_accuracy.csv"))
            written.append(annual_accuracy_figure(annual,
                                                  outdir / "annual_accuracy.svg"))
        else:
            warnings.warn("empty assessment: no accuracy report written")
    area = results.get("area")
    if area:
        from .chronology import save_area_csv

        save_area_csv(area, outdir / "area_composition.csv")
        written.append(outdir / "area_composition.csv")
        written.append(area_figure(area, outdir / "area_composition.svg"))
    return written
