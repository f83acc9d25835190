"""Telemetry report rendering: delimited stats plus figures on disk."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .vita import SUB_PHASES, VitaRecord, VitaStats


def write_report(
    records: list[VitaRecord], stats: VitaStats, out_dir: str | Path
) -> list[Path]:
    """Write vita_stats.csv and the figures; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [_write_csv(stats, out / "vita_stats.csv")]
    written.append(_phase_duration_figure(stats, out / "phase_durations.png"))
    deviations = _deviation_figure(records, out / "deviation_histogram.png")
    if deviations is not None:
        written.append(deviations)
    failures = _failure_figure(stats, out / "unit_failures.png")
    if failures is not None:
        written.append(failures)
    return written


def _write_csv(stats: VitaStats, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["sub_phase", "count", "mean_duration_ms", "max_duration_ms", "mean_deviation_mm"]
        )
        for phase in SUB_PHASES:
            s = stats.per_phase[phase]
            writer.writerow(
                [
                    phase.value,
                    s.count,
                    f"{s.mean_duration_ms:.3f}",
                    f"{s.max_duration_ms:.3f}",
                    "" if s.mean_deviation_mm is None else f"{s.mean_deviation_mm:.4f}",
                ]
            )
        writer.writerow([])
        writer.writerow(["unit", "records", "failures"])
        for unit in sorted(stats.records_by_unit):
            writer.writerow(
                [unit, stats.records_by_unit[unit], stats.failures_by_unit.get(unit, 0)]
            )
    return path


def _phase_duration_figure(stats: VitaStats, path: Path) -> Path:
    phases = [p.value for p in SUB_PHASES]
    means = [stats.per_phase[p].mean_duration_ms for p in SUB_PHASES]
    maxes = [stats.per_phase[p].max_duration_ms for p in SUB_PHASES]
    fig, ax = plt.subplots(figsize=(6, 4))
    x = range(len(phases))
    ax.bar([i - 0.2 for i in x], means, width=0.4, label="mean")
    ax.bar([i + 0.2 for i in x], maxes, width=0.4, label="max")
    ax.set_xticks(list(x))
    ax.set_xticklabels(phases)
    ax.set_ylabel("duration [ms]")
    ax.set_title("sub-phase durations")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _deviation_figure(records: list[VitaRecord], path: Path) -> Path | None:
    deviations = [r.deviation_mm for r in records if r.deviation_mm is not None]
    if not deviations:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(deviations, bins=min(30, max(5, len(deviations) // 10 or 5)))
    ax.set_xlabel("positioning deviation [mm]")
    ax.set_ylabel("sub-phases")
    ax.set_title("positioning deviation distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _failure_figure(stats: VitaStats, path: Path) -> Path | None:
    if not stats.failures_by_unit:
        return None
    units = sorted(stats.failures_by_unit)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(units, [stats.failures_by_unit[u] for u in units], color="#b23b3b")
    ax.set_ylabel("failed attempts")
    ax.set_title("failures per production unit")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
