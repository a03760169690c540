"""Experiment sweeps, seed-averaged statistics, and CSV export.

A sweep runs the full federated experiment for both aggregators plus the
independent baseline at every grid value and seed, then reports the mean
accuracy with a Student-t 95% confidence half-width across seeds.  The
headline accuracy of a federated run is the mean over the final 20% of
rounds, which damps round-to-round noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as scipy_stats

from .config import SimulationConfig
from .federated import RoundResult, baseline_independent, run_experiment

SWEEP_AXES = {
    "ptx": "ptx_dbm",
    "num_uavs": "num_uavs",
    "rician_k": "rician_k",
    "data_per_uav": "data_per_uav",
}
METHODS = ("baseline", "fedavg", "fedsnr")
HEADLINE_FRACTION = 0.2


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    means: dict[str, list[float]]    # method -> per-value mean accuracy
    ci95: dict[str, list[float]]     # method -> per-value CI half-width
    seeds: list[int]


def headline_accuracy(history: list[RoundResult], fraction: float = HEADLINE_FRACTION) -> float:
    """Mean accuracy over the final ``fraction`` of rounds."""
    if not history:
        raise ValueError("empty round history")
    tail = max(1, round(len(history) * fraction))
    return float(np.mean([r.mean_accuracy for r in history[-tail:]]))


def student_t_halfwidth(samples, confidence: float = 0.95) -> float:
    """Half-width of the Student-t confidence interval; 0 for fewer than 2 samples."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        return 0.0
    t = scipy_stats.t.ppf(0.5 + confidence / 2.0, df=n - 1)
    return float(t * samples.std(ddof=1) / np.sqrt(n))


def _axis_config(cfg: SimulationConfig, axis: str, value) -> SimulationConfig:
    field = SWEEP_AXES[axis]
    if field in ("num_uavs", "data_per_uav"):
        value = int(value)
    return replace(cfg, **{field: value}).validate()


def sweep(
    cfg: SimulationConfig,
    axis: str,
    values,
    seeds,
    progress=None,
) -> SweepResult:
    """Run every (value, seed) cell for both aggregators and the baseline."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    values = list(values)
    seeds = [int(s) for s in seeds]
    if not values:
        raise ValueError("need at least one sweep value")
    if not seeds:
        raise ValueError("need at least one seed")
    per_method: dict[str, list[list[float]]] = {m: [] for m in METHODS}
    for value in values:
        cell: dict[str, list[float]] = {m: [] for m in METHODS}
        for seed in seeds:
            cfg_cell = replace(_axis_config(cfg, axis, value), seed=seed)
            for method in ("fedavg", "fedsnr"):
                history = run_experiment(replace(cfg_cell, aggregator=method))
                cell[method].append(headline_accuracy(history))
            cell["baseline"].append(baseline_independent(cfg_cell).mean_accuracy)
            if progress is not None:
                progress(axis, value, seed, cell)
        for method in METHODS:
            per_method[method].append(cell[method])
    return SweepResult(
        axis=axis,
        values=values,
        means={m: [float(np.mean(c)) for c in per_method[m]] for m in METHODS},
        ci95={m: [student_t_halfwidth(c) for c in per_method[m]] for m in METHODS},
        seeds=seeds,
    )


def export_csv(result: SweepResult, path) -> None:
    """Write ``axis,value,method,mean_accuracy,ci95,seeds`` rows, sorted by
    (value, method), floats fixed to 6 decimals; byte-stable for equal inputs."""
    seeds_field = ";".join(str(s) for s in result.seeds)
    rows = []
    for i, value in enumerate(result.values):
        for method in METHODS:
            rows.append(
                (
                    float(value),
                    method,
                    result.means[method][i],
                    result.ci95[method][i],
                )
            )
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="\n") as f:
        f.write("axis,value,method,mean_accuracy,ci95,seeds\n")
        for value, method, mean, ci in rows:
            f.write(
                f"{result.axis},{value:g},{method},{mean:.6f},{ci:.6f},{seeds_field}\n"
            )
