"""Federated orchestration: per-setting rounds, aggregation, baseline.

A round samples a fresh scene, builds every UAV's dataset, trains each
client from the current global weights, and aggregates either by sample
count (fed_avg) or by linear SNR (fed_snr).  Clients train on independent
substreams, so results do not depend on execution order or on how many
worker processes run them.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .config import SimulationConfig
from .dataset import ClientDataset, make_client_dataset
from .errors import EmptyUpdateSet, NonPositiveSnr, ShapeMismatch
from .geometry import sample_scene
from .neuralnet import (
    LEARNABLE_KEYS,
    RUNNING_KEYS,
    ModelWeights,
    TrainReport,
    evaluate,
    init_model,
    train_local,
)
from .seeding import DATA, GEOMETRY, INIT, TRAIN, Streams, substream


@dataclass
class ClientUpdate:
    weights: ModelWeights
    sample_count: int
    snr_linear: float


@dataclass
class RoundResult:
    round_index: int
    aggregator: str
    accuracies: list[float]      # per-UAV test accuracy of the new global model
    mean_accuracy: float
    snr_db: list[float]          # per-UAV aggregation SNR in dB


@dataclass
class BaselineResult:
    accuracies: list[float]
    mean_accuracy: float
    reports: list[TrainReport]


def _check_shapes(weight_sets: list[ModelWeights]) -> None:
    first = weight_sets[0].tensors
    for ws in weight_sets[1:]:
        if set(ws.tensors) != set(first):
            raise ShapeMismatch("client updates carry different tensor names")
        for k, v in ws.tensors.items():
            if v.shape != first[k].shape:
                raise ShapeMismatch(
                    f"tensor {k!r} shape {v.shape} != {first[k].shape}"
                )


def _weighted_mean(weight_sets: list[ModelWeights], raw_weights, keys) -> dict:
    # normalize by the max first so equal raw weights give exactly 1/n each,
    # regardless of their common scale
    r = np.asarray(raw_weights, dtype=np.float64)
    r = r / r.max()
    omega = r / r.sum()
    out = {}
    for k in keys:
        acc = omega[0] * weight_sets[0].tensors[k].astype(np.float64)
        for wi, ws in zip(omega[1:], weight_sets[1:]):
            acc += wi * ws.tensors[k].astype(np.float64)
        out[k] = acc.astype(weight_sets[0].tensors[k].dtype)
    return out


def _aggregate(updates: list[ClientUpdate], learnable_weights) -> ModelWeights:
    """Learnable tensors follow the aggregation rule's weights; batch-norm
    running statistics are moment estimates, so they are always combined by
    sample count.  SNR-weighting the statistics lets one high-SNR client's
    feature moments dominate the global model and collapses inference
    accuracy on every other device even when the learnable parameters are
    good (their weights are fine under batch statistics)."""
    weight_sets = [u.weights for u in updates]
    _check_shapes(weight_sets)
    counts = [u.sample_count for u in updates]
    out = _weighted_mean(weight_sets, learnable_weights, LEARNABLE_KEYS)
    out.update(_weighted_mean(weight_sets, counts, RUNNING_KEYS))
    return ModelWeights(out)


def fed_avg(updates: list[ClientUpdate]) -> ModelWeights:
    """Sample-count weighted elementwise mean over every tensor."""
    if not updates:
        raise EmptyUpdateSet("fed_avg needs at least one client update")
    counts = [u.sample_count for u in updates]
    if any(c < 1 for c in counts):
        raise ValueError("sample counts must be >= 1")
    return _aggregate(updates, counts)


def fed_snr(updates: list[ClientUpdate]) -> ModelWeights:
    """Linear-SNR weighted elementwise mean of the learnable tensors."""
    if not updates:
        raise EmptyUpdateSet("fed_snr needs at least one client update")
    if any(u.sample_count < 1 for u in updates):
        raise ValueError("sample counts must be >= 1")
    snrs = [u.snr_linear for u in updates]
    if any(s <= 0 for s in snrs):
        raise NonPositiveSnr("fed_snr needs strictly positive SNRs")
    return _aggregate(updates, snrs)


AGGREGATORS = {"fedavg": fed_avg, "fedsnr": fed_snr}


def _train_client_task(
    global_w: ModelWeights,
    ds: ClientDataset,
    cfg: SimulationConfig,
    setting_index: int,
) -> ClientUpdate:
    rng = substream(cfg.seed, TRAIN, setting_index, ds.uav_index)
    trained, _ = train_local(global_w, ds, cfg.hyperparams(), rng)
    return ClientUpdate(
        weights=trained, sample_count=ds.sample_count, snr_linear=ds.snr_linear
    )


def _n_jobs(cfg: SimulationConfig, n_tasks: int) -> int:
    limit = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def build_round_datasets(
    cfg: SimulationConfig, setting_index: int, streams: Streams
) -> list[ClientDataset]:
    """Sample the setting's scene and every UAV's dataset from its substream."""
    scene = sample_scene(
        cfg.num_uavs,
        cfg.d_min_m,
        cfg.bounds(),
        cfg.radar_alt_m,
        streams.rng(GEOMETRY, setting_index),
        retry_budget=cfg.matern_retry_budget,
    )
    return [
        make_client_dataset(scene, i, cfg, streams.rng(DATA, setting_index, i))
        for i in range(cfg.num_uavs)
    ]


def run_round(
    global_w: ModelWeights,
    setting_index: int,
    cfg: SimulationConfig,
    streams: Streams | None = None,
) -> tuple[ModelWeights, RoundResult]:
    """One federated round; the global model is swapped only after aggregation."""
    streams = streams or Streams(cfg.seed)
    datasets = build_round_datasets(cfg, setting_index, streams)
    n_jobs = _n_jobs(cfg, len(datasets))
    if n_jobs == 1:
        updates = [
            _train_client_task(global_w, ds, cfg, setting_index) for ds in datasets
        ]
    else:
        updates = Parallel(n_jobs=n_jobs)(
            delayed(_train_client_task)(global_w, ds, cfg, setting_index)
            for ds in datasets
        )
    new_global = AGGREGATORS[cfg.aggregator](updates)
    accs = [evaluate(new_global, ds.test, cfg.hyperparams()) for ds in datasets]
    result = RoundResult(
        round_index=setting_index,
        aggregator=cfg.aggregator,
        accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        snr_db=[10.0 * np.log10(u.snr_linear) for u in updates],
    )
    return new_global, result


def run_experiment_full(
    cfg: SimulationConfig, progress=None
) -> tuple[list[RoundResult], ModelWeights]:
    """Sequential rounds, each warm-starting from the aggregated global model."""
    cfg.validate()
    streams = Streams(cfg.seed)
    global_w = init_model(cfg.signal_len, streams.rng(INIT))
    history: list[RoundResult] = []
    for k in range(cfg.settings):
        if not cfg.warm_start and k > 0:
            global_w = init_model(cfg.signal_len, streams.rng(INIT, k))
        global_w, result = run_round(global_w, k, cfg, streams)
        history.append(result)
        if progress is not None:
            progress(result)
    return history, global_w


def run_experiment(cfg: SimulationConfig, progress=None) -> list[RoundResult]:
    history, _ = run_experiment_full(cfg, progress)
    return history


def _train_baseline_task(
    w0: ModelWeights, ds: ClientDataset, cfg: SimulationConfig
) -> tuple[float, TrainReport]:
    rng = substream(cfg.seed, TRAIN, 0, ds.uav_index)
    trained, report = train_local(w0, ds, cfg.hyperparams(), rng)
    return evaluate(trained, ds.test, cfg.hyperparams()), report


def baseline_independent(cfg: SimulationConfig) -> BaselineResult:
    """Benchmark without weight sharing: every UAV accumulates its own data
    across all settings, trains alone from the common initial weights, and
    is tested on its own held-out examples."""
    cfg.validate()
    streams = Streams(cfg.seed)
    w0 = init_model(cfg.signal_len, streams.rng(INIT))
    merged: list[ClientDataset] = [
        ClientDataset(i, [], [], snr_linear=1.0, sample_count=0)
        for i in range(cfg.num_uavs)
    ]
    for k in range(cfg.settings):
        for ds in build_round_datasets(cfg, k, streams):
            tgt = merged[ds.uav_index]
            tgt.train.extend(ds.train)
            tgt.test.extend(ds.test)
            tgt.sample_count += ds.sample_count
    n_jobs = _n_jobs(cfg, cfg.num_uavs)
    if n_jobs == 1:
        results = [_train_baseline_task(w0, ds, cfg) for ds in merged]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_train_baseline_task)(w0, ds, cfg) for ds in merged
        )
    accs = [acc for acc, _ in results]
    return BaselineResult(
        accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        reports=[rep for _, rep in results],
    )
