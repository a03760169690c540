"""Command line interface.

Subcommands:
  run       one federated experiment, printing per-round mean accuracy
  baseline  independently trained edge models (the benchmark)
  sweep     grid sweep over one axis, exported as CSV
  check     gradient and physics self-tests

Exit codes: 0 success, 1 usage error, 2 runtime failure.  The
``FEDSENSE_SEED`` environment variable overrides ``--seed``.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .channel import PathLossParams, path_loss_db, rician_fading
from .config import SimulationConfig, desk_scale, parse_config
from .errors import FedSenseError
from .federated import baseline_independent, run_experiment_full
from .geometry import sample_uav_positions
from .gradcheck import run_check
from .harness import export_csv, headline_accuracy, sweep
from .neuralnet import save_weights
from .waveform import random_spec, synthesize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsense",
        description="Federated spectrum sensing simulator for UAV swarms",
    )
    parser.add_argument("--version", action="version", version=f"fedsense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--aggregator", choices=("fedavg", "fedsnr"))
        p.add_argument("--desk", action="store_true", help="desk-scale preset")
        p.add_argument("--workers", type=int, help="parallel client trainers")

    p_run = sub.add_parser("run", help="run one federated experiment")
    common(p_run)
    p_run.add_argument("--out", help="write final global weights here")

    p_base = sub.add_parser("baseline", help="independently trained edge models")
    common(p_base)

    p_sweep = sub.add_parser("sweep", help="sweep one axis and export CSV")
    common(p_sweep)
    p_sweep.add_argument(
        "--axis", required=True, choices=("ptx", "num_uavs", "rician_k", "data_per_uav")
    )
    p_sweep.add_argument("--values", required=True, help="comma-separated grid")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated seeds")
    p_sweep.add_argument("--out", default="sweep.csv", help="output CSV path")

    p_check = sub.add_parser("check", help="gradient and physics self-tests")
    p_check.add_argument("--grad-seeds", type=int, default=2)

    return parser


def _load_config(args) -> SimulationConfig:
    cfg = parse_config(args.config) if args.config else SimulationConfig()
    if args.desk:
        cfg = desk_scale(cfg)
    if args.aggregator:
        cfg = replace(cfg, aggregator=args.aggregator)
    seed = args.seed
    env_seed = os.environ.get("FEDSENSE_SEED")
    if env_seed is not None and env_seed != "":
        seed = int(env_seed)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg.validate()


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    print(
        f"run: {cfg.settings} settings, N={cfg.num_uavs}, B={cfg.data_per_uav}, "
        f"M={cfg.signal_len}, Ptx={cfg.ptx_dbm} dBm, aggregator={cfg.aggregator}, "
        f"seed={cfg.seed}"
    )

    def progress(r):
        print(f"round {r.round_index + 1}/{cfg.settings} mean_accuracy {r.mean_accuracy:.4f}")

    history, weights = run_experiment_full(cfg, progress=progress)
    print(f"headline accuracy (final 20% of rounds): {headline_accuracy(history):.4f}")
    if args.out:
        save_weights(args.out, weights)
        print(f"saved global weights to {args.out}")
    return 0


def _cmd_baseline(args) -> int:
    cfg = _load_config(args)
    result = baseline_independent(cfg)
    for i, acc in enumerate(result.accuracies):
        print(f"uav {i} accuracy {acc:.4f}")
    print(f"baseline mean accuracy: {result.mean_accuracy:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    def progress(axis, value, seed, _cell):
        print(f"sweep {axis}={value:g} seed={seed} done")

    result = sweep(cfg, args.axis, values, seeds, progress=progress)
    export_csv(result, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_check(args) -> int:
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        failures += 0 if ok else 1

    reports = run_check(range(args.grad_seeds))
    worst = max(r.max_rel_err for r in reports)
    report(
        "gradients vs finite differences",
        worst < 1e-4,
        f"max rel err {worst:.2e} over {args.grad_seeds} seeds",
    )

    rng = np.random.default_rng(0)
    pts = [
        sample_uav_positions(16, 100.0, (5000.0, 5000.0, 120.0), rng)
        for _ in range(20)
    ]
    min_sep = min(
        np.sqrt(((np.array([[q.x, q.y, q.z] for q in scene])[:, None]
                  - np.array([[q.x, q.y, q.z] for q in scene])[None]) ** 2).sum(-1)
                + np.eye(16) * 1e12).min()
        for scene in pts
    )
    report("hardcore minimum distance", min_sep >= 100.0, f"min {min_sep:.1f} m")

    h = rician_fading(10.0, rng, size=20000)
    power = float(np.mean(np.abs(h) ** 2))
    report("fading unit mean power", abs(power - 1.0) < 0.02, f"E|h|^2 = {power:.4f}")

    p = PathLossParams(3.04, -23.29, -3.61, 4.14, 20.70, -0.41, 5.86)
    pl = path_loss_db(1000.0, 0.0, p)
    report("path loss deterministic part", abs(pl - 76.75) < 0.01, f"{pl:.3f} dB")

    for _ in range(50):
        spec = random_spec(rng, 256, 1e6)
        s = synthesize(spec, 256, 1e6)
        if abs(np.mean(np.abs(s) ** 2) - 1.0) > 1e-9:
            report("waveform unit power", False, str(spec.kind))
            break
    else:
        report("waveform unit power", True)

    return 0 if failures == 0 else 2


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; map usage to 1
        return 0 if exc.code == 0 else 1
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "baseline":
            return _cmd_baseline(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_check(args)
    except (FedSenseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
