#!/usr/bin/env python3
"""Reproduce the four desk-scale result sweeps as CSV files.

Each sweep runs FedAvg, FedSNR, and the independently-trained baseline
for every grid value and seed, then writes mean accuracy and 95% CI per
cell.  At desk scale (default) the full set takes several hours on a
2-core machine; pass --quick for a minutes-long smoke version.

    python scripts/reproduce_figures.py --out results/ --seeds 1,2,3
"""
import argparse
import pathlib
import sys
import time

from fedsense.config import desk_scale
from fedsense.harness import export_csv, sweep

SWEEPS = {
    "fig3_transmit_power.csv": ("ptx", [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]),
    "fig4_num_uavs.csv": ("num_uavs", [2, 4, 8]),
    "fig5_rician_k.csv": ("rician_k", [0.0, 1.0, 10.0]),
    "fig6_data_per_uav.csv": ("data_per_uav", [32, 64, 128]),
}

QUICK = dict(settings=6, num_uavs=4, data_per_uav=32, signal_len=128,
             fs_hz=12.8e6, max_epochs=4)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")
    parser.add_argument("--quick", action="store_true", help="tiny smoke-scale run")
    parser.add_argument("--only", choices=sorted(SWEEPS), help="run a single sweep")
    args = parser.parse_args()

    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    cfg = desk_scale(**QUICK) if args.quick else desk_scale()

    for name, (axis, values) in SWEEPS.items():
        if args.only and name != args.only:
            continue
        t0 = time.time()
        print(f"sweep {axis}: values {values}, seeds {seeds}")

        def progress(axis, value, seed, _cell):
            print(f"  {axis}={value:g} seed={seed} done ({time.time() - t0:.0f}s)")

        result = sweep(cfg, axis, values, seeds, progress=progress)
        path = out_dir / name
        export_csv(result, path)
        print(f"wrote {path} in {time.time() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
