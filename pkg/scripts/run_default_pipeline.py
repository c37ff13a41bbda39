#!/usr/bin/env python3
"""Run one full default experiment into the given directory."""

import argparse
import time

from prunescope.experiment import ExperimentConfig, run_pipeline


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/default", help="artifact directory")
    parser.add_argument("--seed", type=int, default=1, help="master seed")
    args = parser.parse_args()

    cfg = ExperimentConfig(master_seed=args.seed)
    t0 = time.perf_counter()
    manifest = run_pipeline(cfg, args.out)
    elapsed = time.perf_counter() - t0
    print(f"completed {len(manifest['complete'])} stages, "
          f"{len(manifest['hashes'])} artifacts, {elapsed:.0f}s -> {args.out}")


if __name__ == "__main__":
    main()
