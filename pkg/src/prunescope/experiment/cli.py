"""Command-line front end.

Verbs map onto pipeline stages (resuming from whatever already exists in the
output directory):

    gen-data    dataset generation only
    train       through dense training (init / rewind / level00 checkpoints)
    imp         through all pruning levels
    variant X   one comparison run (one-shot | fine-tune | random-reinit | random-prune)
    analyze Y   one analysis family (eigen | radius | interp | surface | geometry | taylor)
    pipeline    everything, plots included
    plot        figures from an existing artifact directory

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, DivergenceError, NumericalFailureError, PrunescopeError
from .config import ExperimentConfig, load_config
from .pipeline import STAGES, run_pipeline

_VARIANT_STAGES = {
    "one-shot": "variant_one_shot",
    "fine-tune": "variant_fine_tune",
    "random-reinit": "variant_random_reinit",
    "random-prune": "variant_random_prune",
}
_ANALYZE_STAGES = {
    "eigen": "eigen",
    "radius": "radius",
    "interp": "interp",
    "surface": "surface",
    "geometry": "geometry",
    "taylor": "taylor",
}


def _stages_through(last: str) -> list[str]:
    return list(STAGES[: STAGES.index(last) + 1])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prunescope",
        description="Train, prune iteratively by magnitude, and analyze loss-landscape geometry.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name: str, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="JSON experiment config (defaults built in)")
        p.add_argument("--out", help="artifact directory (overrides config out_dir)")
        return p

    add("gen-data", help="generate or ingest the datasets")
    add("train", help="train the dense network")
    add("imp", help="run all iterative pruning levels")
    variant = add("variant", help="run one comparison strategy")
    variant.add_argument("which", choices=sorted(_VARIANT_STAGES))
    analyze = add("analyze", help="run one analysis family")
    analyze.add_argument("which", choices=sorted(_ANALYZE_STAGES))
    add("pipeline", help="run every stage including plots")
    add("plot", help="emit SVG figures from an existing artifact directory")
    return parser


def _load(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        out = args.out if args.out else cfg.out_dir
        if args.verb == "gen-data":
            run_pipeline(cfg, out, stages=_stages_through("data"))
        elif args.verb == "train":
            run_pipeline(cfg, out, stages=_stages_through("dense"))
        elif args.verb == "imp":
            run_pipeline(cfg, out, stages=_stages_through("imp"))
        elif args.verb == "variant":
            stage = _VARIANT_STAGES[args.which]
            run_pipeline(cfg, out, stages=_stages_through("imp") + [stage])
        elif args.verb == "analyze":
            stage = _ANALYZE_STAGES[args.which]
            prereq = _stages_through("variant_random_prune")
            run_pipeline(cfg, out, stages=prereq + [stage])
        elif args.verb == "pipeline":
            run_pipeline(cfg, out)
        elif args.verb == "plot":
            from .plots import emit_plots

            emit_plots(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailureError, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except PrunescopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
