"""Command-line driver for batch robustness studies.

Each subcommand runs one pipeline stage (plus the stages it depends on when
their artifacts are missing); `run` executes everything. All outputs land in
the configured run directory, hashed into a manifest.

Exit codes: 0 success, 1 error, 2 usage, 3 empty intersection (the cost
slack is too small), 4 the exact allocation sheds load in validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .pipeline import Run, run_pipeline
from .robust import EmptyIntersectionError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EMPTY_INTERSECTION = 3
EXIT_EXACT_SHEDS = 4

logger = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline config YAML")
    p.add_argument("--eps", type=float, help="override the cost slack fraction")
    p.add_argument("--iterations", type=int, help="override the exploration budget per scenario")
    p.add_argument(
        "--method",
        choices=["random-uniform", "facets", "maximal-centre-then-facets"],
        help="override the direction-generation method",
    )
    p.add_argument("--parallel", type=int, help="worker pool size for scenario-level tasks")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--output", help="override the output directory")


def _overrides(args) -> dict:
    out = {}
    for key in ("eps", "iterations", "method", "parallel", "seed", "output"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearopt",
        description="Cost-robust capacity expansion via intersected near-optimal spaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    demo_p = sub.add_parser("demo", help="write a self-contained demo study directory")
    demo_p.add_argument("--out", required=True)
    demo_p.add_argument("--eps", type=float, default=0.05)
    demo_p.add_argument("--iterations", type=int, default=40)
    demo_p.add_argument("--count", type=int, default=4)
    demo_p.add_argument("--seed", type=int, default=7)

    for name, help_text in [
        ("generate-scenarios", "derive the scenario set from the base scenario"),
        ("optimize", "solve each scenario's expansion problem"),
        ("explore", "approximate each scenario's reduced near-optimal space"),
        ("intersect", "intersect the spaces and locate the Chebyshev centre"),
        ("allocate", "map the robust centre back to full designs"),
        ("validate", "stress-test every allocation in dispatch"),
        ("report", "assemble the run report and projection data"),
        ("run", "execute the whole pipeline"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "demo":
        from .demo import write_demo_assets

        cfg_path = write_demo_assets(
            args.out, eps=args.eps, iterations=args.iterations, count=args.count, seed=args.seed
        )
        print(f"demo study written; run: nearopt run --config {cfg_path}")
        return EXIT_OK

    try:
        cfg = load_config(args.config, _overrides(args))
    except Exception as err:  # noqa: BLE001 - config errors are user errors
        print(f"error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            report = run_pipeline(cfg)
            print(json.dumps(report["validation"], indent=1))
            return _guard_exact(cfg)

        run = Run(cfg)
        scenarios = run.stage_scenarios()
        if args.command == "generate-scenarios":
            print(f"{len(scenarios)} scenarios in {cfg.scenario_dir}")
            return EXIT_OK
        optima = run.stage_optimize(scenarios)
        if args.command == "optimize":
            print(json.dumps({sid: rec["c_opt"] for sid, rec in optima.items()}, indent=1, sort_keys=True))
            return EXIT_OK
        spaces = run.stage_explore(scenarios, optima)
        if args.command == "explore":
            print(f"explored {len(spaces)} spaces; artifacts in {run.out / 'explore'}")
            return EXIT_OK
        centre_doc = run.stage_intersect(spaces, optima)
        if args.command == "intersect":
            print(json.dumps({"centre": centre_doc["centre"], "radius": centre_doc["radius"]}, indent=1))
            return EXIT_OK
        allocations = run.stage_allocate(scenarios, optima, centre_doc)
        if args.command == "allocate":
            print(json.dumps({m: iv.capex() for m, iv in allocations.items()}, indent=1, sort_keys=True))
            return EXIT_OK
        reports = run.stage_validate(scenarios, allocations, centre_doc)
        if args.command == "validate":
            for rep in reports:
                print(
                    f"{rep.allocation:14s} shed {rep.total_shed_mwh:14.3f} MWh/a  "
                    f"relative {rep.relative_shedding:.6f}"
                )
            return _guard_exact(cfg)
        run.stage_report(spaces)
        print(f"report written to {run.out / 'report' / 'report.json'}")
        return EXIT_OK
    except EmptyIntersectionError as err:
        print(f"empty intersection: {err}", file=sys.stderr)
        print("the near-optimal spaces do not overlap; rerun with a larger --eps", file=sys.stderr)
        return EXIT_EMPTY_INTERSECTION
    except Exception as err:  # noqa: BLE001 - CLI boundary
        logger.exception("pipeline failed")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


def _guard_exact(cfg) -> int:
    """Regression guard: nonzero exit when the exact allocation sheds load."""
    import json as jsonmod

    path = cfg.output_dir / "validate" / "exact.json"
    if not path.exists():
        return EXIT_OK
    with open(path) as fh:
        doc = jsonmod.load(fh)
    total_load = doc["total_load_mwh"]
    if total_load > 0 and doc["total_shed_mwh"] / total_load > 1e-6:
        print("exact allocation sheds load; regression guard tripped", file=sys.stderr)
        return EXIT_EXACT_SHEDS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
