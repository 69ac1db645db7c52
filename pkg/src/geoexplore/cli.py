"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from . import harness
from .graph import GraphError, fixture_dataset_dir

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _common(p: argparse.ArgumentParser):
    # accepted both before and after the subcommand
    p.add_argument("--dataset", default=argparse.SUPPRESS, help="dataset directory containing manifest.json")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--parallelism", type=int, default=argparse.SUPPRESS)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON or YAML run config")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoexplore", description="Geolocation-by-exploration toolkit")
    _common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check every graph in a dataset")
    _common(p)
    p.add_argument("--min-depth", type=int, default=10)

    p = sub.add_parser("eval", help="run the agent over a dataset")
    _common(p)
    p.add_argument("--backend", help="oracle | replay:<file> | chat:<model>[@<api base>]")
    p.add_argument("--model-tag")
    p.add_argument("--max-turns", type=int)
    p.add_argument("--fov", type=float)

    p = sub.add_parser("diversity", help="spatial diversity tables from proposed points")
    _common(p)
    p.add_argument("points_csv")

    p = sub.add_parser("trend", help="ANOVA / Spearman / OLS per model across levels")
    _common(p)
    p.add_argument("scores_csv")
    p.add_argument("--levels", help="comma-separated level order, lowest first")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--ols-on", choices=("samples", "means"), default="samples")

    p = sub.add_parser("consensus", help="polar consensus histogram and SVG")
    _common(p)
    p.add_argument("--radial-bins", type=int, default=6)
    p.add_argument("--angular-bins", type=int, default=8)
    p.add_argument("--percentile", type=float, default=0.99)
    p.add_argument("--center", choices=("start", "medoid"), default="start")

    p = sub.add_parser("report", help="markdown summary of the tables in --out")
    _common(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    _common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _dataset(args) -> Path:
    if getattr(args, "dataset", None):
        return Path(args.dataset)
    return fixture_dataset_dir()


def _run_config(args) -> harness.RunConfig:
    overrides = {
        "dataset_dir": getattr(args, "dataset", None),
        "output_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "parallelism": getattr(args, "parallelism", None),
        "backend": args.backend,
        "model_tag": args.model_tag,
        "max_turns": args.max_turns,
        "fov": args.fov,
    }
    if getattr(args, "config", None):
        return harness.load_config(args.config, **overrides)
    if overrides["dataset_dir"] is None:
        overrides["dataset_dir"] = str(fixture_dataset_dir())
    return harness.RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _dispatch(args) -> int:
    out = Path(getattr(args, "out", None) or "out")
    cmd = args.command
    if cmd == "validate":
        summary = harness.cmd_validate(_dataset(args), args.min_depth)
        for line in summary.lines():
            print(line)
        return EXIT_OK if summary.ok else EXIT_INVALID
    if cmd == "eval":
        cfg = _run_config(args)
        report = harness.cmd_eval(cfg)
        print(
            f"{report.n_episodes} episodes ({report.n_failed} failed, {report.n_null_guess} null guesses); "
            f"mean distance {report.mean_distance_km} km, mean score {report.mean_score}"
        )
        print(f"wrote {cfg.output_dir}/report.json")
        return EXIT_OK
    if cmd == "diversity":
        rows = harness.cmd_diversity(args.points_csv, out)
        print(f"{len(rows)} rows -> {out}/diversity.csv, {out}/radar.csv")
        return EXIT_OK
    if cmd == "trend":
        levels = [l.strip() for l in args.levels.split(",")] if args.levels else None
        reports = harness.cmd_trend(args.scores_csv, out, levels=levels, alpha=args.alpha, ols_on=args.ols_on)
        for r in reports:
            print(f"{r.model}: F={r.f_stat:.3f} p={r.f_p:.4f} rho={r.spearman_rho:.2f} remark={'pass' if r.remark else 'fail'}")
        return EXIT_OK
    if cmd == "consensus":
        hist = harness.cmd_consensus(
            _dataset(args), out, args.radial_bins, args.angular_bins, args.percentile, args.center
        )
        print(f"{int(hist.node_counts.sum())} nodes binned -> {out}/consensus.svg")
        return EXIT_OK
    if cmd == "report":
        print(harness.cmd_report(out))
        return EXIT_OK
    if cmd == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(_dataset(args)), host=args.host, port=args.port)
        return EXIT_OK
    raise AssertionError(cmd)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except (GraphError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
