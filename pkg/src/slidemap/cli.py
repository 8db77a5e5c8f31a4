"""Command-line entry point.

One JSON run configuration drives everything; each pipeline stage is a
subcommand so long runs can be resumed piecewise, and `run` executes the
whole chain. Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical/statistical error.

Environment overrides (nothing else is read from the environment):
SLIDEMAP_OUT_DIR replaces the output directory, SLIDEMAP_WORKERS the
worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import SlidemapError
from .pipeline import STAGES, RunConfig, run_pipeline, run_stage


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slidemap",
        description="Annual landslide mapping and long-term activity metrics "
                    "from multi-seasonal composites, slope and nighttime lights.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run"
                           else "run the full pipeline")
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (defaults to the "
                       "configuration's output_dir)")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel workers (results do not depend on this)")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = RunConfig.from_json(args.config)
        out = Path(
            args.out
            or os.environ.get("SLIDEMAP_OUT_DIR")
            or cfg.output_dir
        )
        workers = args.workers or os.environ.get("SLIDEMAP_WORKERS")
        if workers is not None:
            cfg.workers = max(1, int(workers))
        if args.command == "run":
            run_pipeline(cfg, out, progress=lambda s: print(f"[{s}]", flush=True))
            print(f"run complete: {out}")
        else:
            result = run_stage(args.command, cfg, out)
            for key, value in result.items():
                if key != "files":
                    print(f"{key}: {value}")
            print(f"{args.command} complete: {len(result.get('files', []))} file(s)")
    except SlidemapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
