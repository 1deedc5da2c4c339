"""Command-line entry point: ``kgembed <stage> --config run.toml``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError, StageError
from .pipeline import STAGES, load_config, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2

# flag name -> (config path, type)
FLAG_KEYS = {
    "rrf_dir": (["ingest", "rrf_dir"], str),
    "walks_per_node": (["walk", "walks_per_node"], int),
    "walk_length": (["walk", "walk_length"], int),
    "p": (["walk", "p"], float),
    "q": (["walk", "q"], float),
    "dimensions": (["sgns", "dimensions"], int),
    "bootstrap_count": (["eval", "bootstrap_count"], int),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgembed", description="Knowledge-graph embedding pipeline.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--output-dir", help="output directory (overrides config)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="intra-stage parallelism; 1 is reproducible")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config value (TOML literal); repeatable")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--rrf-dir", dest="rrf_dir")
    common.add_argument("--walks-per-node", dest="walks_per_node", type=int)
    common.add_argument("--walk-length", dest="walk_length", type=int)
    common.add_argument("-p", dest="p", type=float, help="node2vec return parameter")
    common.add_argument("-q", dest="q", type=float, help="node2vec in-out parameter")
    common.add_argument("--dimensions", type=int, nargs="+", help="SGNS dimension sweep")
    common.add_argument("--bootstrap-count", dest="bootstrap_count", type=int)

    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    run = sub.add_parser("run", parents=[common], help="run the configured stages end to end")
    run.add_argument("--stages", nargs="+", choices=STAGES)
    return parser


def _overrides(args) -> list[str]:
    out = list(args.set)
    if args.output_dir is not None:
        out.append(f"output_dir={json.dumps(os.path.abspath(args.output_dir))}")
    if args.seed is not None:
        out.append(f"seed={args.seed}")
    if args.workers is not None:
        out.append(f"workers={args.workers}")
    for flag, (path, _) in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            if flag == "rrf_dir":
                value = os.path.abspath(value)
            out.append(f"{'.'.join(path)}={json.dumps(value)}")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log = logging.getLogger("kgembed")
    try:
        # flags must outrank the file, so they are applied as overrides after it
        cfg = load_config(args.config, _overrides(args), base_dir=None if args.config else ".")
        stages = args.stages if args.command == "run" else [args.command]
        manifest = run_pipeline(cfg, stages)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    log.info("done: %d artifacts in manifest", len(manifest["artifacts"]))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
