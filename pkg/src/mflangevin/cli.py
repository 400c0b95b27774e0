"""Command-line entry point.

    mflangevin run <config.toml> [--preset NAME] [--seed S] [--out DIR] [--threads K]
    mflangevin validate <config.toml>

Exit codes: 0 all verdicts pass, 1 at least one verdict fails, 2 config error.
The default worker count comes from the MFLANGEVIN_THREADS environment
variable; the --threads flag overrides it.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .harness import PRESETS, emit_outputs, load_config, run_preset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mflangevin",
        description="Mean-field Langevin experiment presets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset and write its outputs")
    run.add_argument("config", help="TOML config file")
    run.add_argument("--preset", choices=PRESETS, help="override the config preset")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="override the output directory")
    run.add_argument("--threads", type=int,
                     help="worker threads (overrides MFLANGEVIN_THREADS)")

    val = sub.add_parser("validate", help="parse and validate a config file")
    val.add_argument("config", help="TOML config file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            if args.preset is not None:
                cfg.preset = args.preset
            if args.seed is not None:
                cfg.seed = args.seed
            if args.out is not None:
                cfg.output_dir = args.out
            if args.threads is not None:
                if args.threads < 1:
                    raise ConfigError("--threads must be >= 1")
                cfg.threads = args.threads
            cfg.validate()
        else:
            cfg.validate()
            print(f"ok: preset={cfg.preset} seed={cfg.seed}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    results = run_preset(cfg)
    report = emit_outputs(results, cfg)
    verdicts = report["verdicts"]
    for name in sorted(verdicts):
        print(f"{'PASS' if verdicts[name] else 'FAIL'}  {name}")
    print(f"outputs written to {cfg.output_dir}")
    return 0 if all(verdicts.values()) else 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
