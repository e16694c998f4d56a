"""Command-line entry point: ``qmemhom run`` and ``qmemhom validate``."""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

from .config import SCENARIOS, load_config
from .errors import ConfigError, QMemHOMError
from .scenarios import run_scenario, write_result


def default_config_path(scenario: str) -> Path:
    return Path(str(resources.files("qmemhom") / "configs" / f"{scenario}.yaml"))


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmemhom", description="Memory-assisted HOM interference simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV tables plus summary.json")
    run.add_argument("--config", type=Path, help="YAML config (default: the shipped config for --scenario)")
    run.add_argument("--scenario", choices=SCENARIOS, help="override the config's scenario")
    run.add_argument("--seed", type=_seed, help="override the base seed")
    run.add_argument("--out", type=Path, help="output directory (default: output.dir from the config)")
    run.add_argument("--quiet", action="store_true", help="print nothing on success")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", nargs="?", type=Path)
    val.add_argument("--config", dest="config_opt", type=Path)
    val.add_argument("--scenario", choices=SCENARIOS)
    val.add_argument("--quiet", action="store_true")
    return parser


def _resolve_config(path: Path | None, scenario: str | None) -> Path:
    if path is not None:
        return path
    if scenario is None:
        raise ConfigError("need --config or --scenario")
    return default_config_path(scenario)


def cmd_validate(args) -> int:
    path = _resolve_config(args.config or args.config_opt, args.scenario)
    load_config(path, args.scenario)
    print("ok")
    return 0


def cmd_run(args) -> int:
    path = _resolve_config(args.config, args.scenario)
    cfg = load_config(path, args.scenario, args.seed)
    out = args.out if args.out is not None else Path(cfg.output.dir)
    t0 = time.perf_counter()
    result = run_scenario(cfg)
    written = write_result(result, out, cfg.seeds.base)
    if not args.quiet:
        print(f"{cfg.scenario}: wrote {len(written)} files to {out} in {time.perf_counter() - t0:.1f} s")
        for key, value in sorted(result.summary.items()):
            if isinstance(value, float):
                print(f"  {key} = {value:.6g}")
            elif not isinstance(value, dict):
                print(f"  {key} = {value}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_validate(args) if args.command == "validate" else cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (QMemHOMError, ValueError, OSError) as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
