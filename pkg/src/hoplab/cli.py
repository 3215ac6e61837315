"""Command-line entry point: ``hoplab run | smooth | figures | presets``."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .config import PRESETS, SCHEMA, load_config, parse_overrides
from .errors import ConfigError, HoplabError


def _error(kind: str, message: str) -> int:
    msg = " ".join(str(message).split()).replace('"', "'")
    print(f'error: kind={kind} message="{msg}"', file=sys.stderr)
    return 2 if kind == "ConfigError" else 1


def cmd_run(args) -> int:
    from .runner import run_experiment

    text = None
    source = "<defaults>"
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            return _error("ConfigError", f"cannot read {args.config}: {exc}")
        source = args.config
    try:
        cfg = load_config(text, preset=args.preset, overrides=parse_overrides(args.set), source=source)
    except ConfigError as exc:
        return _error("ConfigError", exc)
    out = Path(args.out)
    start = time.perf_counter()
    try:
        run_experiment(cfg, out)
    except ConfigError as exc:
        return _error("ConfigError", exc)
    except (HoplabError, ValueError, KeyError, OSError) as exc:
        return _error(type(exc).__name__, exc)
    finally:
        if out.is_dir():
            # kept apart from the manifest so reruns stay byte-identical
            (out / "timing.txt").write_text(f"wall_time_s={time.perf_counter() - start:.3f}\n", encoding="utf-8")
    print(f"{cfg.scenario}: wrote {out}")
    return 0


def cmd_smooth(args) -> int:
    from .runner import smooth_csv

    try:
        text = Path(args.input).read_text(encoding="utf-8")
        result = smooth_csv(text, args.column, args.window)
    except (OSError, KeyError, ValueError) as exc:
        return _error(type(exc).__name__, exc)
    if args.output:
        Path(args.output).write_text(result, encoding="utf-8")
    else:
        sys.stdout.write(result)
    return 0


def cmd_figures(args) -> int:
    from .runner import figure_data

    try:
        names = figure_data(args.inputs, args.out)
    except (OSError, KeyError, ValueError) as exc:
        return _error(type(exc).__name__, exc)
    print(f"wrote {', '.join(names)} to {args.out}")
    return 0


def cmd_presets(args) -> int:
    names = [args.name] if args.name else list(PRESETS)
    for name in names:
        if name not in PRESETS:
            return _error("ConfigError", f"unknown preset {name!r}")
        print(f"# preset {name}")
        for sec in SCHEMA:
            kv = PRESETS[name].get(sec)
            if kv:
                print(f"[{sec}]")
                for k, v in kv.items():
                    print(f"{k} = {v}")
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hoplab", description=__doc__)
    ap.add_argument("--version", action="version", version=f"hoplab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment scenario")
    r.add_argument("--config", help="experiment config file")
    r.add_argument("--preset", help="table preset (overrides the one named in the config)")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("smooth", help="moving-median smoothing of one CSV column")
    s.add_argument("input")
    s.add_argument("--column", required=True)
    s.add_argument("--window", type=int, default=8)
    s.add_argument("--output", "-o")
    s.set_defaults(fn=cmd_smooth)

    f = sub.add_parser("figures", help="plot data from run outputs")
    f.add_argument("inputs", nargs="+", help="run output directories")
    f.add_argument("--out", default="figures")
    f.set_defaults(fn=cmd_figures)

    p = sub.add_parser("presets", help="print table presets")
    p.add_argument("name", nargs="?")
    p.set_defaults(fn=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
