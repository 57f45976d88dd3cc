"""Command line entry point: one subcommand per experiment family."""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from .config import EXPERIMENTS, parse_config
from .errors import ConfigError, TiltMottError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tiltmott", description="Pair creation in a tilted Mott insulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="JSON config (default: experiment defaults)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
        p.add_argument("--threads", type=int, help="worker threads, 0 = number of CPUs")
        p.add_argument("--tol", type=float, help="override the integrator tolerance")
    sub.add_parser("schema", help="print the JSON schema of the config documents")
    return ap


def load_config(path: Path | None, experiment: str, threads=None, tol=None):
    if path is None:
        text = "{}"
    else:
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, experiment, {"threads": threads, "tol": tol})


def write_outputs(files: dict, out: Path) -> list[Path]:
    """Write every file or none: stage in a temporary directory, then move into place."""
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with tempfile.TemporaryDirectory(dir=out, prefix=".partial-") as tmp:
        for name in sorted(files):
            with open(Path(tmp) / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(files[name])
        try:
            for name in sorted(files):
                dest = out / name
                os.replace(Path(tmp) / name, dest)
                written.append(dest)
        except OSError:
            for p in written:
                p.unlink(missing_ok=True)
            raise
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        import json

        from .config import _Wrapper

        print(json.dumps(_Wrapper.model_json_schema(), indent=2, sort_keys=True))
        return 0
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config, args.command, args.threads, args.tol)
        files = run_experiment(cfg)
        written = write_outputs(files, args.out)
    except TiltMottError as exc:
        print(f"tiltmott {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
