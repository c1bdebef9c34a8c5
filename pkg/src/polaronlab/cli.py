"""Command-line driver: ``polaronlab <subcommand> [--config PATH] [--seed N] [--out DIR] [--override k=v]``.

Exit status: 0 when every assertion held, 2 on an assertion failure,
1 on a usage or configuration error.  Every run writes ``manifest.json``;
passing that manifest back as ``--config`` reproduces the CSV files
byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

from .config import ConfigError, config_hash, load
from .experiments import RUNNERS

EXIT_OK, EXIT_USAGE, EXIT_ASSERT = 0, 1, 2


def format_value(v) -> str:
    """17 significant digits for floats; integers and strings unchanged."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.16e}"
    try:
        import numpy as np

        if isinstance(v, np.integer):
            return str(int(v))
        if isinstance(v, np.floating):
            return f"{float(v):.16e}"
    except ImportError:  # pragma: no cover
        pass
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=10, cwd=Path(__file__).resolve().parent)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file or a run manifest")
    common.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (default 0)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable")
    parser = argparse.ArgumentParser(prog="polaronlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sub.add_parser(name, parents=[common])
    return parser


def _manifest_seed(path: str | None) -> int | None:
    if not path:
        return None
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError:
        return None
    if text.lstrip().startswith("{"):
        return int(json.loads(text).get("seed", 0))
    return None


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load(args.command, args.config, args.override)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else (_manifest_seed(args.config) or 0)
    if not 0 <= seed < 2**64:
        print("config error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        outcome = RUNNERS[args.command](cfg, seed)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - start
    files = {}
    for name, (header, rows) in outcome.tables.items():
        path = out_dir / f"{name}.csv"
        write_csv(path, header, rows)
        files[path.name] = _sha256(path)
    for name, payload in outcome.payloads.items():
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        files[path.name] = _sha256(path)
    for name, records in outcome.jsonl.items():
        path = out_dir / f"{name}.jsonl"
        path.write_text("".join(json.dumps(_jsonable(r), sort_keys=True) + "\n" for r in records))
        files[path.name] = _sha256(path)
    raw = cfg["_raw"]
    manifest = {
        "subcommand": args.command,
        "config": raw,
        "config_hash": config_hash(raw),
        "seed": seed,
        "git_describe": git_describe(),
        "wall_time_s": wall,
        "ok": outcome.ok,
        "messages": outcome.messages,
        "files": files,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for msg in outcome.messages:
        print(msg, file=sys.stderr)
    print(f"{args.command}: {'ok' if outcome.ok else 'assertion failure'} ({wall:.2f} s) -> {out_dir}")
    return EXIT_OK if outcome.ok else EXIT_ASSERT


def main() -> None:  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
