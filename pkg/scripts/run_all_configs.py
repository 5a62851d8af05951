"""Run every shipped config and print one status line per criterion.

    python3 scripts/run_all_configs.py [--out results] [--jobs J]
"""

import argparse
import json
import sys
from pathlib import Path

from sheetlab import cli

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", help="parent directory for outputs")
    ap.add_argument("--jobs", type=int)
    args = ap.parse_args(argv)
    worst = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        raw = json.loads(path.read_text())
        cfg = cli.resolve_config(raw, out=str(Path(args.out) / path.stem), jobs=args.jobs)
        code, _ = cli.run(cfg, echo=False)
        wall = json.loads((Path(cfg["out"]) / "manifest.json").read_text())["wall_time_s"]
        status = "ok" if code == 0 else f"exit {code}"
        print(f"criterion {raw['criterion']:>2}  {path.stem:<28} {status:<8} {wall:7.1f}s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
