"""Command-line runner: ``sheetlab <kind> --config FILE [--seed S] [--out DIR] [--jobs J]``.

Exit status is 0 when the experiment ran and every checked contract held,
1 when the configuration is invalid (nothing is sampled), and 2 when a
contract failed.  A ``manifest.json`` is written in every case.
"""

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ContractViolation, SheetlabError
from .experiments import KINDS
from .rng import check_seed

TOP_FIELDS = {"kind", "criterion", "description", "seed", "trials", "jobs", "out", "params"}

EXIT_OK, EXIT_INVALID, EXIT_CONTRACT = 0, 1, 2


class ConfigError(ValueError):
    pass


def _type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, type(default))


def resolve_config(raw, kind=None, seed=None, out=None, jobs=None):
    """Merge a raw config dict with defaults and overrides, rejecting unknown fields."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    name = raw.get("kind", kind)
    if kind is not None and name != kind:
        raise ConfigError(f"config is for kind {name!r}, not {kind!r}")
    if name not in KINDS:
        raise ConfigError(f"unknown experiment kind {name!r}")
    spec = KINDS[name]
    params = dict(spec.defaults)
    given = raw.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("params must be a JSON object")
    bad = set(given) - set(params)
    if bad:
        raise ConfigError(f"unknown parameters for {name}: {sorted(bad)}")
    for key, value in given.items():
        if not _type_ok(spec.defaults[key], value):
            raise ConfigError(f"parameter {key!r} has the wrong type: {value!r}")
        params[key] = value
    cfg = {
        "kind": name,
        "criterion": raw.get("criterion"),
        "seed": raw.get("seed", 0) if seed is None else seed,
        "trials": raw.get("trials", spec.default_trials),
        "jobs": (raw.get("jobs") or os.cpu_count() or 1) if jobs is None else jobs,
        "out": out or raw.get("out") or f"results/{name}",
        "params": params,
    }
    try:
        check_seed(cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(cfg["trials"], int) or cfg["trials"] < 1:
        raise ConfigError("trials must be a positive integer")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    return cfg


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (tuple, list)):
        return " ".join(_cell(v) for v in x)
    return str(x)


def table_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        x = float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def _dump(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def versions():
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sheetlab": __version__}


def _execute(spec, cfg, out, manifest):
    try:
        plan = spec.prepare(dict(cfg["params"]), cfg["trials"])
    except (ValueError, TypeError, KeyError, SheetlabError) as exc:
        return EXIT_INVALID, "invalid", [f"{type(exc).__name__}: {exc}"], None
    try:
        result = spec.execute(plan, cfg["seed"], cfg["jobs"])
    except ContractViolation as exc:
        return EXIT_CONTRACT, "contract-violation", [str(exc)], None
    failures = list(result.failures)
    status = "contract-violation" if failures else "ok"
    for name, (columns, rows) in result.tables.items():
        (out / f"{name}.csv").write_text(table_csv(columns, rows))
        manifest["files"].append(f"{name}.csv")
    (out / "summary.json").write_text(_dump(
        {"kind": cfg["kind"], "status": status, "failures": failures,
         "summary": result.summary}))
    manifest["files"].append("summary.json")
    return (EXIT_CONTRACT if failures else EXIT_OK), status, failures, result


def run(cfg, echo=True):
    """Run a resolved config; returns ``(exit_code, result_or_None)``."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec = KINDS[cfg["kind"]]
    start = time.perf_counter()
    manifest = {"config": cfg, "seed": cfg["seed"], "versions": versions(), "files": []}

    def finish(status, code, failures):
        manifest.update(status=status, exit_code=code, failures=failures,
                        wall_time_s=time.perf_counter() - start)
        (out / "manifest.json").write_text(_dump(manifest))

    try:
        code, status, failures, result = _execute(spec, cfg, out, manifest)
    except BaseException as exc:
        finish("error", None, [f"{type(exc).__name__}: {exc}"])
        raise
    finish(status, code, failures)
    if echo:
        label = cfg["kind"] + (f" (criterion {cfg['criterion']})" if cfg["criterion"] else "")
        print(f"{label}: {status.upper()}  [{out}]")
        for f in failures:
            print(f"  {f}", file=sys.stderr)
    return code, result


def describe(kind=None):
    names = [kind] if kind else list(KINDS)
    return [{"kind": n, "description": KINDS[n].description,
             "criteria": list(KINDS[n].criteria), "default_trials": KINDS[n].default_trials,
             "params": KINDS[n].defaults} for n in names]


def print_listing(kind=None, as_json=False):
    if kind is not None and kind not in KINDS:
        print(f"unknown experiment kind {kind!r}", file=sys.stderr)
        return EXIT_INVALID
    rows = describe(kind)
    if as_json:
        sys.stdout.write(_dump(rows))
        return EXIT_OK
    for r in rows:
        crit = ", ".join(map(str, r["criteria"]))
        print(f"{r['kind']:<16} criteria {crit:<8} {r['description']}")
        if kind:
            for key, value in r["params"].items():
                print(f"    {key} = {json.dumps(value)}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sheetlab", description=__doc__.splitlines()[0])
    parser.add_argument("--list", action="store_true", help="list experiment kinds and exit")
    parser.add_argument("--json", action="store_true", help="with --list, emit JSON")
    sub = parser.add_subparsers(dest="command")
    lst = sub.add_parser("list", help="describe experiment kinds")
    lst.add_argument("kind", nargs="?")
    lst.add_argument("--json", action="store_true")

    def common(p):
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed (0..2^64-1)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--list", action="store_true", help="show this kind's parameters")

    common(sub.add_parser("run", help="run the kind named inside --config"))
    for name, spec in KINDS.items():
        common(sub.add_parser(name, help=spec.description))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        if args.list:
            return print_listing(as_json=args.json)
        parser.print_help()
        return EXIT_INVALID
    if args.command == "list":
        return print_listing(args.kind, args.json)
    kind = None if args.command == "run" else args.command
    if args.list:
        return print_listing(kind)
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return EXIT_INVALID
    elif kind is None:
        print("run needs --config", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = resolve_config(raw, kind, args.seed, args.out, args.jobs)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        out = Path(args.out or raw.get("out") or "results/invalid") if isinstance(raw, dict) \
            else Path(args.out or "results/invalid")
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(_dump(
            {"config": raw, "seed": args.seed, "versions": versions(), "status": "invalid",
             "exit_code": EXIT_INVALID, "failures": [str(exc)], "files": []}))
        return EXIT_INVALID
    code, _ = run(cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
