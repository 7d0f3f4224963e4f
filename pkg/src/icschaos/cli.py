"""Command-line front end: validate, run, sweep, demo-tec.

Experiments are fully automated; the CLI only ingests a config, executes,
and emits machine-readable reports (JSON lines for results, CSV for
trajectories).  Exit codes map one-to-one onto verdicts so shell pipelines
can branch on the outcome: 0 held, 2 disproved, 3 aborted, 4 no steady
state, 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import yaml

from .config import (
    ConfigError,
    build_spec,
    config_hash,
    demo_configs,
    dump_config,
    get_config_value,
    load_config,
    set_config_value,
    validate_config,
)
from .control import Infeasible
from .experiment import (
    BatchError,
    batch_run,
    exit_code_for,
    result_record,
    result_to_json,
    run_experiment,
)

_SUMMARY_FIELDS = (
    "value",
    "label",
    "verdict",
    "fraction_violating",
    "violation_integral",
    "shutdown_events",
    "t_dip",
    "t_recover",
    "restoration_ratio",
)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load(path: str):
    try:
        return load_config(path)
    except FileNotFoundError:
        raise ConfigError([f"{path}: no such file"])
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not parseable ({exc})"])


def write_trajectory_csv(traj, path: str):
    """Fixed header: t, each state variable, each input, each KPI."""
    names = list(traj.columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for i in range(traj.t.shape[0]):
            writer.writerow(
                [repr(float(traj.t[i]))]
                + [repr(float(traj.columns[n][i])) for n in names]
            )


def _write_jsonl(records, path: str):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _write_run_outputs(result, out_dir: str, cfg_hash: str, preflight: dict):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.jsonl"), "w") as fh:
        fh.write(result_to_json(result, cfg_hash, extra=preflight) + "\n")
    write_trajectory_csv(result.trajectory, os.path.join(out_dir, "trajectory.csv"))
    _write_jsonl(result.event_log, os.path.join(out_dir, "events.jsonl"))
    _write_jsonl(result.message_log, os.path.join(out_dir, "messages.jsonl"))


def _summary_row(result, value=None):
    if isinstance(result, BatchError):
        row = {field: None for field in _SUMMARY_FIELDS}
        row.update(value=value, label=result.label, verdict="error")
        return row
    blast = result.blast
    res = result.resilience
    return {
        "value": value,
        "label": result.label,
        "verdict": result.verdict.kind,
        "fraction_violating": blast.fraction_violating if blast else None,
        "violation_integral": blast.violation_integral if blast else None,
        "shutdown_events": blast.shutdown_events if blast else None,
        "t_dip": res.t_dip if res else None,
        "t_recover": res.t_recover if res else None,
        "restoration_ratio": res.restoration_ratio if res else None,
    }


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _print_table(rows, fields):
    cells = [[_cell(r[f]) for f in fields] for r in rows]
    widths = [
        max(len(f), *(len(row[i]) for row in cells)) if cells else len(f)
        for i, f in enumerate(fields)
    ]
    print("  ".join(f.ljust(w) for f, w in zip(fields, widths)).rstrip())
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())


def _emit_rows(rows, fields, fmt: str):
    if fmt == "json":
        for row in rows:
            print(json.dumps({f: row[f] for f in fields}, sort_keys=True))
    elif fmt == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_cell(row[f]) for f in fields])
    else:
        _print_table(rows, fields)


def cmd_validate(args) -> int:
    try:
        with open(args.config, "r") as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        return _fail(str(exc))
    errors = validate_config(doc)
    if errors:
        for line in errors:
            print(line)
        return 1
    print("ok")
    return 0


def cmd_run(args) -> int:
    try:
        doc = _load(args.config)
    except ConfigError as exc:
        for line in exc.errors:
            print(line, file=sys.stderr)
        return 1
    try:
        spec, preflight = build_spec(doc, seed_override=args.seed)
    except Infeasible as exc:
        return _fail(f"Infeasible: {exc}")
    result = run_experiment(spec)
    cfg_hash = config_hash(doc)
    try:
        _write_run_outputs(result, args.out, cfg_hash, preflight)
    except OSError as exc:
        return _fail(str(exc))
    rec = result_record(result, cfg_hash, extra=preflight)
    if args.format == "json":
        print(json.dumps(rec, sort_keys=True))
    elif args.format == "csv":
        _emit_rows([_summary_row(result)], _SUMMARY_FIELDS[1:], "csv")
    else:
        print(f"label:     {result.label}")
        print(f"verdict:   {result.verdict.kind}")
        if result.baseline:
            print(
                f"baseline:  level {result.baseline.level:.6g}"
                f" fixed over [{result.baseline.t_start:g}, {result.baseline.t_end:g}] min"
            )
        if result.injection_start is not None:
            print(f"injection: t = {result.injection_start:g} min")
        if result.blast:
            b = result.blast
            print(
                f"blast:     fraction {b.fraction_violating:.6g}, integral"
                f" {b.violation_integral:.6g}, shutdown events {b.shutdown_events}"
            )
        if result.resilience:
            r = result.resilience
            rec_t = "-" if r.t_recover is None else f"{r.t_recover:.6g}"
            print(
                f"recovery:  dip {r.minimum_level:.6g} at t {r.t_dip:.6g},"
                f" recovered at {rec_t}, restoration {r.restoration_ratio:.6g}"
            )
        print(f"outputs:   {args.out}/")
    return exit_code_for(result.verdict)


def _parse_values(raw: str):
    vals = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            continue
        vals.append(float(tok))
    return vals


def cmd_sweep(args) -> int:
    try:
        doc = _load(args.config)
    except ConfigError as exc:
        for line in exc.errors:
            print(line, file=sys.stderr)
        return 1
    try:
        get_config_value(doc, args.param)
    except KeyError:
        return _fail(f"no config key at path {args.param!r}")
    try:
        values = _parse_values(args.values)
    except ValueError as exc:
        return _fail(f"bad --values: {exc}")

    specs = []
    hashes = []
    preflights = []
    for v in values:
        patched = set_config_value(doc, args.param, v)
        patched["label"] = f"{doc.get('label', 'experiment')}[{args.param}={v:g}]"
        errors = validate_config(patched)
        if errors:
            return _fail(f"{args.param}={v:g} invalidates config: {errors[0]}")
        try:
            spec, preflight = build_spec(patched, seed_override=args.seed)
        except Infeasible as exc:
            return _fail(f"Infeasible at {args.param}={v:g}: {exc}")
        specs.append(spec)
        hashes.append(config_hash(patched))
        preflights.append(preflight)

    results = batch_run(specs, parallelism=args.parallel)
    rows = [_summary_row(res, value=v) for v, res in zip(values, results)]
    _emit_rows(rows, _SUMMARY_FIELDS, args.format)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "results.jsonl"), "w") as fh:
            for res, h, pf in zip(results, hashes, preflights):
                fh.write(result_to_json(res, h, extra=pf) + "\n")
        for res in results:
            if not isinstance(res, BatchError):
                write_trajectory_csv(
                    res.trajectory,
                    os.path.join(args.out, f"trajectory_{res.label}.csv"),
                )
    if any(isinstance(r, BatchError) for r in results):
        return 1
    return 0


def cmd_demo_tec(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    written = []
    for name, doc in demo_configs().items():
        path = os.path.join(args.out, f"{name}.yaml")
        with open(path, "w") as fh:
            fh.write(dump_config(doc))
        written.append(path)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icschaos",
        description="Deterministic chaos experiments on a simulated "
        "network-controlled process plant.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="schema-check a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_run.add_argument(
        "--format", choices=("json", "csv", "table"), default="table"
    )
    p_run.set_defaults(func=cmd_run)

    p_sw = sub.add_parser("sweep", help="run a one-parameter sweep")
    p_sw.add_argument("config")
    p_sw.add_argument(
        "--param", required=True,
        help="dotted config path, list indices numeric (events.0.added_latency_min)",
    )
    p_sw.add_argument(
        "--values", required=True, help="comma-separated numeric values"
    )
    p_sw.add_argument("--out", default=None, help="optional output directory")
    p_sw.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_sw.add_argument("--parallel", type=int, default=1)
    p_sw.add_argument(
        "--format", choices=("json", "csv", "table"), default="table"
    )
    p_sw.set_defaults(func=cmd_sweep)

    p_demo = sub.add_parser(
        "demo-tec", help="write the built-in surrogate-plant scenario configs"
    )
    p_demo.add_argument("--out", default="demo", help="output directory")
    p_demo.set_defaults(func=cmd_demo_tec)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
