"""Command line: run a scenario file, run a preset, sweep a grid, list presets.

Exit status is 0 on success, 1 when a preset check fails and 2 for usage or
validation errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import yaml

from . import presets
from .metrics import dumps_summary, write_outputs
from .scenario import Run, ScenarioError, from_dict, load_raw

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read_scenario(path: str) -> tuple[dict, dict]:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    raw, lines = load_raw(text, source=path)
    raw.setdefault("name", os.path.splitext(os.path.basename(path))[0])
    return raw, lines


def _run_dir(root: str, name: str, seed: int) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
    return os.path.join(root, f"{safe}-seed{seed}")


def _headline(summary: dict) -> str:
    out = [f"scenario {summary['scenario']} seed {summary['seed']}: utilization {summary['utilization']:.3f}"]
    for name, f in summary["flows"].items():
        out.append(f"  {name:<12} goodput {f['goodput_mbps']:8.2f} Mbps  throughput {f['throughput_mbps']:8.2f} Mbps"
                   f"  ofo mean {f['ofo_mean']:7.2f}")
    if "fairness" in summary:
        out.append(f"  fairness {summary['fairness']:.3f}")
    return "\n".join(out)


def cmd_run(args) -> int:
    raw, lines = _read_scenario(args.file)
    scn = from_dict(raw, args.set or (), args.seed, lines, args.file)
    run = Run(scn)
    summary = run.run()
    outdir = _run_dir(args.out, scn.name, scn.seed)
    paths = write_outputs(run.recorder, summary, outdir)
    if args.json:
        sys.stdout.write(dumps_summary(summary))
    else:
        print(_headline(summary))
        print(f"wrote {paths['summary']} and {len(paths['series'])} series")
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.name not in presets.PRESETS:
        raise UsageError(f"unknown preset {args.name!r}; available: {', '.join(presets.preset_names())}")
    outdir = None
    if not args.no_output:
        outdir = os.path.join(args.out, f"{args.name}-seed{args.seed}")
    result = presets.run_preset(args.name, args.seed, args.set or (), args.jobs, outdir)
    print(result.report())
    if outdir:
        print(f"outputs in {outdir}")
    return EXIT_OK if result.ok else EXIT_CHECK


def parse_grid(specs) -> list[tuple[str, list[str]]]:
    """``key=v1,v2`` entries, separated by ';' or given as repeated options."""
    axes = []
    for spec in specs or ():
        for part in spec.split(";"):
            part = part.strip()
            if not part:
                continue
            key, eq, values = part.partition("=")
            vals = [v.strip() for v in values.split(",") if v.strip()]
            if not eq or not key.strip() or not vals:
                raise UsageError(f"bad grid entry {part!r}; expected key=v1,v2,...")
            axes.append((key.strip(), vals))
    if not axes:
        raise UsageError("empty grid")
    return axes


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, dash, hi = part.partition("-")
        try:
            if dash and lo:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed list {text!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _flatten(summary: dict) -> dict:
    row = {"utilization": summary["utilization"]}
    if "fairness" in summary:
        row["fairness"] = summary["fairness"]
    for name, f in summary["flows"].items():
        for k in ("goodput_mbps", "throughput_mbps", "ofo_mean", "ofo_time_mean", "rtt_mean_ms"):
            row[f"{name}.{k}"] = f[k]
        for i, s in enumerate(f["subflows"]):
            row[f"{name}.sub{i}.send_rate_mbps"] = s["send_rate_mbps"]
    return row


def _sweep_one(job) -> dict:
    raw, lines, source, assignments, seed = job
    row = {"seed": seed, **{k: v for k, v in assignments}, "error": ""}
    try:
        scn = from_dict(raw, [f"{k}={v}" for k, v in assignments], seed, lines, source)
        row.update(_flatten(Run(scn).run()))
    except Exception as e:  # one bad point must not stop the sweep
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def cmd_sweep(args) -> int:
    axes = parse_grid(args.grid)
    seeds = parse_seeds(args.seeds)
    raw, lines = _read_scenario(args.file)
    keys = [k for k, _ in axes]
    jobs = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        for seed in seeds:
            jobs.append((raw, lines, args.file, list(zip(keys, combo)), seed))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    fields: list[str] = []
    for row in rows:
        fields += [k for k in row if k not in fields]
    out = args.output or os.path.join(args.out, f"{raw['name']}-sweep.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} runs ({failed} failed) -> {out}")
    return EXIT_OK


def cmd_list(args) -> int:
    width = max(len(n) for n in presets.preset_names())
    for name in presets.preset_names():
        p = presets.PRESETS[name]
        print(f"{name:<{width}}  {len(p.build(1)):>3} runs  {p.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mpsim", description="Packet-level multipath transport simulator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed_default: Optional[int]):
        p.add_argument("--seed", type=int, default=seed_default, help="random seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario field, e.g. links.p1.loss=1%% (repeatable)")
        p.add_argument("--out", default="results", help="output root directory (default: results)")

    p = sub.add_parser("run", help="run one scenario file")
    p.add_argument("file")
    common(p, None)
    p.add_argument("--json", action="store_true", help="print the summary JSON instead of a digest")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run a named experiment batch and its checks")
    p.add_argument("name")
    common(p, 1)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--no-output", action="store_true", help="skip writing per-run files")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("sweep", help="run a scenario over a parameter grid and seeds")
    p.add_argument("file")
    p.add_argument("--grid", action="append", required=True, metavar="SPEC",
                   help="key=v1,v2[;key2=...] (repeatable)")
    p.add_argument("--seeds", default="1", help="comma list or ranges, e.g. 1,2,5-7")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results")
    p.add_argument("--output", help="aggregate CSV path (default: <out>/<name>-sweep.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("list-presets", help="show available presets")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, UsageError, yaml.YAMLError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
