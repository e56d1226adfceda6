"""Command line front end: run presets or scenario files over seed lists and
write plottable CSV/JSONL artifacts plus a JSON summary."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from scipy import stats

from .config import ConfigError, emit_config, parse_config
from .engine import EngineError, simulate
from .metrics import Metrics, prr_range
from .presets import PRESETS, preset
from .scenario import Scenario, ScenarioError

log = logging.getLogger("mcosim")

SCHEMA_VERSION = 1
CBR_COLUMNS = ("seed", "channel", "t", "cbr")
PRR_COLUMNS = ("seed", "msg_type", "bin_m", "prr", "n")
EMIT_CHOICES = ("metrics_csv", "trace_jsonl", "summary_json")
EXIT_INVARIANT = 3


@dataclass
class RunSpec:
    seeds: tuple[int, ...]
    scenario_path: str | None = None
    preset: str | None = None
    out: str = "out"
    emit: frozenset = frozenset(EMIT_CHOICES[::2])
    workers: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if (self.scenario_path is None) == (self.preset is None):
            raise ValueError("give exactly one of a scenario file or a preset")
        if self.params and self.scenario_path is not None:
            raise ValueError("--param applies to presets only; edit the scenario file instead")
        bad = set(self.emit) - set(EMIT_CHOICES)
        if bad:
            raise ValueError(f"unknown emit flags {sorted(bad)}")


def parse_seeds(text: str) -> tuple[int, ...]:
    """'1-5,9' -> (1, 2, 3, 4, 5, 9)"""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("at least one seed is required")
    return tuple(seeds)


def parse_params(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def scenarios_for(spec: RunSpec) -> list[Scenario]:
    trace = "trace_jsonl" in spec.emit
    if spec.preset is not None:
        base = [preset(spec.preset, seed=s, **spec.params) for s in spec.seeds]
    else:
        doc = parse_config(Path(spec.scenario_path).read_text())
        base = [dataclasses.replace(doc, seed=s) for s in spec.seeds]
    return [dataclasses.replace(sc, trace=trace) if trace != sc.trace else sc for sc in base]


def _run_traced(sc: Scenario):
    from .engine import build_scenario

    world = build_scenario(sc)
    m = world.run()
    return m, world.trace


def run_all(scens: list[Scenario], workers: int = 1):
    """Independent runs, optionally in worker processes; results keep input order."""
    if workers > 1 and len(scens) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_traced, scens))
    return [_run_traced(sc) for sc in scens]


# ------------------------------------------------------------------ outputs

def cbr_rows(seed: int, m: Metrics):
    for ch in sorted(m.cbr_series):
        for t, c in m.cbr_series[ch]:
            yield (seed, ch, round(t, 9), c)


def prr_rows(seed: int, m: Metrics):
    for t in sorted(m.prr):
        d = m.prr[t]
        for i, (a, s) in enumerate(zip(d["attempts"], d["success"])):
            if a:
                yield (seed, t, (i + 0.5) * m.bin_m, s / a, a)


def _write_csv(path: Path, columns, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)


def emit_metrics(results: dict[int, Metrics], out: str | Path, flags=EMIT_CHOICES, traces: dict | None = None,
                 summary: dict | None = None) -> list[Path]:
    """Write the artifacts selected by `flags`; returns the files written."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "metrics_csv" in flags:
        for seed, m in results.items():
            p = out / f"cbr_seed{seed}.csv"
            _write_csv(p, CBR_COLUMNS, cbr_rows(seed, m))
            q = out / f"prr_seed{seed}.csv"
            _write_csv(q, PRR_COLUMNS, prr_rows(seed, m))
            c = out / f"counts_seed{seed}.json"
            c.write_text(json.dumps({"header": m.header, "flows": m.flows, "received": m.received,
                                     "decoded": m.decoded, "offloads": len(m.offload_times)}, indent=1, sort_keys=True))
            written += [p, q, c]
    if "trace_jsonl" in flags and traces:
        for seed, events in traces.items():
            p = out / f"trace_seed{seed}.jsonl"
            with p.open("w") as fh:
                for ev in events or ():
                    fh.write(json.dumps(ev, sort_keys=True, default=str) + "\n")
            written.append(p)
    if "summary_json" in flags:
        p = out / "summary.json"
        p.write_text(json.dumps(summary if summary is not None else summarize(results), indent=2, sort_keys=True))
        written.append(p)
    return written


def mean_ci(values) -> dict:
    vals = [float(v) for v in values if v is not None and not math.isnan(v)]
    n = len(vals)
    if n == 0:
        return {"mean": None, "ci95": None, "n": 0}
    mean = statistics.fmean(vals)
    if n == 1:
        return {"mean": mean, "ci95": None, "n": 1}
    half = float(stats.t.ppf(0.975, n - 1)) * statistics.stdev(vals) / math.sqrt(n)
    return {"mean": mean, "ci95": [mean - half, mean + half], "n": n}


def per_seed_stats(m: Metrics) -> dict:
    tot = m.totals()
    row = {
        "generated": tot["generated"],
        "sent": tot["sent"],
        "offloads": tot["offloaded"],
        "withdrawn": sum(tot["withdrawn"].values()),
        "gatekeeper_discarded": tot["gatekeeper_discarded"],
        "received": m.received,
        "decoded": m.decoded,
        "notifications": len(m.notifications),
    }
    for ch in sorted(m.cbr_series):
        row[f"mean_cbr_{ch}"] = m.mean_cbr(ch)
    for t in sorted(m.prr):
        row[f"prr_range_90_{t}"] = prr_range(m, t, 0.9)
    return row


def summarize(results: dict[int, Metrics], name: str = "") -> dict:
    rows = {seed: per_seed_stats(m) for seed, m in results.items()}
    keys = sorted({k for r in rows.values() for k in r})
    return {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "seeds": sorted(results),
        "per_seed": {str(s): r for s, r in rows.items()},
        "stats": {k: mean_ci([r.get(k, math.nan) for r in rows.values()]) for k in keys},
        "violations": {str(s): m.check_invariants() for s, m in results.items() if m.check_invariants()},
        "header": next(iter(results.values())).header if results else {},
    }


def execute(spec: RunSpec) -> tuple[dict, int]:
    scens = scenarios_for(spec)
    outcome = run_all(scens, spec.workers)
    results = {sc.seed: m for sc, (m, _) in zip(scens, outcome)}
    traces = {sc.seed: tr for sc, (_, tr) in zip(scens, outcome)}
    summary = summarize(results, spec.preset or Path(spec.scenario_path).stem)
    emit_metrics(results, spec.out, spec.emit, traces, summary)
    for seed, errs in summary["violations"].items():
        for e in errs:
            log.error("seed %s: %s", seed, e)
    return summary, EXIT_INVARIANT if summary["violations"] else 0


def run_preset(name: str, seeds, out: str = "out", emit=EMIT_CHOICES, workers: int = 1, **params) -> dict:
    spec = RunSpec(tuple(seeds), preset=name, out=out, emit=frozenset(emit), workers=workers, params=params)
    return execute(spec)[0]


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcosim", description="Multi-channel operation simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a preset or scenario file over seeds")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", help="preset name (see list-presets)")
    run.add_argument("--seeds", default="1", help="seed list, e.g. 1-30 or 1,2,5 (default: 1)")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--emit", default="metrics_csv,summary_json",
                     help=f"comma list from {','.join(EMIT_CHOICES)} (default: metrics_csv,summary_json)")
    run.add_argument("--workers", type=int, default=1, help="worker processes for the seed sweep")
    run.add_argument("--param", action="append", metavar="KEY=VALUE",
                     help="preset keyword, e.g. density=150 or offload=false (repeatable)")

    val = sub.add_parser("validate", help="parse a scenario file and print its canonical form")
    val.add_argument("scenario")
    val.add_argument("--quiet", action="store_true")

    sub.add_parser("list-presets", help="print preset names")
    show = sub.add_parser("show-preset", help="print a preset as scenario JSON")
    show.add_argument("name")
    show.add_argument("--param", action="append", metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.cmd == "list-presets":
        for name, fn in PRESETS.items():
            doc = (fn.__doc__ or "").strip().splitlines()
            print(f"{name:26s} {doc[0] if doc else ''}")
        return 0

    if args.cmd == "validate":
        try:
            sc = parse_config(Path(args.scenario).read_text())
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        except ScenarioError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        if not args.quiet:
            print(emit_config(sc))
        return 0

    try:
        params = parse_params(args.param)
        if args.cmd == "show-preset":
            print(emit_config(preset(args.name, **params)))
            return 0
        spec = RunSpec(
            seeds=parse_seeds(args.seeds),
            scenario_path=args.scenario,
            preset=args.preset,
            out=args.out,
            emit=frozenset(e.strip() for e in args.emit.split(",") if e.strip()),
            workers=max(1, args.workers),
            params=params,
        )
        summary, code = execute(spec)
    except (ConfigError, ScenarioError, ValueError, TypeError) as e:
        ap.error(str(e))
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except EngineError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 4
    st = summary["stats"]
    for key in sorted(st):
        s = st[key]
        if s["mean"] is None:
            continue
        ci = "" if s["ci95"] is None else f"  [{s['ci95'][0]:.4g}, {s['ci95'][1]:.4g}]"
        print(f"{key:28s} {s['mean']:.6g}{ci}")
    if code:
        print(f"invariant violations in seeds {sorted(summary['violations'])}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
