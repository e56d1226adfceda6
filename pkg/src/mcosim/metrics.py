"""Simulation outputs and the PRR-range rule."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

WITHDRAW_REASONS = ("latency_expired", "no_resources", "gatekeeper_preempt", "app_discard")


def new_flow_counts() -> dict:
    return {
        "generated": 0,
        "sent": 0,
        "offloaded": 0,
        "withdrawn": {r: 0 for r in WITHDRAW_REASONS},
        "gatekeeper_discarded": 0,
    }


@dataclass
class Metrics:
    bin_m: float = 10.0
    n_bins: int = 60
    # channel name -> [(t, mean cbr over tuned groups)]
    cbr_series: dict = field(default_factory=dict)
    # msg type -> {"attempts": [...], "success": [...]}
    prr: dict = field(default_factory=dict)
    # template name -> msg type -> same layout, split by the sender's template
    prr_by_template: dict = field(default_factory=dict)
    flows: dict = field(default_factory=dict)
    received: int = 0
    decoded: int = 0
    # msg type -> application deliveries through the MCE
    delivered: dict = field(default_factory=dict)
    fcl_log: list = field(default_factory=list)
    notifications: list = field(default_factory=list)
    rate_changes: list = field(default_factory=list)
    offload_times: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    header: dict = field(default_factory=dict)

    # ---------------------------------------------------------------- access
    def flow(self, key: str) -> dict:
        f = self.flows.get(key)
        if f is None:
            f = self.flows[key] = new_flow_counts()
        return f

    def prr_bins(self, msg_type: str, template: str | None = None) -> list[float]:
        src = self.prr if template is None else self.prr_by_template.get(template, {})
        d = src.get(str(msg_type))
        if d is None:
            return [math.nan] * self.n_bins
        return [s / a if a else math.nan for a, s in zip(d["attempts"], d["success"])]

    def totals(self) -> dict:
        out = new_flow_counts()
        for f in self.flows.values():
            for k in ("generated", "sent", "offloaded", "gatekeeper_discarded"):
                out[k] += f[k]
            for r, n in f["withdrawn"].items():
                out["withdrawn"][r] = out["withdrawn"].get(r, 0) + n
        return out

    def withdrawn_total(self) -> int:
        return sum(self.totals()["withdrawn"].values())

    def mean_cbr(self, channel: str, t_from: float = -math.inf, t_to: float = math.inf) -> float:
        vals = [c for t, c in self.cbr_series.get(channel, []) if t_from <= t <= t_to]
        return sum(vals) / len(vals) if vals else math.nan

    @property
    def first_offload_at(self) -> float | None:
        return self.offload_times[0] if self.offload_times else None

    # ------------------------------------------------------------ invariants
    def conservation_errors(self) -> list[str]:
        errs = []
        for key, f in self.flows.items():
            out = f["sent"] + f["offloaded"] + sum(f["withdrawn"].values()) + f["gatekeeper_discarded"]
            if out != f["generated"]:
                errs.append(f"flow {key}: generated {f['generated']} != accounted {out}")
        return errs

    def check_invariants(self) -> list[str]:
        errs = self.conservation_errors()
        if self.decoded > self.received:
            errs.append(f"decoded {self.decoded} > received {self.received}")
        tables = [self.prr, *self.prr_by_template.values()]
        for t, d in ((t, d) for tab in tables for t, d in tab.items()):
            if any(s > a for a, s in zip(d["attempts"], d["success"])):
                errs.append(f"{t}: a bin decodes more than it receives")
        for ch, series in self.cbr_series.items():
            if any(not (0.0 <= c <= 1.0) for _, c in series):
                errs.append(f"{ch}: CBR outside [0, 1]")
        return errs + list(self.violations)

    # --------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def prr_range_from_bins(prr: Sequence[float], bin_m: float = 10.0, target: float = 0.9) -> float:
    """Largest bin midpoint reached before the first bin below `target`.

    Bins without samples (NaN) carry no evidence and are skipped.
    """
    if not (0.0 < target < 1.0):
        raise ValueError("target must be in (0, 1)")
    best = 0.0
    for i, p in enumerate(prr):
        if p is None or (isinstance(p, float) and math.isnan(p)):
            continue
        if p < target:
            break
        best = (i + 0.5) * bin_m
    return best


def prr_range(metrics: Metrics, msg_type, target: float) -> float:
    return prr_range_from_bins(metrics.prr_bins(str(msg_type)), metrics.bin_m, target)
