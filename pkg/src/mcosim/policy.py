"""Channel usage mechanisms and association policies.

Each policy turns per-flow airtime demands (or message types) into an
``AssociationMap``: flow id -> (primary channel, ordered alternatives).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .spectrum import ChannelId, ChannelPlan, UsageClass, default_channel_plan
from .traffic import MsgType


class ConfigurationError(ValueError):
    pass


class UsageKind(str, enum.Enum):
    SEQUENTIAL_FILLING = "sequential_filling"
    LOAD_BALANCING = "load_balancing"
    ELASTIC = "elastic"


DEFAULT_CHANNEL_ORDER = (
    ChannelId.SCH0, ChannelId.SCH1, ChannelId.SCH5, ChannelId.SCH2,
    ChannelId.SCH6, ChannelId.SCH4, ChannelId.SCH3,
)


@dataclass(frozen=True)
class UsagePolicy:
    kind: UsageKind = UsageKind.ELASTIC
    fill_threshold: float = 0.6
    channel_order: tuple[ChannelId, ...] = DEFAULT_CHANNEL_ORDER

    def __post_init__(self):
        order = tuple(self.channel_order)
        object.__setattr__(self, "channel_order", order)
        if not (0 < self.fill_threshold <= 1):
            raise ValueError("fill_threshold must be in (0, 1]")
        if len(set(order)) != len(order):
            raise ValueError("channel_order has duplicates")


@dataclass(frozen=True)
class Demand:
    flow_id: str
    airtime: float
    priority: int = 0
    station: int | None = None


@dataclass
class AssociationMap:
    entries: dict[str, tuple[ChannelId, tuple[ChannelId, ...]]] = field(default_factory=dict)
    unplaced: list[str] = field(default_factory=list)

    def __getitem__(self, flow_id: str):
        return self.entries[flow_id]

    def __contains__(self, flow_id: str) -> bool:
        return flow_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if isinstance(other, dict):
            return self.entries == other and not self.unplaced
        return isinstance(other, AssociationMap) and self.entries == other.entries and self.unplaced == other.unplaced

    def primary(self, flow_id: str) -> ChannelId:
        return self.entries[flow_id][0]

    def load(self, demands: Iterable[Demand]) -> dict[ChannelId, float]:
        out: dict[ChannelId, float] = {}
        for d in demands:
            if d.flow_id in self.entries:
                ch = self.entries[d.flow_id][0]
                out[ch] = out.get(ch, 0.0) + d.airtime
        return out


def usable_channels(plan: ChannelPlan | Sequence[ChannelId] | None = None, urban_rail_absent: bool = False) -> list[ChannelId]:
    if plan is None:
        plan = default_channel_plan()
    if isinstance(plan, ChannelPlan):
        return [e.channel for e in plan if urban_rail_absent or e.usage_class is not UsageClass.URBAN_RAIL_PRIORITY]
    chans = list(plan)
    if not urban_rail_absent:
        chans = [c for c in chans if c is not ChannelId.SCH6]
    return chans


def _as_demands(demands) -> list[Demand]:
    out = []
    for i, d in enumerate(demands):
        if isinstance(d, Demand):
            out.append(d)
        else:
            flow, air = d
            out.append(Demand(str(flow), float(air)))
    return out


def assign_sequential(demands, policy: UsagePolicy, urban_rail_absent: bool = False) -> AssociationMap:
    """Fill channels in `policy.channel_order`; a channel is only opened once
    every earlier channel is too full for the flow at hand."""
    ds = _as_demands(demands)
    for d in ds:
        if d.airtime > policy.fill_threshold + 1e-12:
            raise ValueError(f"demand of {d.flow_id} exceeds fill threshold")
    order = [c for c in policy.channel_order if urban_rail_absent or c is not ChannelId.SCH6]
    load = {c: 0.0 for c in order}
    result = AssociationMap()
    for d in sorted(ds, key=lambda d: d.priority):
        for k, ch in enumerate(order):
            if load[ch] + d.airtime <= policy.fill_threshold + 1e-12:
                load[ch] += d.airtime
                result.entries[d.flow_id] = (ch, tuple(order[k + 1:]))
                break
        else:
            result.unplaced.append(d.flow_id)
    return result


def assign_balanced(
    demands,
    plan: ChannelPlan | Sequence[ChannelId] | None = None,
    radio_counts: Mapping[int, int] | None = None,
    capable: Mapping[int, Iterable[ChannelId]] | None = None,
    urban_rail_absent: bool = False,
) -> AssociationMap:
    """Longest demand first onto the least loaded channel the flow's station
    can still reach. A station with ``n`` radios uses at most ``n`` channels.

    Ties: flow id for the processing order, channel index for placement.
    """
    ds = _as_demands(demands)
    chans = sorted(usable_channels(plan, urban_rail_absent), key=lambda c: c.index)
    radio_counts = radio_counts or {}
    capable = {k: set(v) for k, v in (capable or {}).items()}
    load = {c: 0.0 for c in chans}
    used_by: dict[int, list[ChannelId]] = {}
    result = AssociationMap()
    for d in sorted(ds, key=lambda d: (-d.airtime, d.flow_id)):
        options = chans
        if d.station is not None:
            if d.station in capable:
                options = [c for c in options if c in capable[d.station]]
            used = used_by.setdefault(d.station, [])
            limit = radio_counts.get(d.station)
            if limit is not None and len(used) >= limit:
                options = [c for c in options if c in used]
        if not options:
            result.unplaced.append(d.flow_id)
            continue
        ch = min(options, key=lambda c: (load[c], c.index))
        load[ch] += d.airtime
        if d.station is not None and ch not in used_by[d.station]:
            used_by[d.station].append(ch)
        alts = tuple(c for c in sorted(options, key=lambda c: (load[c], c.index)) if c is not ch)
        result.entries[d.flow_id] = (ch, alts)
    return result


def brute_force_min_max_load(airtimes: Sequence[float], n_channels: int) -> float:
    """Optimal makespan by exhaustive assignment (small instances only)."""
    if not airtimes:
        return 0.0
    best = float("inf")
    for assign in itertools.product(range(n_channels), repeat=len(airtimes)):
        loads = [0.0] * n_channels
        for a, c in zip(airtimes, assign):
            loads[c] += a
        best = min(best, max(loads))
    return best


# placeholder profile: Release-1 types stay on SCH0
DEFAULT_PREDEFINED: dict[MsgType, tuple[ChannelId, tuple[ChannelId, ...]]] = {
    MsgType.CAM: (ChannelId.SCH0, ()),
    MsgType.DENM: (ChannelId.SCH0, ()),
    MsgType.CPM: (ChannelId.SCH0, (ChannelId.SCH1,)),
    MsgType.VAM: (ChannelId.SCH0, (ChannelId.SCH5,)),
    MsgType.MCM: (ChannelId.SCH1, (ChannelId.SCH5,)),
    MsgType.PCM: (ChannelId.SCH5, (ChannelId.SCH1,)),
    MsgType.SPAT_MAP: (ChannelId.SCH2, (ChannelId.SCH5,)),
}


def assign_predefined(flows: Iterable[tuple[str, MsgType]], table: Mapping | None = None) -> AssociationMap:
    table = DEFAULT_PREDEFINED if table is None else table
    result = AssociationMap()
    for flow_id, msg_type in flows:
        t = MsgType.parse(msg_type)
        if t not in table:
            raise ConfigurationError(f"no predefined association for {t.value}")
        primary, alts = table[t]
        alts = tuple(alts)
        if primary in alts:
            raise ConfigurationError(f"{t.value}: primary repeated among alternatives")
        result.entries[flow_id] = (primary, alts)
    return result
