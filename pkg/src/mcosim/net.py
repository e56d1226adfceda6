"""Networking & transport side of the station: the GeoNetworking ALI group
handler (single-hop pass-through) and technology-agnostic channel reporting."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Protocol

from .spectrum import ChannelId
from .traffic import Message

LOCAL = "local"
TECH_ITS_G5 = "its-g5"


@dataclass(frozen=True)
class NetConfig:
    staleness_s: float = 1.0
    header_bytes: int = 0
    share_channel_state: bool = False
    report_bytes_per_channel: int = 8

    def __post_init__(self):
        if not self.staleness_s > 0:
            raise ValueError("staleness_s must be > 0")
        if self.header_bytes < 0 or self.report_bytes_per_channel < 0:
            raise ValueError("byte counts must be >= 0")


@dataclass(frozen=True, slots=True)
class ChannelReport:
    channel: ChannelId
    cbr: float
    timestamp: float
    # LOCAL or the reporting neighbour's station id
    source: "str | int" = LOCAL
    group_id: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.cbr <= 1.0):
            raise ValueError(f"cbr {self.cbr} outside [0, 1]")

    @property
    def is_local(self) -> bool:
        return self.source == LOCAL


@dataclass(frozen=True)
class ChannelView:
    entries: Mapping[ChannelId, ChannelReport] = field(default_factory=dict)
    created_at: float = 0.0

    def __contains__(self, channel: ChannelId) -> bool:
        return channel in self.entries

    def __iter__(self) -> Iterator[ChannelId]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, channel: ChannelId) -> ChannelReport | None:
        return self.entries.get(channel)

    def cbr(self, channel: ChannelId, default: float = 0.0) -> float:
        rep = self.entries.get(channel)
        return default if rep is None else rep.cbr


EMPTY_VIEW = ChannelView()


def merge_channel_reports(
    local: Iterable[ChannelReport],
    neighbor: Iterable[ChannelReport],
    now: float,
    staleness_s: float,
) -> ChannelView:
    """Per channel: freshest local report, else freshest neighbour report."""
    horizon = now - staleness_s
    best_local: dict[ChannelId, ChannelReport] = {}
    best_nb: dict[ChannelId, ChannelReport] = {}
    for pool, reports in ((best_local, local), (best_nb, neighbor)):
        for rep in reports:
            if rep.timestamp < horizon or rep.timestamp > now:
                continue
            cur = pool.get(rep.channel)
            if cur is None or rep.timestamp > cur.timestamp:
                pool[rep.channel] = rep
    merged = dict(best_nb)
    merged.update(best_local)
    return ChannelView({ch: merged[ch] for ch in sorted(merged, key=lambda c: c.index)}, now)


@dataclass(slots=True)
class Frame:
    msg: Message
    channel: ChannelId
    priority: int
    size_bytes: int
    ali_id: int
    # piggybacked (channel, cbr, timestamp) observations of the sender
    reports: tuple = ()

    @property
    def header_bytes(self) -> int:
        return self.size_bytes - self.msg.size_bytes


class TxQueue(Protocol):
    def append(self, frame: Frame) -> None: ...


class RoutingError(LookupError):
    """Frame addressed to an ALI that is not bound or not active."""


@dataclass
class Binding:
    group_id: int
    channel: ChannelId
    technology: str
    queue: TxQueue


class GaghBinding:
    """Map ALI id -> (ALI group, channel, technology, tx queue)."""

    def __init__(self):
        self._bindings: dict[int, Binding] = {}

    def bind(self, ali_id: int, group_id: int, channel: ChannelId, technology: str = TECH_ITS_G5, queue: TxQueue | None = None):
        self._bindings[ali_id] = Binding(group_id, channel, technology, deque() if queue is None else queue)

    def unbind(self, ali_id: int):
        self._bindings.pop(ali_id, None)

    def __contains__(self, ali_id: int) -> bool:
        return ali_id in self._bindings

    def __getitem__(self, ali_id: int) -> Binding:
        return self._bindings[ali_id]

    def items(self):
        return self._bindings.items()

    def ali_for_channel(self, channel: ChannelId) -> int | None:
        for ali_id, b in self._bindings.items():
            if b.channel is channel:
                return ali_id
        return None

    @property
    def channels(self) -> list[ChannelId]:
        return [b.channel for b in self._bindings.values()]


def report_overhead_bytes(reports: tuple, cfg: NetConfig) -> int:
    return len(reports) * cfg.report_bytes_per_channel


def gagh_route_down(msg: Message, ali_id: int, bindings: GaghBinding, cfg: NetConfig = NetConfig(), reports: tuple = ()) -> Frame:
    """Wrap `msg` in a frame and enqueue it on the ALI's transmit queue."""
    if ali_id not in bindings:
        raise RoutingError(f"ALI {ali_id} is not bound")
    b = bindings[ali_id]
    frame = Frame(
        msg=msg,
        channel=b.channel,
        priority=msg.priority,
        size_bytes=msg.size_bytes + cfg.header_bytes + report_overhead_bytes(reports, cfg),
        ali_id=ali_id,
        reports=reports,
    )
    b.queue.append(frame)
    return frame


@dataclass(frozen=True, slots=True)
class Delivery:
    msg: Message
    channel: ChannelId
    source_station: int
    reports: tuple = ()


def gagh_route_up(frame: Frame, bindings: GaghBinding | None = None) -> Delivery:
    """Strip the GeoNetworking wrapper of a successfully decoded frame."""
    return Delivery(frame.msg, frame.channel, frame.msg.source_station, frame.reports)


def neighbor_reports_from(delivery: Delivery) -> list[ChannelReport]:
    return [ChannelReport(ch, cbr, ts, delivery.source_station) for ch, cbr, ts in delivery.reports]
