"""Message catalog, periodic message generators and channel-demand arithmetic."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from .spectrum import RadioConfig, airtime_s

DEFAULT_OVERHEAD_S = RadioConfig().frame_overhead_s


class MsgType(str, enum.Enum):
    CAM = "CAM"
    DENM = "DENM"
    SPAT_MAP = "SPAT_MAP"
    VAM = "VAM"
    PCM = "PCM"
    CPM = "CPM"
    MCM = "MCM"

    @classmethod
    def parse(cls, name: "str | MsgType") -> "MsgType":
        if isinstance(name, MsgType):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown message type {name!r}") from None

    def __str__(self) -> str:
        return self.value


class Release(str, enum.Enum):
    R1 = "R1"
    R2 = "R2"


@dataclass(frozen=True)
class TrafficProfile:
    msg_type: MsgType
    rate_hz: tuple[float, float]
    size_bytes: tuple[int, int]
    priority: int
    release: Release
    latency_budget_s: float

    def __post_init__(self):
        lo, hi = self.rate_hz
        if not (0 < lo <= hi):
            raise ValueError(f"{self.msg_type}: rate range must satisfy 0 < min <= max")
        lo, hi = self.size_bytes
        if not (0 < lo <= hi):
            raise ValueError(f"{self.msg_type}: size range must satisfy 0 < min <= max")
        if not self.latency_budget_s > 0:
            raise ValueError(f"{self.msg_type}: latency budget must be > 0")

    @property
    def max_rate_hz(self) -> float:
        return self.rate_hz[1]

    def clamp_rate(self, rate_hz: float) -> float:
        return min(max(rate_hz, self.rate_hz[0]), self.rate_hz[1])


def _p(t, rate, size, prio, rel, budget):
    return TrafficProfile(t, rate, size, prio, rel, budget)


# rates and sizes as estimated for Release 2; priorities/budgets are local choices
CATALOG: dict[MsgType, TrafficProfile] = {
    MsgType.CAM: _p(MsgType.CAM, (1.0, 10.0), (400, 400), 1, Release.R1, 0.1),
    MsgType.DENM: _p(MsgType.DENM, (1.0, 10.0), (350, 1000), 1, Release.R1, 0.2),
    MsgType.SPAT_MAP: _p(MsgType.SPAT_MAP, (10.0, 50.0), (1200, 1200), 2, Release.R2, 0.2),
    MsgType.VAM: _p(MsgType.VAM, (1.0, 10.0), (350, 350), 2, Release.R2, 0.1),
    MsgType.PCM: _p(MsgType.PCM, (50.0, 50.0), (400, 400), 0, Release.R2, 0.1),
    MsgType.CPM: _p(MsgType.CPM, (1.0, 10.0), (1000, 1000), 3, Release.R2, 0.2),
    MsgType.MCM: _p(MsgType.MCM, (1.0, 10.0), (1000, 1000), 3, Release.R2, 0.2),
}


def catalog_profile(msg_type, catalog: Mapping[MsgType, TrafficProfile] | None = None) -> TrafficProfile:
    catalog = CATALOG if catalog is None else catalog
    try:
        return catalog[MsgType.parse(msg_type)]
    except (KeyError, ValueError):
        raise LookupError(f"message type {msg_type!r} not in catalog") from None


def catalog_with_overrides(overrides: Mapping[str, Mapping] | None) -> dict[MsgType, TrafficProfile]:
    """Copy of the default catalog with per-type field overrides applied."""
    out = dict(CATALOG)
    for name, fields in (overrides or {}).items():
        t = MsgType.parse(name)
        changes = {}
        for key, value in fields.items():
            if key in ("rate_hz", "size_bytes"):
                lo, hi = value
                changes[key] = (float(lo), float(hi)) if key == "rate_hz" else (int(lo), int(hi))
            elif key == "priority":
                changes[key] = int(value)
            elif key == "latency_budget_s":
                changes[key] = float(value)
            elif key == "release":
                changes[key] = Release(value)
            else:
                raise ValueError(f"traffic.catalog.{name}: unknown key {key!r}")
        out[t] = replace(out.get(t, CATALOG[t]), **changes)
    return out


@dataclass(frozen=True, slots=True)
class Message:
    id: int
    msg_type: MsgType
    flow_id: str
    source_station: int
    size_bytes: int
    created_at: float
    latency_budget: float
    priority: int

    def age(self, now: float) -> float:
        return now - self.created_at

    def expired(self, now: float) -> bool:
        return now - self.created_at > self.latency_budget


class SchedulingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorState:
    """Message generating entity for one flow.

    Sizes within a profile range are drawn from a stream keyed by
    ``rng_stream`` and the emission counter, so the state stays a value.
    """

    profile: TrafficProfile
    current_rate_hz: float
    next_fire_at: float
    rng_stream: tuple[int, ...] = (0,)
    flow_id: str = "flow"
    flow_uid: int = 0
    source_station: int = 0
    emitted: int = 0

    def __post_init__(self):
        lo, hi = self.profile.rate_hz
        if not (lo <= self.current_rate_hz <= hi):
            raise ValueError(f"rate {self.current_rate_hz} outside {self.profile.rate_hz}")

    @property
    def period_s(self) -> float:
        return 1.0 / self.current_rate_hz


def make_generator(profile: TrafficProfile, rate_hz: float | None = None, start_at: float = 0.0, **kw) -> GeneratorState:
    rate = profile.max_rate_hz if rate_hz is None else profile.clamp_rate(rate_hz)
    return GeneratorState(profile, rate, start_at, **kw)


def _draw_size(gen: GeneratorState) -> int:
    lo, hi = gen.profile.size_bytes
    if lo == hi:
        return lo
    rng = np.random.default_rng([*gen.rng_stream, gen.emitted])
    return int(rng.integers(lo, hi + 1))


def next_generation(gen: GeneratorState, now: float) -> tuple[Message, GeneratorState]:
    if now < gen.next_fire_at - 1e-12:
        raise SchedulingError(f"generator {gen.flow_id} fired at {now} before {gen.next_fire_at}")
    msg = Message(
        id=(gen.flow_uid << 32) | gen.emitted,
        msg_type=gen.profile.msg_type,
        flow_id=gen.flow_id,
        source_station=gen.source_station,
        size_bytes=_draw_size(gen),
        created_at=now,
        latency_budget=gen.profile.latency_budget_s,
        priority=gen.profile.priority,
    )
    return msg, replace(gen, next_fire_at=gen.next_fire_at + gen.period_s, emitted=gen.emitted + 1)


def rate_adapt(gen: GeneratorState, requested_rate_hz: float) -> GeneratorState:
    if not requested_rate_hz > 0:
        raise ValueError(f"requested rate must be > 0, got {requested_rate_hz}")
    rate = gen.profile.clamp_rate(requested_rate_hz)
    if rate == gen.current_rate_hz:
        return gen
    return replace(gen, current_rate_hz=rate)


def channel_demand(
    profiles: Iterable[tuple[TrafficProfile, int, float]],
    capacity: float,
    datarate_bps: float,
    overhead_s: float = DEFAULT_OVERHEAD_S,
    size: str = "max",
) -> float:
    """Offered airtime of all listed flows in units of usable 10 MHz channels.

    Each entry is ``(profile, stations_in_range, rate_hz)``; ``size`` picks
    the profile's ``"max"``, ``"min"`` or ``"mean"`` frame size.
    """
    if not (0 < capacity <= 1):
        raise ValueError("capacity must be in (0, 1]")
    if not datarate_bps > 0:
        raise ValueError("datarate_bps must be > 0")
    radio = RadioConfig(datarate_bps=datarate_bps, frame_overhead_s=overhead_s)
    total = 0.0
    for profile, stations, rate in profiles:
        lo, hi = profile.size_bytes
        nbytes = {"max": hi, "min": lo, "mean": (lo + hi) / 2}[size]
        total += stations * rate * airtime_s(nbytes, radio)
    return total / capacity
