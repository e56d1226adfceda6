"""Access layer: ALIs and ALI groups, CSMA/CA medium access, per-group CBR
measurement and the duty-cycle gatekeeper."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .net import LOCAL, TECH_ITS_G5, ChannelReport, Frame
from .spectrum import ChannelId

EPS = 1e-9


class ConfigurationError(ValueError):
    pass


@dataclass
class ALI:
    id: int
    channel: ChannelId | None
    technology: str = TECH_ITS_G5
    datarate_bps: float = 6e6
    decode_threshold_dB: float = 5.0
    tx_power_dBm: float = 23.0
    active: bool = True


@dataclass
class ALIGroup:
    """All ALIs sharing one transceiver; the transceiver sits on one channel."""

    id: int
    transceiver_id: int
    channel: ChannelId | None = None
    members: list[ALI] = field(default_factory=list)
    capable_channels: frozenset = frozenset(ChannelId)
    cbr_window_s: float = 0.1
    busy_time_accumulator: float = 0.0
    queue: deque = field(default_factory=deque)
    tuned_at: float = 0.0

    @property
    def active(self) -> bool:
        return self.channel is not None and any(a.active for a in self.members)

    @property
    def technology(self) -> str:
        return self.members[0].technology if self.members else TECH_ITS_G5

    def active_ali(self) -> ALI | None:
        for a in self.members:
            if a.active:
                return a
        return None


class AliCommandKind(str, enum.Enum):
    TUNE = "tune"
    ACTIVATE = "activate"
    DEACTIVATE = "deactivate"


@dataclass(frozen=True)
class AliCommand:
    kind: AliCommandKind
    transceiver_id: int
    channel: ChannelId | None = None

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "transceiver": self.transceiver_id, "channel": None if self.channel is None else self.channel.name}


def configure_ali_group(
    groups: dict[int, ALIGroup], cmds: Iterable[AliCommand], now: float = 0.0
) -> tuple[dict[int, ALIGroup], list[Frame]]:
    """Apply configuration commands in place. Returns the groups and the frames
    flushed from retuned or deactivated groups (to be withdrawn upstream)."""
    flushed: list[Frame] = []
    for cmd in cmds:
        group = groups.get(cmd.transceiver_id)
        if group is None:
            raise ConfigurationError(f"no transceiver {cmd.transceiver_id}")
        if cmd.kind is AliCommandKind.TUNE:
            if cmd.channel is None or cmd.channel not in group.capable_channels:
                raise ConfigurationError(f"transceiver {cmd.transceiver_id} cannot tune to {cmd.channel}")
            if group.channel is cmd.channel:
                for a in group.members:
                    a.active = True
                continue
            flushed.extend(group.queue)
            group.queue.clear()
            group.channel = cmd.channel
            group.busy_time_accumulator = 0.0
            group.tuned_at = now
            for a in group.members:
                a.channel = cmd.channel
                a.active = True
        elif cmd.kind is AliCommandKind.ACTIVATE:
            for a in group.members:
                a.active = True
        else:
            flushed.extend(group.queue)
            group.queue.clear()
            for a in group.members:
                a.active = False
    return groups, flushed


def measure_cbr(group: ALIGroup, window_end: float) -> ChannelReport:
    if not group.active:
        raise ConfigurationError(f"group {group.id} is not active")
    cbr = min(max(group.busy_time_accumulator / group.cbr_window_s, 0.0), 1.0)
    group.busy_time_accumulator = 0.0
    return ChannelReport(group.channel, cbr, window_end, LOCAL, group.id)


# ---------------------------------------------------------------- gatekeeper

DEFAULT_BANDS = ((0.30, 0.03), (0.40, 0.015), (0.50, 0.01), (1.0, 0.005))


class Verdict(str, enum.Enum):
    ADMIT = "admit"
    DISCARD = "discard"


@dataclass(frozen=True)
class GatekeeperConfig:
    bands: tuple[tuple[float, float], ...] = DEFAULT_BANDS
    window_s: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        bands = tuple((float(b), float(d)) for b, d in self.bands)
        object.__setattr__(self, "bands", bands)
        if not bands:
            raise ValueError("gatekeeper needs at least one band")
        bounds = [b for b, _ in bands]
        if bounds != sorted(bounds) or len(set(bounds)) != len(bounds):
            raise ValueError("gatekeeper bands must be sorted ascending by CBR bound")
        duties = [d for _, d in bands]
        if any(not (0.0 < d <= 1.0) for d in duties):
            raise ValueError("duty cycles must lie in (0, 1]")
        if any(b > a for a, b in zip(duties, duties[1:])):
            raise ValueError("duty cycles must not grow with CBR")
        if not self.window_s > 0:
            raise ValueError("window_s must be > 0")

    def max_duty(self, cbr: float) -> float:
        for bound, duty in self.bands:
            if cbr <= bound:
                return duty
        return self.bands[-1][1]


@dataclass
class GatekeeperState:
    config: GatekeeperConfig = field(default_factory=GatekeeperConfig)
    ledger: deque = field(default_factory=deque)
    used_s: float = 0.0

    def _slide(self, now: float):
        horizon = now - self.config.window_s
        while self.ledger and self.ledger[0][0] <= horizon + EPS:
            _, a = self.ledger.popleft()
            self.used_s -= a
        if not self.ledger:
            self.used_s = 0.0

    def duty_used(self, now: float) -> float:
        self._slide(now)
        return self.used_s / self.config.window_s


def gatekeeper_admit(state: GatekeeperState, airtime: float, cbr: float, now: float) -> Verdict:
    """Admit iff the sliding-window duty after this frame stays within the
    band selected by `cbr`. A discard leaves the ledger untouched."""
    if not state.config.enabled:
        return Verdict.ADMIT
    state._slide(now)
    budget = state.config.max_duty(cbr) * state.config.window_s
    if state.used_s + airtime > budget + EPS:
        return Verdict.DISCARD
    state.ledger.append((now, airtime))
    state.used_s += airtime
    return Verdict.ADMIT


# ----------------------------------------------------------------- CSMA/CA


@dataclass(frozen=True)
class MacTiming:
    slot_s: float = 13e-6
    sifs_s: float = 32e-6
    aifsn_base: int = 2
    aifsn_step: int = 2
    cw_min: int = 15
    cw_max: int = 1023

    def __post_init__(self):
        if not (self.slot_s > 0 and self.sifs_s >= 0):
            raise ValueError("slot must be > 0 and SIFS >= 0")
        if not (0 < self.cw_min <= self.cw_max):
            raise ValueError("need 0 < cw_min <= cw_max")

    def aifs(self, priority: int) -> float:
        aifsn = self.aifsn_base + self.aifsn_step * max(0, priority - 1)
        return self.sifs_s + aifsn * self.slot_s


class CsmaMac:
    """Broadcast CSMA/CA for one transceiver.

    The owner reports medium transitions via ``on_busy``/``on_idle`` and
    calls ``on_fire`` when a scheduled attempt comes due. Methods that can
    (re)schedule an attempt return ``(fire_at, token)`` or ``None``; a fire
    whose token is stale must be ignored. Broadcast frames are never
    acknowledged, so the contention window stays at ``cw_min``.
    """

    __slots__ = ("timing", "rng", "queue", "head", "backoff", "medium_busy", "ref",
                 "fire_at", "token", "transmitting", "_redraw_on_busy", "draws")

    def __init__(self, timing: MacTiming = MacTiming(), rng=None):
        self.timing = timing
        self.rng = rng
        self.queue: deque = deque()
        self.head: Frame | None = None
        self.backoff = 0
        self.medium_busy = False
        self.ref = 0.0
        self.fire_at: float | None = None
        self.token = 0
        self.transmitting = False
        self._redraw_on_busy = False
        self.draws = 0

    @property
    def cw(self) -> int:
        return self.timing.cw_min

    @property
    def pending(self) -> bool:
        return self.head is not None or bool(self.queue)

    def _draw(self) -> int:
        self.draws += 1
        return self.rng.randint(0, self.cw)

    def _schedule(self):
        self.token += 1
        self.fire_at = self.ref + self.timing.aifs(self.head.priority) + self.backoff * self.timing.slot_s
        return self.fire_at, self.token

    def _next_head(self, now: float, after_busy: bool):
        self.head = self.queue.popleft()
        if self.medium_busy or after_busy:
            self.backoff = self._draw()
            self._redraw_on_busy = False
        else:
            self.backoff = 0
            self._redraw_on_busy = True
        if self.medium_busy:
            self.fire_at = None
            return None
        self.ref = now
        return self._schedule()

    def enqueue(self, frame: Frame, now: float):
        self.queue.append(frame)
        if self.head is None and not self.transmitting:
            return self._next_head(now, after_busy=False)
        return None

    def on_busy(self, now: float):
        self.medium_busy = True
        if self.head is None or self.fire_at is None or self.transmitting:
            return None
        if self.fire_at - now <= EPS:
            # same-slot start: cannot sense it in time
            return None
        countdown_start = self.ref + self.timing.aifs(self.head.priority)
        if now > countdown_start:
            elapsed = int((now - countdown_start) / self.timing.slot_s + EPS)
            self.backoff = max(0, self.backoff - elapsed)
        elif self._redraw_on_busy:
            self.backoff = self._draw()
        self._redraw_on_busy = False
        self.fire_at = None
        self.token += 1
        return None

    def on_idle(self, now: float):
        self.medium_busy = False
        if self.head is None or self.transmitting or self.fire_at is not None:
            return None
        self.ref = now
        return self._schedule()

    def on_fire(self, now: float, token: int) -> Frame | None:
        if token != self.token or self.head is None or self.transmitting:
            return None
        frame = self.head
        self.head = None
        self.fire_at = None
        self.transmitting = True
        return frame

    def on_tx_end(self, now: float):
        self.transmitting = False
        if self.queue:
            return self._next_head(now, after_busy=True)
        return None

    def drop_head(self, now: float):
        """Abandon the frame that just came due (e.g. expired) and move on."""
        self.transmitting = False
        if self.queue:
            return self._next_head(now, after_busy=True)
        return None

    def flush(self) -> list[Frame]:
        frames = list(self.queue)
        self.queue.clear()
        return frames


def mac_attempt(
    mac: CsmaMac,
    frame: Frame,
    medium: Sequence[tuple[float, float]],
    now: float,
) -> float:
    """Start time of `frame` given a known busy timeline of other stations.

    `medium` is a list of (start, end) busy intervals; after the last one the
    medium stays idle, so an attempt always succeeds eventually.
    """
    intervals: list[tuple[float, float]] = []
    for s, e in sorted(medium):
        if e <= now:
            continue
        if intervals and s <= intervals[-1][1]:
            intervals[-1] = (intervals[-1][0], max(e, intervals[-1][1]))
        else:
            intervals.append((s, e))
    if any(s <= now < e for s, e in intervals):
        mac.on_busy(now)
    sched = mac.enqueue(frame, now)
    for start, end in intervals:
        if start <= now:
            sched = mac.on_idle(end) or sched
            continue
        if sched is not None and sched[0] <= start + EPS:
            break
        mac.on_busy(start)
        sched = mac.on_idle(end)
    fire_at, token = sched
    mac.on_fire(fire_at, token)
    return fire_at
