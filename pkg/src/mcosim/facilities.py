"""Facilities-layer multi-channel core.

* BME: admits flow profiles (FCP) against a per-channel airtime ledger and
  returns the granted limitation (FCL); escalates under congestion.
* MHE: per-message routing to the primary ALI group, an alternative
  channel, or withdrawal.
* MCE: hands received messages to subscribed applications, at most once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .access import ALIGroup, AliCommand, AliCommandKind
from .net import EMPTY_VIEW, ChannelView
from .spectrum import ChannelId, RadioConfig, airtime_s
from .traffic import Message, MsgType


@dataclass(frozen=True)
class FacilitiesConfig:
    target_cbr: float = 0.62
    offload_threshold: float = 0.60
    hysteresis: float = 0.05
    congestion_threshold: float = 0.60
    escalation_windows: int = 2
    rate_reduction_factor: float = 0.5
    # share of messages an application drops in discard mode
    discard_share: float = 0.5

    def __post_init__(self):
        if not (0 < self.target_cbr <= 1):
            raise ValueError("target_cbr must be in (0, 1]")
        if not (0 < self.offload_threshold <= 1) or not (0 < self.congestion_threshold <= 1):
            raise ValueError("thresholds must be in (0, 1]")
        if not (0 <= self.hysteresis < self.offload_threshold):
            raise ValueError("hysteresis must be in [0, offload_threshold)")
        if self.escalation_windows < 1:
            raise ValueError("escalation_windows must be >= 1")
        if not (0 < self.rate_reduction_factor < 1):
            raise ValueError("rate_reduction_factor must be in (0, 1)")
        if not (0 <= self.discard_share <= 1):
            raise ValueError("discard_share must be in [0, 1]")


@dataclass(frozen=True)
class FCP:
    app_id: str
    flow_id: str
    priority: int
    est_rate_hz: float
    est_size_bytes: int
    max_latency_s: float
    preferred_channel: ChannelId
    alternative_channels: tuple[ChannelId, ...] = ()
    min_range_m: float = 0.0
    msg_type: MsgType | None = None

    def __post_init__(self):
        alts = tuple(self.alternative_channels)
        object.__setattr__(self, "alternative_channels", alts)
        if not self.est_rate_hz > 0:
            raise ValueError("est_rate_hz must be > 0")
        if not self.max_latency_s > 0:
            raise ValueError("max_latency_s must be > 0")
        if self.est_size_bytes < 0:
            raise ValueError("est_size_bytes must be >= 0")
        if self.preferred_channel in alts:
            raise ValueError("preferred channel repeated among alternatives")
        if len(set(alts)) != len(alts):
            raise ValueError("duplicate alternative channel")

    @property
    def channels(self) -> tuple[ChannelId, ...]:
        return (self.preferred_channel, *self.alternative_channels)


class FclStatus(str, enum.Enum):
    GRANTED = "granted"
    REDUCED = "reduced"
    DENIED = "denied"


@dataclass(frozen=True)
class FCL:
    fcp_ref: FCP
    granted_rate_hz: float
    granted_channels: tuple[ChannelId, ...]
    primary_ali_group: int | None
    airtime_budget_fraction: float
    status: FclStatus

    @property
    def primary_channel(self) -> ChannelId:
        return self.granted_channels[0]

    @property
    def alternatives(self) -> tuple[ChannelId, ...]:
        return self.granted_channels[1:]

    def as_dict(self) -> dict:
        return {
            "flow": self.fcp_ref.flow_id,
            "app": self.fcp_ref.app_id,
            "status": self.status.value,
            "granted_rate_hz": self.granted_rate_hz,
            "granted_channels": [c.name for c in self.granted_channels],
            "primary_ali_group": self.primary_ali_group,
            "airtime_budget_fraction": self.airtime_budget_fraction,
        }


def fcl_within_fcp(fcl: FCL) -> bool:
    fcp = fcl.fcp_ref
    ok = (
        fcl.granted_rate_hz <= fcp.est_rate_hz + 1e-12
        and set(fcl.granted_channels) <= set(fcp.channels)
        and 0.0 <= fcl.airtime_budget_fraction <= 1.0
    )
    if fcl.status is FclStatus.DENIED:
        return ok and fcl.airtime_budget_fraction == 0.0
    return ok and len(fcl.granted_channels) > 0


class NotificationKind(str, enum.Enum):
    REDUCE_RATE = "reduce_rate"
    DISCARD_LOW_PRIORITY = "discard_low_priority"
    CONGESTION_CLEARED = "congestion_cleared"


@dataclass(frozen=True)
class AppNotification:
    kind: NotificationKind
    app_id: str
    flow_id: str
    time: float
    episode: int
    factor: float = 1.0

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "app": self.app_id, "flow": self.flow_id, "episode": self.episode, "factor": self.factor}


@dataclass
class LedgerEntry:
    target_cbr: float
    committed: float = 0.0

    @property
    def remaining(self) -> float:
        return max(0.0, self.target_cbr - self.committed)


@dataclass
class BmeState:
    config: FacilitiesConfig = field(default_factory=FacilitiesConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    ledger: dict[ChannelId, LedgerEntry] = field(default_factory=dict)
    fcls: dict[str, FCL] = field(default_factory=dict)
    view: ChannelView = EMPTY_VIEW
    congested_channels: frozenset = frozenset()
    episode: int = 0
    episode_windows: int = 0
    episode_step: int = 0
    notified: set = field(default_factory=set)
    routing_counts: dict = field(default_factory=dict)

    def entry(self, channel: ChannelId) -> LedgerEntry:
        e = self.ledger.get(channel)
        if e is None:
            e = self.ledger[channel] = LedgerEntry(self.config.target_cbr)
        return e


def message_airtime(fcp: FCP, radio: RadioConfig) -> float:
    return airtime_s(fcp.est_size_bytes, radio)


def _plan_channels(fcp: FCP, groups: Sequence[ALIGroup]):
    """Channels of the FCP reachable through the groups, with the commands
    needed to reach them. Untuned transceivers are claimed in FCP order."""
    claimed: set[int] = set()
    granted: list[tuple[ChannelId, int]] = []
    cmds: list[AliCommand] = []
    for ch in fcp.channels:
        g = next((g for g in groups if g.channel is ch), None)
        if g is not None:
            if not g.active:
                cmds.append(AliCommand(AliCommandKind.ACTIVATE, g.transceiver_id, ch))
            granted.append((ch, g.id))
            continue
        free = next((g for g in groups if g.channel is None and g.transceiver_id not in claimed and ch in g.capable_channels), None)
        if free is not None:
            claimed.add(free.transceiver_id)
            cmds.append(AliCommand(AliCommandKind.TUNE, free.transceiver_id, ch))
            granted.append((ch, free.id))
    return granted, cmds


def bme_release(state: BmeState, flow_id: str) -> BmeState:
    fcl = state.fcls.pop(flow_id, None)
    if fcl is not None and fcl.status is not FclStatus.DENIED:
        e = state.entry(fcl.primary_channel)
        e.committed = max(0.0, e.committed - fcl.airtime_budget_fraction)
    return state


def bme_allocate(state: BmeState, fcp: FCP, lower_caps: Sequence[ALIGroup]) -> tuple[FCL, BmeState, list[AliCommand]]:
    if not lower_caps:
        raise ValueError("no lower-layer capabilities offered")
    granted, cmds = _plan_channels(fcp, lower_caps)
    if not granted:
        return FCL(fcp, 0.0, (), None, 0.0, FclStatus.DENIED), state, []

    if fcp.flow_id in state.fcls:
        bme_release(state, fcp.flow_id)
    primary, group_id = granted[0]
    per_msg = message_airtime(fcp, state.radio)
    demand = fcp.est_rate_hz * per_msg
    remaining = state.entry(primary).remaining
    if demand <= remaining + 1e-12:
        rate, budget, status = fcp.est_rate_hz, demand, FclStatus.GRANTED
    elif remaining > 0:
        rate, budget, status = remaining / per_msg, remaining, FclStatus.REDUCED
    else:
        return FCL(fcp, 0.0, tuple(c for c, _ in granted), group_id, 0.0, FclStatus.DENIED), state, []

    fcl = FCL(fcp, rate, tuple(c for c, _ in granted), group_id, budget, status)
    state.entry(primary).committed += budget
    state.fcls[fcp.flow_id] = fcl
    return fcl, state, cmds


def _active_fcls(state: BmeState) -> list[FCL]:
    return [f for f in state.fcls.values() if f.status is not FclStatus.DENIED]


def bme_handle_report(state: BmeState, view: ChannelView, now: float | None = None):
    """Store `view` and climb the congestion ladder when every channel granted
    to the station's flows is congested.

    Rung 1 on the first congested window asks the less important flows to
    reduce their rate; after `escalation_windows` more windows the most
    important flows are asked to discard low-priority messages.
    """
    now = view.created_at if now is None else now
    cfg = state.config
    state.view = view
    state.congested_channels = frozenset(ch for ch in view if view.cbr(ch) > cfg.congestion_threshold)
    notes: list[AppNotification] = []
    flows = _active_fcls(state)
    used = {ch for f in flows for ch in f.granted_channels}
    saturated = bool(used) and used <= state.congested_channels

    if saturated:
        if state.episode_windows == 0:
            state.episode += 1
        state.episode_windows += 1
        target = 1 + (state.episode_windows - 1) // cfg.escalation_windows
        best = min(f.fcp_ref.priority for f in flows)
        minor = [f for f in flows if f.fcp_ref.priority > best] or flows
        major = [f for f in flows if f.fcp_ref.priority == best]
        while state.episode_step < min(target, 2):
            state.episode_step += 1
            if state.episode_step == 1:
                kind, who, factor = NotificationKind.REDUCE_RATE, minor, cfg.rate_reduction_factor
            else:
                kind, who, factor = NotificationKind.DISCARD_LOW_PRIORITY, major, cfg.discard_share
            for f in who:
                notes.append(AppNotification(kind, f.fcp_ref.app_id, f.fcp_ref.flow_id, now, state.episode, factor))
                state.notified.add(f.fcp_ref.flow_id)
    elif state.episode_windows:
        for f in flows:
            if f.fcp_ref.flow_id in state.notified:
                notes.append(AppNotification(NotificationKind.CONGESTION_CLEARED, f.fcp_ref.app_id, f.fcp_ref.flow_id, now, state.episode))
        state.notified.clear()
        state.episode_windows = 0
        state.episode_step = 0
    return state, [], notes


# ----------------------------------------------------------------------- MHE


class Verdict(str, enum.Enum):
    SEND_PRIMARY = "send_primary"
    OFFLOAD = "offload"
    WITHDRAW = "withdraw"


class WithdrawReason(str, enum.Enum):
    LATENCY_EXPIRED = "latency_expired"
    NO_RESOURCES = "no_resources"
    GATEKEEPER_PREEMPT = "gatekeeper_preempt"


@dataclass(frozen=True, slots=True)
class RoutingDecision:
    verdict: Verdict
    channel: ChannelId | None = None
    chosen_ali: int | None = None
    reason: WithdrawReason | None = None

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "channel": None if self.channel is None else self.channel.name,
            "ali": self.chosen_ali,
            "reason": None if self.reason is None else self.reason.value,
        }


def mhe_route(
    msg: Message,
    fcl: FCL,
    view: ChannelView,
    now: float,
    cfg: FacilitiesConfig = FacilitiesConfig(),
    group_for: Mapping[ChannelId, int] | None = None,
    offload_enabled: bool = True,
) -> RoutingDecision:
    if fcl.status is FclStatus.DENIED:
        raise ValueError("cannot route on a denied FCL")
    group_for = group_for or {}
    if now - msg.created_at > msg.latency_budget:
        return RoutingDecision(Verdict.WITHDRAW, reason=WithdrawReason.LATENCY_EXPIRED)
    primary = fcl.primary_channel
    if not offload_enabled or view.cbr(primary) < cfg.offload_threshold:
        return RoutingDecision(Verdict.SEND_PRIMARY, primary, group_for.get(primary, fcl.primary_ali_group))
    limit = cfg.offload_threshold - cfg.hysteresis
    for ch in fcl.alternatives:
        if view.cbr(ch) < limit:
            return RoutingDecision(Verdict.OFFLOAD, ch, group_for.get(ch))
    return RoutingDecision(Verdict.WITHDRAW, reason=WithdrawReason.NO_RESOURCES)


def bme_note_routing(state: BmeState, decision: RoutingDecision) -> None:
    key = decision.verdict.value if decision.reason is None else f"withdraw:{decision.reason.value}"
    state.routing_counts[key] = state.routing_counts.get(key, 0) + 1


# ----------------------------------------------------------------------- MCE


def mce_dispatch(msg: Message, subscriptions: Mapping, seen: set | None = None) -> set:
    if seen is not None:
        if msg.id in seen:
            return set()
        seen.add(msg.id)
    return set(subscriptions.get(msg.msg_type, ()))


class Mce:
    def __init__(self, subscriptions: Mapping | None = None):
        self.subscriptions: dict = {k: set(v) for k, v in (subscriptions or {}).items()}
        self.seen: set = set()
        self.delivered: dict[str, int] = {}

    def subscribe(self, msg_type: MsgType, app_id: str):
        self.subscriptions.setdefault(msg_type, set()).add(app_id)

    def dispatch(self, msg: Message) -> set:
        apps = mce_dispatch(msg, self.subscriptions, self.seen)
        for a in apps:
            self.delivered[a] = self.delivered.get(a, 0) + 1
        return apps
