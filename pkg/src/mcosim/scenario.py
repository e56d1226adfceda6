"""Scenario description consumed by the engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .access import GatekeeperConfig, MacTiming
from .facilities import FacilitiesConfig
from .net import NetConfig
from .policy import DEFAULT_PREDEFINED, UsagePolicy
from .spectrum import AciProfile, ChannelId, PropagationConfig, RadioConfig
from .traffic import MsgType, Release


class ScenarioError(ValueError):
    """Invalid scenario; the message names the offending key."""


ASSOCIATIONS = ("predefined", "sequential", "balanced")


@dataclass(frozen=True)
class AppSpec:
    app_id: str
    msg_type: MsgType
    rate_hz: float | None = None
    # None: take the channel from the template's association policy
    preferred: ChannelId | None = None
    alternatives: tuple[ChannelId, ...] | None = None
    subscribe: bool = True
    # first generation time; None draws it uniformly within one period
    phase_s: float | None = None

    def __post_init__(self):
        if self.rate_hz is not None and not self.rate_hz > 0:
            raise ScenarioError(f"apps.{self.app_id}.rate_hz must be > 0")
        if self.phase_s is not None and self.phase_s < 0:
            raise ScenarioError(f"apps.{self.app_id}.phase_s must be >= 0")
        if self.alternatives is not None:
            object.__setattr__(self, "alternatives", tuple(self.alternatives))


@dataclass(frozen=True)
class StationTemplate:
    fraction: float = 1.0
    release: Release = Release.R2
    transceivers: int = 1
    apps: tuple[AppSpec, ...] = (AppSpec("CAS", MsgType.CAM),)
    association: str = "predefined"
    offload: bool = True
    gatekeeper: bool = True
    # None: follow net.share_channel_state
    share_channel_state: bool | None = None
    # False: applications ignore BME congestion notifications (unmanaged load)
    reactive: bool = True
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))
        if not (0.0 <= self.fraction <= 1.0):
            raise ScenarioError("templates.fraction must be in [0, 1]")
        if self.transceivers < 1:
            raise ScenarioError("templates.transceivers must be >= 1")
        if self.association not in ASSOCIATIONS:
            raise ScenarioError(f"templates.association must be one of {ASSOCIATIONS}")
        if self.release is Release.R1:
            if self.transceivers != 1:
                raise ScenarioError("templates.transceivers: Release-1 stations have a single transceiver")
            for app in self.apps:
                if app.preferred not in (None, ChannelId.SCH0) or app.alternatives:
                    raise ScenarioError("templates.apps: Release-1 stations only use SCH0")
        ids = [(a.app_id, a.msg_type) for a in self.apps]
        if len(set(ids)) != len(ids):
            raise ScenarioError("templates.apps: duplicate (app_id, msg_type) flow")


def r1_template(fraction: float = 1.0, **kw) -> StationTemplate:
    kw.setdefault("apps", (AppSpec("CAS", MsgType.CAM),))
    return StationTemplate(fraction=fraction, release=Release.R1, transceivers=1, offload=False, **kw)


@dataclass(frozen=True)
class RoadConfig:
    length_m: float = 2000.0
    lanes: int = 2
    lane_width_m: float = 3.5
    density_veh_per_km: float = 100.0
    speed_mps: float = 0.0
    mobility: bool = False
    # explicit (x, y) station coordinates; replaces the Poisson placement
    positions: tuple[tuple[float, float], ...] | None = None
    # template of each listed position; None draws templates by fraction
    template_index: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.length_m > 0:
            raise ScenarioError("road.length_m must be > 0")
        if self.lanes < 1:
            raise ScenarioError("road.lanes must be >= 1")
        if not self.density_veh_per_km > 0:
            raise ScenarioError("road.density_veh_per_km must be > 0")
        if self.lane_width_m < 0 or self.speed_mps < 0:
            raise ScenarioError("road.lane_width_m and road.speed_mps must be >= 0")
        if self.positions is not None:
            pos = tuple((float(x), float(y)) for x, y in self.positions)
            object.__setattr__(self, "positions", pos)
            if any(not (0.0 <= x <= self.length_m) for x, _ in pos):
                raise ScenarioError("road.positions: x must lie within [0, length_m]")
        if self.template_index is not None:
            object.__setattr__(self, "template_index", tuple(int(i) for i in self.template_index))
            if self.positions is None or len(self.template_index) != len(self.positions):
                raise ScenarioError("road.template_index needs one entry per road.positions entry")


@dataclass(frozen=True)
class MetricsConfig:
    bin_m: float = 10.0
    max_distance_m: float = 600.0

    def __post_init__(self):
        if not (self.bin_m > 0 and self.max_distance_m >= self.bin_m):
            raise ScenarioError("metrics: need bin_m > 0 and max_distance_m >= bin_m")

    @property
    def n_bins(self) -> int:
        return int(math.ceil(self.max_distance_m / self.bin_m - 1e-9))


@dataclass(frozen=True)
class Scenario:
    duration_s: float = 1.0
    seed: int = 1
    road: RoadConfig = field(default_factory=RoadConfig)
    templates: tuple[StationTemplate, ...] = (StationTemplate(),)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    aci: AciProfile = field(default_factory=AciProfile)
    radio: RadioConfig = field(default_factory=RadioConfig)
    catalog_overrides: dict = field(default_factory=dict)
    mac: MacTiming = field(default_factory=MacTiming)
    gatekeeper: GatekeeperConfig = field(default_factory=GatekeeperConfig)
    cbr_window_s: float = 0.1
    facilities: FacilitiesConfig = field(default_factory=FacilitiesConfig)
    net: NetConfig = field(default_factory=NetConfig)
    usage: UsagePolicy = field(default_factory=UsagePolicy)
    urban_rail_absent: bool = False
    predefined: dict = field(default_factory=lambda: dict(DEFAULT_PREDEFINED))
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    trace: bool = False
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(self.templates))
        if not self.duration_s >= 0 or not math.isfinite(self.duration_s):
            raise ScenarioError("duration_s must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        if not self.templates:
            raise ScenarioError("templates must not be empty")
        if abs(sum(t.fraction for t in self.templates) - 1.0) > 1e-9:
            raise ScenarioError("templates.fraction values must sum to 1")
        idx = self.road.template_index
        if idx is not None and any(not (0 <= i < len(self.templates)) for i in idx):
            raise ScenarioError("road.template_index refers to a missing template")
        if not self.cbr_window_s > 0:
            raise ScenarioError("cbr_window_s must be > 0")
        if not self.urban_rail_absent:
            for t in self.templates:
                for a in t.apps:
                    if a.preferred is ChannelId.SCH6 or ChannelId.SCH6 in (a.alternatives or ()):
                        raise ScenarioError("templates.apps: SCH6 requires urban_rail_absent")
