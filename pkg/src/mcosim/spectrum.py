"""5.9 GHz ITS band: channel plan, log-distance propagation, adjacent-channel
interference and hard-threshold frame decoding.

Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
BAND_LOW_MHZ = 5855.0
CHANNEL_WIDTH_MHZ = 10.0


class ChannelId(enum.Enum):
    """Service channel, valued by its position in frequency (0 = lowest)."""

    SCH3 = 0
    SCH4 = 1
    SCH1 = 2
    SCH2 = 3
    SCH0 = 4
    SCH5 = 5
    SCH6 = 6

    @property
    def index(self) -> int:
        return self.value

    @classmethod
    def parse(cls, name: "str | ChannelId") -> "ChannelId":
        if isinstance(name, ChannelId):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown channel {name!r}") from None

    def __str__(self) -> str:
        return self.name


class UsageClass(str, enum.Enum):
    SAFETY_PRIMARY = "safety_primary"
    SAFETY = "safety"
    NON_SAFETY = "non_safety"
    URBAN_RAIL_PRIORITY = "urban_rail_priority"


_USAGE = {
    ChannelId.SCH0: UsageClass.SAFETY_PRIMARY,
    ChannelId.SCH1: UsageClass.SAFETY,
    ChannelId.SCH2: UsageClass.SAFETY,
    ChannelId.SCH5: UsageClass.SAFETY,
    ChannelId.SCH3: UsageClass.NON_SAFETY,
    ChannelId.SCH4: UsageClass.NON_SAFETY,
    ChannelId.SCH6: UsageClass.URBAN_RAIL_PRIORITY,
}


@dataclass(frozen=True)
class ChannelEntry:
    channel: ChannelId
    low_edge_MHz: float
    high_edge_MHz: float
    usage_class: UsageClass

    @property
    def center_MHz(self) -> float:
        return 0.5 * (self.low_edge_MHz + self.high_edge_MHz)


@dataclass(frozen=True)
class ChannelPlan:
    entries: tuple[ChannelEntry, ...]

    def __post_init__(self):
        edges = sorted(self.entries, key=lambda e: e.low_edge_MHz)
        if len({e.channel for e in edges}) != len(edges):
            raise ValueError("duplicate channel in plan")
        for prev, nxt in zip(edges, edges[1:]):
            if not math.isclose(prev.high_edge_MHz, nxt.low_edge_MHz):
                raise ValueError(f"plan has a gap or overlap between {prev.channel} and {nxt.channel}")
        for e in edges:
            if not math.isclose(e.high_edge_MHz - e.low_edge_MHz, CHANNEL_WIDTH_MHZ):
                raise ValueError(f"{e.channel} does not span {CHANNEL_WIDTH_MHZ} MHz")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, channel: ChannelId) -> ChannelEntry:
        for e in self.entries:
            if e.channel is channel:
                return e
        raise KeyError(channel)

    @property
    def channels(self) -> list[ChannelId]:
        return [e.channel for e in self.entries]

    @property
    def span_MHz(self) -> tuple[float, float]:
        return (min(e.low_edge_MHz for e in self.entries), max(e.high_edge_MHz for e in self.entries))


def default_channel_plan() -> ChannelPlan:
    entries = []
    for ch in sorted(ChannelId, key=lambda c: c.index):
        low = BAND_LOW_MHZ + CHANNEL_WIDTH_MHZ * ch.index
        entries.append(ChannelEntry(ch, low, low + CHANNEL_WIDTH_MHZ, _USAGE[ch]))
    return ChannelPlan(tuple(entries))


def free_space_reference_loss_dB(freq_hz: float = 5.9e9) -> float:
    """Free-space loss at 1 m, 20*log10(4*pi/lambda)."""
    wavelength = SPEED_OF_LIGHT / freq_hz
    return 20.0 * math.log10(4.0 * math.pi / wavelength)


@dataclass(frozen=True)
class PropagationConfig:
    reference_loss_dB: float = 47.86
    exponent: float = 2.3
    noise_floor_dBm: float = -95.0
    busy_detect_threshold_dBm: float = -85.0
    sinr_decode_threshold_dB: float = 5.0
    # 0 disables log-normal shadowing
    shadowing_sigma_dB: float = 0.0

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError("exponent must be > 0")
        if not self.busy_detect_threshold_dBm > self.noise_floor_dBm:
            raise ValueError("busy_detect_threshold_dBm must exceed noise_floor_dBm")
        if self.shadowing_sigma_dB < 0:
            raise ValueError("shadowing_sigma_dB must be >= 0")


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dBm: float = 23.0
    datarate_bps: float = 6e6
    frame_overhead_s: float = 110e-6

    def __post_init__(self):
        if not self.datarate_bps > 0:
            raise ValueError("datarate_bps must be > 0")
        if self.frame_overhead_s < 0:
            raise ValueError("frame_overhead_s must be >= 0")


GAP_NEGLIGIBLE_FLOOR_DB = 60.0


@dataclass(frozen=True)
class AciProfile:
    """Attenuation applied to power leaking from a channel `k` positions away.

    Separations past the end of the tuple reuse the last value.
    """

    suppression_dB: tuple[float, ...] = (0.0, 33.0, 65.0)
    negligible_floor_dB: float = GAP_NEGLIGIBLE_FLOOR_DB

    def __post_init__(self):
        s = tuple(float(v) for v in self.suppression_dB)
        object.__setattr__(self, "suppression_dB", s)
        if not s or s[0] != 0.0:
            raise ValueError("co-channel suppression must be 0 dB")
        if any(b < a for a, b in zip(s, s[1:])):
            raise ValueError("suppression must be non-decreasing in separation")
        if any(v < self.negligible_floor_dB for v in s[2:]) or (len(s) < 3 and s[-1] < self.negligible_floor_dB):
            raise ValueError(f"separations >= 2 must be suppressed by at least {self.negligible_floor_dB} dB")

    def suppression(self, separation: int) -> float:
        if separation < 0:
            raise ValueError("separation must be >= 0")
        return self.suppression_dB[min(separation, len(self.suppression_dB) - 1)]

    @classmethod
    def from_mapping(cls, mapping: Mapping, negligible_floor_dB: float = GAP_NEGLIGIBLE_FLOOR_DB) -> "AciProfile":
        seps = {int(k): float(v) for k, v in mapping.items()}
        if not seps:
            raise ValueError("empty suppression map")
        top = max(seps)
        values, last = [], None
        for k in range(top + 1):
            if k in seps:
                last = seps[k]
            elif last is None:
                raise ValueError(f"suppression map has no value for separation {k}")
            values.append(last)
        return cls(tuple(values), negligible_floor_dB)

    def to_mapping(self) -> dict[str, float]:
        return {str(k): v for k, v in enumerate(self.suppression_dB)}

    def linear_table(self, n: int = len(ChannelId)) -> np.ndarray:
        """Linear power attenuation factors for separations 0..n-1."""
        return np.array([10.0 ** (-self.suppression(k) / 10.0) for k in range(n)])


def path_loss_dB(distance_m: float, cfg: PropagationConfig) -> float:
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return cfg.reference_loss_dB + 10.0 * cfg.exponent * math.log10(max(distance_m, 1.0))


def path_loss_matrix_dB(distances_m: np.ndarray, cfg: PropagationConfig) -> np.ndarray:
    """Vectorised path_loss_dB; zero distances (co-located antennas) clamp to 1 m."""
    d = np.maximum(np.asarray(distances_m, dtype=float), 1.0)
    return cfg.reference_loss_dB + 10.0 * cfg.exponent * np.log10(d)


def aci_attenuation_dB(tx: ChannelId, rx: ChannelId, profile: AciProfile) -> float:
    return profile.suppression(abs(tx.index - rx.index))


def dbm_to_mw(p_dBm):
    return 10.0 ** (np.asarray(p_dBm, dtype=float) / 10.0) if isinstance(p_dBm, np.ndarray) else 10.0 ** (p_dBm / 10.0)


def mw_to_dbm(p_mw):
    if isinstance(p_mw, np.ndarray):
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(p_mw)
    return 10.0 * math.log10(p_mw) if p_mw > 0 else -math.inf


def sinr_dB(signal_dBm: float, interferers: Iterable[tuple[float, float]], noise_dBm: float) -> float:
    total_mw = 10.0 ** (noise_dBm / 10.0)
    for power_dBm, attenuation_dB in interferers:
        total_mw += 10.0 ** ((power_dBm - attenuation_dB) / 10.0)
    return signal_dBm - 10.0 * math.log10(total_mw)


def decode_success(sinr: float, cfg: PropagationConfig) -> bool:
    # inclusive boundary
    return sinr >= cfg.sinr_decode_threshold_dB


def frame_decodable(signal_dBm: float, overlapping: Sequence[tuple[float, float]], cfg: PropagationConfig) -> bool:
    """Capture test: a frame survives only if it clears the SINR threshold
    against every frame overlapping it in time at this receiver."""
    return decode_success(sinr_dB(signal_dBm, overlapping, cfg.noise_floor_dBm), cfg)


def airtime_s(size_bytes: int, radio: RadioConfig = RadioConfig()) -> float:
    """On-air duration of one frame carrying `size_bytes`; an empty frame has no airtime."""
    if size_bytes <= 0:
        return 0.0
    return 8.0 * size_bytes / radio.datarate_bps + radio.frame_overhead_s
