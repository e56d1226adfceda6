"""Named experiment configurations.

Each builder returns a ``Scenario``; keyword arguments expose the knobs the
studies sweep (density, aggressor channel, offload on/off).
"""

from __future__ import annotations

from typing import Callable

from .scenario import AppSpec, RoadConfig, Scenario, ScenarioError, StationTemplate, r1_template
from .spectrum import ChannelId
from .traffic import MsgType

S0, S1, S2 = ChannelId.SCH0, ChannelId.SCH1, ChannelId.SCH2

CAS = AppSpec("CAS", MsgType.CAM, preferred=S0)


def single_transceiver_cas(seed: int = 1, density: float = 100.0, duration_s: float = 2.0, **kw) -> Scenario:
    """One transceiver per station, CAM on SCH0."""
    tpl = StationTemplate(transceivers=1, apps=(CAS,), name="r2-single")
    return Scenario(duration_s=duration_s, seed=seed, road=RoadConfig(density_veh_per_km=density),
                    templates=(tpl,), name="single-transceiver-cas", **kw)


def dual_template(fraction: float = 1.0, offload: bool = True) -> StationTemplate:
    cps = AppSpec("CPS", MsgType.CPM, preferred=S0, alternatives=(S1,))
    return StationTemplate(fraction=fraction, transceivers=2, apps=(CAS, cps), offload=offload, name="r2-dual")


def dual_transceiver_offload(seed: int = 1, density: float = 150.0, offload: bool = True,
                             duration_s: float = 2.0, **kw) -> Scenario:
    """Two transceivers; CPM may move to SCH1 when SCH0 is congested."""
    return Scenario(duration_s=duration_s, seed=seed, road=RoadConfig(density_veh_per_km=density),
                    templates=(dual_template(offload=offload),), name="dual-transceiver-offload", **kw)


# flows that load the adjacent channel; large frames, no duty-cycle cap
AGGRESSOR_APPS = (MsgType.MCM, MsgType.CPM)
ACI_AGGRESSOR_RATE_HZ = 10.0


def aggressor_apps(channel: ChannelId, rate_hz: float = ACI_AGGRESSOR_RATE_HZ, prefix: str = "AGG") -> tuple:
    return tuple(AppSpec(f"{prefix}{i}", t, rate_hz=rate_hz, preferred=channel, subscribe=False)
                 for i, t in enumerate(AGGRESSOR_APPS))


def aci_highway(seed: int = 1, aggressor: str | ChannelId | None = "SCH2", density: float = 100.0,
                aggressor_rate_hz: float = ACI_AGGRESSOR_RATE_HZ, duration_s: float = 1.0, **kw) -> Scenario:
    """Every station runs CAM on SCH0 and, on its second transceiver, a
    heavy flow pair on `aggressor`.

    ``aggressor=None`` (or ``"none"``) is the zero-load baseline: the second
    transceiver stays idle and all placement/backoff draws are unchanged.
    """
    if isinstance(aggressor, str):
        aggressor = None if aggressor.lower() == "none" else ChannelId.parse(aggressor)
    if aggressor is S0:
        raise ScenarioError("aggressor must sit on a channel other than the victim's SCH0")
    apps = (CAS,) + (aggressor_apps(aggressor, aggressor_rate_hz) if aggressor is not None else ())
    tpl = StationTemplate(transceivers=2, apps=apps, gatekeeper=False, offload=False,
                          name=f"cam-plus-{aggressor.name if aggressor else 'idle'}")
    return Scenario(duration_s=duration_s, seed=seed, road=RoadConfig(density_veh_per_km=density),
                    templates=(tpl,), name="aci-highway", **kw)


def r1_r2_coexistence(seed: int = 1, density: float = 100.0, r2_fraction: float = 0.5,
                      duration_s: float = 2.0, **kw) -> Scenario:
    """Mixed fleet; ``r2_fraction=0`` is the all-Release-1 baseline."""
    if r2_fraction <= 0:
        templates: tuple = (r1_template(name="r1"),)
    elif r2_fraction >= 1:
        templates = (dual_template(),)
    else:
        templates = (r1_template(1.0 - r2_fraction, name="r1"), dual_template(r2_fraction))
    return Scenario(duration_s=duration_s, seed=seed, road=RoadConfig(density_veh_per_km=density),
                    templates=templates, name="r1-r2-coexistence", **kw)


def escalation(seed: int = 1, density: float = 100.0, duration_s: float = 2.0, **kw) -> Scenario:
    """Dual-transceiver stations next to unmanaged background stations that
    keep both SCH0 and SCH1 busy, so the offload target is saturated too."""
    bg = StationTemplate(fraction=0.5, transceivers=2, gatekeeper=False, offload=False, reactive=False,
                         name="background", apps=aggressor_apps(S0, prefix="BG0_") + aggressor_apps(S1, prefix="BG1_"))
    return Scenario(duration_s=duration_s, seed=seed, road=RoadConfig(density_veh_per_km=density),
                    templates=(dual_template(0.5), bg), name="escalation", **kw)


PRESETS: dict[str, Callable[..., Scenario]] = {
    "single-transceiver-cas": single_transceiver_cas,
    "dual-transceiver-offload": dual_transceiver_offload,
    "aci-highway": aci_highway,
    "r1-r2-coexistence": r1_r2_coexistence,
    "escalation": escalation,
}


def preset(name: str, seed: int = 1, **kw) -> Scenario:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return builder(seed=seed, **kw)
