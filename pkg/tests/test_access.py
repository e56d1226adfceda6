import random

import pytest
from hypothesis import given, settings, strategies as st

from mcosim.access import (
    ALI,
    ALIGroup,
    AliCommand,
    AliCommandKind,
    ConfigurationError,
    CsmaMac,
    GatekeeperConfig,
    GatekeeperState,
    MacTiming,
    Verdict,
    configure_ali_group,
    gatekeeper_admit,
    mac_attempt,
    measure_cbr,
)
from mcosim.net import Frame
from mcosim.spectrum import ChannelId, RadioConfig, airtime_s
from mcosim.traffic import Message, MsgType

S0, S1 = ChannelId.SCH0, ChannelId.SCH1


def _frame(i=0, prio=1, size=400):
    m = Message(i, MsgType.CAM, "f", 0, size, 0.0, 0.1, prio)
    return Frame(m, S0, prio, size, 0)


def _group(gid, channel=None):
    return ALIGroup(gid, gid, channel, [ALI(gid, channel, active=channel is not None)])


# ------------------------------------------------------------ ALI groups

def test_tune_activates_group():
    groups = {2: _group(2)}
    groups, flushed = configure_ali_group(groups, [AliCommand(AliCommandKind.TUNE, 2, S1)], now=0.3)
    g = groups[2]
    assert g.active and g.channel is S1 and g.tuned_at == 0.3
    assert flushed == []


def test_deactivate_sole_ali():
    groups = {0: _group(0, S0)}
    configure_ali_group(groups, [AliCommand(AliCommandKind.DEACTIVATE, 0)])
    assert not groups[0].active
    with pytest.raises(ConfigurationError):
        measure_cbr(groups[0], 0.1)


def test_retune_flushes_queue():
    groups = {0: _group(0, S0)}
    groups[0].queue.extend([_frame(i) for i in range(3)])
    _, flushed = configure_ali_group(groups, [AliCommand(AliCommandKind.TUNE, 0, S1)])
    assert len(flushed) == 3 and not groups[0].queue


def test_unknown_transceiver_or_incapable_channel():
    groups = {0: ALIGroup(0, 0, None, [ALI(0, None)], capable_channels=frozenset({S0}))}
    with pytest.raises(ConfigurationError):
        configure_ali_group(groups, [AliCommand(AliCommandKind.TUNE, 9, S0)])
    with pytest.raises(ConfigurationError):
        configure_ali_group(groups, [AliCommand(AliCommandKind.TUNE, 0, S1)])


def test_measure_cbr_examples():
    g = _group(0, S0)
    assert measure_cbr(g, 0.1).cbr == 0.0
    g.busy_time_accumulator = 0.1
    assert measure_cbr(g, 0.2).cbr == 1.0
    g.busy_time_accumulator = airtime_s(1000, RadioConfig())
    rep = measure_cbr(g, 0.3)
    assert rep.cbr == pytest.approx((8000 / 6e6 + 110e-6) / 0.1, abs=1e-12)
    assert rep.cbr == pytest.approx(0.01443, abs=1e-5)
    assert g.busy_time_accumulator == 0.0


# ------------------------------------------------------------ gatekeeper

def test_default_bands():
    cfg = GatekeeperConfig()
    assert [cfg.max_duty(c) for c in (0.0, 0.3, 0.35, 0.4, 0.45, 0.5, 0.9)] == [0.03, 0.03, 0.015, 0.015, 0.01, 0.01, 0.005]


def test_gatekeeper_examples():
    st_ = GatekeeperState()
    assert gatekeeper_admit(st_, 1e-3, 0.0, 0.0) is Verdict.ADMIT
    full = GatekeeperState()
    for i in range(5):
        assert gatekeeper_admit(full, 1e-3, 0.9, i * 0.01) is Verdict.ADMIT
    assert gatekeeper_admit(full, 1e-3, 0.9, 0.05) is Verdict.DISCARD


def test_gatekeeper_sliding_window_oracle():
    # a band set in which cbr 0.40 allows 1 % duty
    cfg = GatekeeperConfig(bands=((0.3, 0.03), (0.5, 0.01), (1.0, 0.005)))
    st_ = GatekeeperState(cfg)
    assert gatekeeper_admit(st_, 0.006, 0.40, 0.0) is Verdict.ADMIT
    # 0.6 % + 0.6 % = 1.2 % > 1 %
    assert gatekeeper_admit(st_, 0.006, 0.40, 0.5) is Verdict.DISCARD
    assert st_.used_s == pytest.approx(0.006)
    assert gatekeeper_admit(st_, 0.006, 0.40, 1.0) is Verdict.ADMIT


def test_gatekeeper_disabled_admits_all():
    st_ = GatekeeperState(GatekeeperConfig(enabled=False))
    assert all(gatekeeper_admit(st_, 0.5, 1.0, i) is Verdict.ADMIT for i in range(10))


def test_gatekeeper_band_validation():
    with pytest.raises(ValueError):
        GatekeeperConfig(bands=((0.5, 0.01), (0.3, 0.03)))
    with pytest.raises(ValueError):
        GatekeeperConfig(bands=((0.3, 0.01), (0.5, 0.03)))
    with pytest.raises(ValueError):
        GatekeeperConfig(bands=((1.0, 0.0),))


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(0, 0.2), st.floats(1e-4, 3e-3), st.floats(0, 1)), min_size=1, max_size=60))
def test_gatekeeper_never_exceeds_budget(events):
    """Independent oracle: at every admit, admitted airtime in (t-W, t] fits the band budget."""
    st_ = GatekeeperState()
    t, admitted = 0.0, []
    for dt, air, cbr in events:
        t += dt
        if gatekeeper_admit(st_, air, cbr, t) is Verdict.ADMIT:
            admitted.append((t, air))
            window = sum(a for s, a in admitted if s > t - 1.0 + 1e-9)
            assert window <= GatekeeperConfig().max_duty(cbr) * 1.0 + 1e-9


# ------------------------------------------------------------------ MAC

def test_aifs_values():
    mt = MacTiming()
    assert mt.aifs(1) == pytest.approx(58e-6)
    assert mt.aifs(0) == pytest.approx(58e-6)
    assert mt.aifs(3) == pytest.approx(32e-6 + 6 * 13e-6)


def test_idle_medium_start_after_aifs():
    mac = CsmaMac(MacTiming(), random.Random(1))
    assert mac_attempt(mac, _frame(), [], 1.0) == pytest.approx(1.0 + 58e-6)


@given(st.integers(0, 2**32), st.floats(0.0, 1e-3), st.floats(1e-5, 2e-3))
def test_busy_medium_defers_past_aifs(seed, start_off, length):
    mac = CsmaMac(MacTiming(), random.Random(seed))
    busy_end = start_off + length
    t = mac_attempt(mac, _frame(), [(0.0, busy_end)], start_off)
    assert t >= busy_end + 58e-6 - 1e-12
    # the backoff is a whole number of slots
    slots = (t - busy_end - 58e-6) / 13e-6
    assert abs(slots - round(slots)) < 1e-6 and 0 <= round(slots) <= 15


def test_backoff_freezes_during_busy():
    mac = CsmaMac(MacTiming(), random.Random(3))
    # medium busy at enqueue: a backoff is drawn
    t = mac_attempt(mac, _frame(), [(0.0, 1e-3), (1e-3 + 58e-6 + 13e-6 * 0.5, 2e-3)], 0.0)
    b = mac.backoff
    # after the second busy period, AIFS again, then the frozen remainder
    assert t >= 2e-3 + 58e-6
    assert t <= 2e-3 + 58e-6 + 15 * 13e-6 + 1e-12
    assert b <= 15


def test_on_fire_stale_token_ignored():
    mac = CsmaMac(MacTiming(), random.Random(0))
    fire_at, tok = mac.enqueue(_frame(), 0.0)
    assert mac.on_fire(fire_at, tok + 1) is None
    assert mac.on_fire(fire_at, tok) is not None


def test_broadcast_cw_fixed():
    mac = CsmaMac(MacTiming(), random.Random(0))
    for i in range(20):
        mac.enqueue(_frame(i), 0.0)
    assert mac.cw == MacTiming().cw_min
