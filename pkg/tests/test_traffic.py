import math

import pytest
from hypothesis import given, strategies as st

from mcosim.traffic import (
    CATALOG,
    MsgType,
    Release,
    SchedulingError,
    catalog_profile,
    catalog_with_overrides,
    channel_demand,
    make_generator,
    next_generation,
    rate_adapt,
)

# catalog figures, typed in independently of the package catalog
TABLE1 = {
    "CAM": ((1, 10), (400, 400), "R1"),
    "DENM": ((1, 10), (350, 1000), "R1"),
    "SPAT_MAP": ((10, 50), (1200, 1200), "R2"),
    "VAM": ((1, 10), (350, 350), "R2"),
    "PCM": ((50, 50), (400, 400), "R2"),
    "CPM": ((1, 10), (1000, 1000), "R2"),
    "MCM": ((1, 10), (1000, 1000), "R2"),
}


@pytest.mark.parametrize("name", sorted(TABLE1))
def test_catalog_matches_table(name):
    rate, size, rel = TABLE1[name]
    p = catalog_profile(name)
    assert p.rate_hz == rate
    assert p.size_bytes == size
    assert p.release is Release(rel)


def test_catalog_unknown():
    with pytest.raises(LookupError):
        catalog_profile("BSM")


def test_priorities_cps_below_cas():
    assert CATALOG[MsgType.CPM].priority > CATALOG[MsgType.CAM].priority


def test_overrides_are_strict():
    cat = catalog_with_overrides({"CAM": {"size_bytes": [300, 300]}})
    assert cat[MsgType.CAM].size_bytes == (300, 300)
    with pytest.raises(ValueError):
        catalog_with_overrides({"CAM": {"colour": 1}})


def test_next_generation_period():
    g = make_generator(catalog_profile("CAM"), 10.0)
    msg, g2 = next_generation(g, 0.0)
    assert g2.next_fire_at == pytest.approx(0.1)
    assert msg.created_at == 0.0 and msg.size_bytes == 400


def test_next_generation_too_early():
    g = make_generator(catalog_profile("CAM"), 10.0, start_at=0.5)
    with pytest.raises(SchedulingError):
        next_generation(g, 0.4)


def _count_in(gen, t0, t1):
    n, t = 0, gen.next_fire_at
    while t < t1 + 1e-12:
        _, gen = next_generation(gen, t)
        if t >= t0:
            n += 1
        t = gen.next_fire_at
    return n


def test_pcm_fifty_per_second():
    g = make_generator(catalog_profile("PCM"), start_at=0.0137)
    assert _count_in(g, 1.0137, 2.0137 - 1e-9) == 50


@given(st.floats(1.0, 10.0), st.floats(0.0, 0.5), st.floats(0.05, 3.0))
def test_count_round_rate_delta(rate, start, delta):
    g = make_generator(catalog_profile("CAM"), rate, start_at=start)
    n = _count_in(g, start, start + delta - 1e-12)
    assert abs(n - round(rate * delta)) <= 1


def test_generation_deterministic_and_in_range():
    def seq():
        g = make_generator(catalog_profile("DENM"), 10.0, rng_stream=(7, 4, 3))
        out = []
        for _ in range(30):
            m, g = next_generation(g, g.next_fire_at)
            out.append((m.id, m.size_bytes, m.created_at))
        return out

    a, b = seq(), seq()
    assert a == b
    assert all(350 <= s <= 1000 for _, s, _ in a)
    assert len({s for _, s, _ in a}) > 1
    assert len({i for i, _, _ in a}) == 30


def test_rate_adapt_examples():
    cpm = make_generator(catalog_profile("CPM"), 10.0)
    assert rate_adapt(cpm, 5.0).current_rate_hz == 5.0
    cam = make_generator(catalog_profile("CAM"), 10.0)
    assert rate_adapt(cam, 100.0).current_rate_hz == 10.0
    assert rate_adapt(cam, 10.0) is cam
    with pytest.raises(ValueError):
        rate_adapt(cam, 0.0)


@given(st.sampled_from(list(MsgType)), st.floats(1e-3, 1e3))
def test_rate_adapt_stays_in_table(t, req):
    p = catalog_profile(t)
    g = rate_adapt(make_generator(p), req)
    assert p.rate_hz[0] <= g.current_rate_hz <= p.rate_hz[1]


def test_channel_demand_examples():
    cam = catalog_profile("CAM")
    assert channel_demand([], 0.62, 6e6) == 0.0
    oracle = 100 * 10 * (8 * 400 / 6e6 + 110e-6) / 0.62
    got = channel_demand([(cam, 100, 10.0)], 0.62, 6e6, 110e-6)
    assert got == pytest.approx(oracle, rel=1e-12)
    assert got == pytest.approx(1.037, abs=1e-3)


@given(st.integers(0, 300), st.integers(0, 300), st.floats(1.0, 10.0))
def test_channel_demand_linear_additive(n1, n2, rate):
    cam, cpm = catalog_profile("CAM"), catalog_profile("CPM")
    a = channel_demand([(cam, n1, rate)], 1.0, 6e6)
    b = channel_demand([(cpm, n2, rate)], 1.0, 6e6)
    assert channel_demand([(cam, n1, rate), (cpm, n2, rate)], 1.0, 6e6) == pytest.approx(a + b, rel=1e-12, abs=1e-15)
    assert channel_demand([(cam, 2 * n1, rate)], 1.0, 6e6) == pytest.approx(2 * a, rel=1e-12, abs=1e-15)


def test_channel_demand_validation():
    with pytest.raises(ValueError):
        channel_demand([], 0.0, 6e6)
    with pytest.raises(ValueError):
        channel_demand([], 0.5, 0.0)
