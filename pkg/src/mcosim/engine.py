"""Deterministic discrete-event core.

Radio state (sensed power, busy flags, CBR accumulators) is kept in flat
numpy arrays indexed by global transceiver number ``k``; protocol state
(BME/MHE/MCE, gatekeeper, CSMA) lives in per-station objects driven by a
single heap ordered by ``(time, seq)``.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .access import (
    ALI,
    EPS,
    ALIGroup,
    AliCommand,
    AliCommandKind,
    CsmaMac,
    GatekeeperConfig,
    GatekeeperState,
    Verdict as GkVerdict,
    configure_ali_group,
    gatekeeper_admit,
)
from .facilities import (
    FCP,
    BmeState,
    FclStatus,
    Mce,
    NotificationKind,
    Verdict,
    bme_allocate,
    bme_handle_report,
    bme_note_routing,
    mhe_route,
)
from .metrics import Metrics
from .net import (
    LOCAL,
    ChannelReport,
    GaghBinding,
    RoutingError,
    gagh_route_down,
    merge_channel_reports,
)
from .policy import Demand, UsagePolicy, assign_balanced, assign_predefined, assign_sequential
from .scenario import Scenario, ScenarioError, StationTemplate
from .spectrum import ChannelId, airtime_s, path_loss_matrix_dB
from .traffic import (
    GeneratorState,
    Message,
    MsgType,
    Release,
    catalog_with_overrides,
    next_generation,
    rate_adapt,
)

log = logging.getLogger(__name__)

GEN, FIRE, TXEND, WINDOW = 0, 1, 2, 3
EVENT_KINDS = {GEN: "generate", FIRE: "mac_slot", TXEND: "tx_end", WINDOW: "cbr_window"}


class EngineError(RuntimeError):
    pass


class Flow:
    __slots__ = ("uid", "station", "app_id", "key", "profile", "gen", "fcp", "fcl", "active",
                 "base_rate", "discard_share", "discard_acc", "feedback")

    def __init__(self, uid, station, app_id, key, profile, gen, fcp=None, fcl=None, active=True):
        self.uid = uid
        self.station = station
        self.app_id = app_id
        self.key = key
        self.profile = profile
        self.gen: GeneratorState = gen
        self.fcp = fcp
        self.fcl = fcl
        self.active = active
        self.base_rate = gen.current_rate_hz
        self.discard_share = 0.0
        self.discard_acc = 0.0
        self.feedback: dict[str, int] = {}

    def note(self, what: str):
        self.feedback[what] = self.feedback.get(what, 0) + 1


class Station:
    def __init__(self, sid: int, x: float, y: float, template: StationTemplate, template_index: int):
        self.id = sid
        self.x = x
        self.y = y
        self.template = template
        self.template_index = template_index
        self.release = template.release
        self.mco = template.release is Release.R2
        self.groups: dict[int, ALIGroup] = {}
        self.macs: dict[int, CsmaMac] = {}
        self.gatekeepers: dict[int, GatekeeperState] = {}
        self.gagh = GaghBinding()
        self.bme: BmeState | None = None
        self.flows: list[Flow] = []
        self.mce = Mce()
        self.local_reports: dict[int, ChannelReport] = {}
        self.neighbor_reports: dict[ChannelId, ChannelReport] = {}
        self.view = merge_channel_reports((), (), 0.0, 1.0)
        self.group_for: dict[ChannelId, int] = {}
        self.share_state = False


class _Entrance:
    """Transmit queue handed to the GAGH: gatekeeper, then CSMA queue."""

    __slots__ = ("world", "station", "k")

    def __init__(self, world, station, k):
        self.world = world
        self.station = station
        self.k = k

    def append(self, frame):
        self.world._admit(self.station, self.k, frame)


class ActiveTx:
    __slots__ = ("k", "station", "ch", "frame", "start", "end", "pv", "overlaps")

    def __init__(self, k, station, ch, frame, start, end, pv):
        self.k = k
        self.station = station
        self.ch = ch
        self.frame = frame
        self.start = start
        self.end = end
        self.pv = pv
        self.overlaps: list[ActiveTx] = []


class World:
    """One simulation run. ``audit=True`` additionally records per-transceiver
    admit and transmit logs for external compliance checks."""

    def __init__(self, cfg: Scenario, audit: bool = False):
        self.cfg = cfg
        self.now = 0.0
        self.metrics = Metrics(bin_m=cfg.metrics.bin_m, n_bins=cfg.metrics.n_bins)
        self.trace: list[dict] | None = [] if cfg.trace else None
        self.catalog = catalog_with_overrides(cfg.catalog_overrides)
        self.stations: list[Station] = []
        self.flows: list[Flow] = []
        self.flow_by_key: dict[str, Flow] = {}
        self._heap: list = []
        self._seq = 0
        self._route_of: dict[int, str] = {}
        self._prr: dict[str, tuple] = {}
        # k -> [(start, airtime, msg id)] and k -> [(t, airtime, budget_s)]
        self.tx_log: dict[int, list] | None = {} if audit else None
        self.admit_log: dict[int, list] | None = {} if audit else None
        self._built = False

    # ------------------------------------------------------------- helpers
    def emit(self, kind: str, station, **payload):
        if self.trace is not None:
            self.trace.append({"kind": kind, "time": self.now, "station": station, "payload": payload})

    def _push(self, t: float, kind: int, a, b=None):
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, a, b))

    def _sched(self, k: int, r):
        if r is not None:
            self._push(r[0], FIRE, k, r[1])
        self.pending[k] = self.macs[k].head is not None

    # --------------------------------------------------------------- build
    def build(self):
        cfg = self.cfg
        road = cfg.road
        place = rngmod.np_stream(cfg.seed, rngmod.PLACEMENT)
        if road.positions is not None:
            n = len(road.positions)
            xs = np.array([p[0] for p in road.positions], dtype=float)
            ys = np.array([p[1] for p in road.positions], dtype=float)
        else:
            n = int(place.poisson(road.density_veh_per_km * road.length_m / 1000.0))
            xs = np.sort(place.uniform(0.0, road.length_m, n))
            ys = place.integers(0, road.lanes, n) * road.lane_width_m
        marks = rngmod.np_stream(cfg.seed, rngmod.TEMPLATE).random(n)
        cum = np.cumsum([t.fraction for t in cfg.templates])
        cum[-1] = 1.0 + 1e-12
        tidx = np.searchsorted(cum, marks, side="right")
        if road.template_index is not None:
            tidx = np.array(road.template_index, dtype=np.int64)

        self.macs: dict[int, CsmaMac] = {}
        tr_station, tr_local = [], []
        for sid in range(n):
            ti = int(min(tidx[sid], len(cfg.templates) - 1))
            tpl = cfg.templates[ti]
            st = Station(sid, float(xs[sid]), float(ys[sid]), tpl, ti)
            st.share_state = cfg.net.share_channel_state if tpl.share_channel_state is None else tpl.share_channel_state
            for j in range(tpl.transceivers):
                k = len(tr_station)
                tr_station.append(sid)
                tr_local.append(j)
                ali = ALI(k, None, datarate_bps=cfg.radio.datarate_bps,
                          decode_threshold_dB=cfg.propagation.sinr_decode_threshold_dB,
                          tx_power_dBm=cfg.radio.tx_power_dBm, active=False)
                allowed = frozenset(c for c in ChannelId if cfg.urban_rail_absent or c is not ChannelId.SCH6)
                st.groups[k] = ALIGroup(k, k, None, [ali], allowed, cfg.cbr_window_s)
                st.gatekeepers[k] = GatekeeperState(GatekeeperConfig(cfg.gatekeeper.bands, cfg.gatekeeper.window_s,
                                                                     cfg.gatekeeper.enabled and tpl.gatekeeper))
                mac = CsmaMac(cfg.mac, rngmod.py_stream(cfg.seed, rngmod.BACKOFF, sid, j))
                st.macs[k] = mac
                self.macs[k] = mac
            self.stations.append(st)
            self._init_stack(st)

        K = len(tr_station)
        self.K = K
        self.tr_station = np.array(tr_station, dtype=np.int64)
        self.sensed = np.zeros(K)
        self.own_tx = np.zeros(K, dtype=bool)
        self.mac_busy = np.zeros(K, dtype=bool)
        self.mac_busy_since = np.zeros(K)
        self.cbr_busy = np.zeros(K, dtype=bool)
        self.busy_since = np.zeros(K)
        self.busy_acc = np.zeros(K)
        self.last_cbr = np.zeros(K)
        self.pending = np.zeros(K, dtype=bool)
        self.type_index = {t: i for i, t in enumerate(MsgType)}
        self.subscribed = np.zeros((n, len(MsgType)), dtype=np.int64)
        for st in self.stations:
            for t, apps in st.mce.subscriptions.items():
                self.subscribed[st.id, self.type_index[t]] = len(apps)
        self.delivered = np.zeros((n, len(MsgType)), dtype=np.int64)
        self.active: dict[int, ActiveTx] = {}
        self._tx_uid = 0

        prop = cfg.propagation
        self.tx_mw = 10.0 ** (cfg.radio.tx_power_dBm / 10.0)
        self.noise_mw = 10.0 ** (prop.noise_floor_dBm / 10.0)
        self.busy_thr_mw = 10.0 ** (prop.busy_detect_threshold_dBm / 10.0)
        self.sinr_thr = 10.0 ** (prop.sinr_decode_threshold_dB / 10.0)
        self.aci_lin = cfg.aci.linear_table(len(ChannelId))
        self._shadow = None
        if prop.shadowing_sigma_dB > 0 and n:
            srng = rngmod.np_stream(cfg.seed, rngmod.SHADOWING)
            s = srng.normal(0.0, prop.shadowing_sigma_dB, (n, n))
            s = np.triu(s, 1)
            self._shadow = s + s.T
        self._geometry()
        self._retune_arrays()

        for fl in self.flows:
            if fl.active and fl.gen.next_fire_at < cfg.duration_s:
                self._push(fl.gen.next_fire_at, GEN, fl.uid)
        if cfg.cbr_window_s <= cfg.duration_s + EPS:
            self._push(cfg.cbr_window_s, WINDOW, 1)
        self.metrics.header = {
            "scenario": cfg.name,
            "seed": cfg.seed,
            "stations": n,
            "transceivers": K,
            "road": {"length_m": road.length_m, "lanes": road.lanes, "density_veh_per_km": road.density_veh_per_km},
            "duration_s": cfg.duration_s,
        }
        self._built = True
        return self

    def _geometry(self):
        xs = np.array([s.x for s in self.stations])
        ys = np.array([s.y for s in self.stations])
        if len(xs):
            dist = np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])
        else:
            dist = np.zeros((0, 0))
        self.dist = dist
        pl = path_loss_matrix_dB(dist, self.cfg.propagation)
        if self._shadow is not None:
            pl = pl + self._shadow
        gain = 10.0 ** (-pl / 10.0)
        ts = self.tr_station
        self.tx_gain_t = self.tx_mw * gain[:, ts] if len(ts) else np.zeros((len(xs), 0))
        self.dist_t = dist[:, ts] if len(ts) else np.zeros((len(xs), 0))
        own = ts[None, :] == np.arange(len(xs))[:, None] if len(ts) else np.zeros((len(xs), 0), dtype=bool)
        self.in_range_t = (self.dist_t < self.cfg.metrics.max_distance_m) & ~own

    def _retune_arrays(self):
        ch = np.full(self.K, -1, dtype=np.int64)
        for st in self.stations:
            for k, g in st.groups.items():
                if g.active:
                    ch[k] = g.channel.index
        self.tr_ch = ch
        tuned = ch >= 0
        self.tuned = tuned
        nch = len(ChannelId)
        self.aci_row = np.zeros((nch, self.K))
        self.on_ch = np.zeros((nch, self.K), dtype=bool)
        for c in range(nch):
            self.aci_row[c] = np.where(tuned, self.aci_lin[np.abs(c - np.where(tuned, ch, c))], 0.0)
            self.on_ch[c] = ch == c

    def _flow_channels(self, st: Station, specs) -> dict[int, tuple]:
        cfg = self.cfg
        tpl = st.template
        out: dict[int, tuple] = {}
        missing = [i for i, a in enumerate(specs) if a.preferred is None]
        if st.release is Release.R1:
            return {i: (ChannelId.SCH0, ()) for i in range(len(specs))}
        if missing:
            if tpl.association == "predefined":
                amap = assign_predefined([(str(i), specs[i].msg_type) for i in missing], cfg.predefined)
            else:
                demands = []
                for i in missing:
                    prof = self.catalog[specs[i].msg_type]
                    rate = specs[i].rate_hz or prof.max_rate_hz
                    demands.append(Demand(str(i), rate * airtime_s(prof.size_bytes[1], cfg.radio), prof.priority, st.id))
                if tpl.association == "sequential":
                    amap = assign_sequential(demands, cfg.usage, cfg.urban_rail_absent)
                else:
                    amap = assign_balanced(demands, list(cfg.usage.channel_order), {st.id: tpl.transceivers},
                                           urban_rail_absent=cfg.urban_rail_absent)
                if amap.unplaced:
                    raise ScenarioError(f"templates.association: flows {amap.unplaced} could not be placed")
            for i in missing:
                out[i] = amap[str(i)]
        for i, a in enumerate(specs):
            if a.preferred is not None:
                out[i] = (a.preferred, tuple(a.alternatives or ()))
            elif a.alternatives is not None:
                out[i] = (out[i][0], tuple(c for c in a.alternatives if c is not out[i][0]))
        return out

    def _init_stack(self, st: Station):
        """Application resource allocation, run once per station before t=0."""
        cfg = self.cfg
        specs = st.template.apps
        chans = self._flow_channels(st, specs)
        if st.mco:
            st.bme = BmeState(cfg.facilities, cfg.radio)
        else:
            (k,) = st.groups
            configure_ali_group(st.groups, [_tune(k, ChannelId.SCH0)])
        for i, spec in enumerate(specs):
            prof = self.catalog[spec.msg_type]
            key = f"{st.id}/{spec.app_id}/{spec.msg_type.value}"
            rate = prof.clamp_rate(spec.rate_hz or prof.max_rate_hz)
            preferred, alts = chans[i]
            fcp = fcl = None
            active = True
            if st.mco:
                fcp = FCP(spec.app_id, key, prof.priority, rate, prof.size_bytes[1], prof.latency_budget_s,
                          preferred, tuple(alts), msg_type=spec.msg_type)
                self.emit("fcp_request", st.id, flow=key, preferred=preferred.name, alternatives=[c.name for c in alts],
                          rate_hz=rate, size_bytes=fcp.est_size_bytes)
                fcl, _, cmds = bme_allocate(st.bme, fcp, list(st.groups.values()))
                for c in cmds:
                    self.emit("ali_command", st.id, command=c.as_dict())
                configure_ali_group(st.groups, cmds)
                self.emit("fcl_grant", st.id, **fcl.as_dict())
                self.metrics.fcl_log.append({"station": st.id, **fcl.as_dict()})
                if fcl.status is FclStatus.DENIED:
                    active = False
                else:
                    rate = prof.clamp_rate(fcl.granted_rate_hz)
            phase = spec.phase_s
            if phase is None:
                phase = rngmod.py_stream(cfg.seed, rngmod.PHASE, st.id, i).random() / rate
            gen = GeneratorState(prof, rate, phase, (cfg.seed, rngmod.SIZES, st.id, i), key, len(self.flows), st.id)
            fl = Flow(len(self.flows), st, spec.app_id, key, prof, gen, fcp, fcl, active)
            self.flows.append(fl)
            self.flow_by_key[key] = fl
            st.flows.append(fl)
            self.metrics.flow(key)
            if spec.subscribe:
                st.mce.subscribe(spec.msg_type, spec.app_id)
        for k, g in st.groups.items():
            if g.active:
                st.gagh.bind(k, k, g.channel, g.technology, _Entrance(self, st, k))
                st.group_for[g.channel] = k

    # ---------------------------------------------------------------- radio
    def _update_busy(self, now: float):
        sb = self.sensed >= self.busy_thr_mw
        cb = sb | self.own_tx
        changed = cb != self.cbr_busy
        if changed.any():
            up = changed & cb
            down = changed & ~cb
            self.busy_since[up] = now
            self.busy_acc[down] += now - self.busy_since[down]
            self.cbr_busy = cb
        mchanged = sb != self.mac_busy
        if mchanged.any():
            self.mac_busy_since[mchanged & sb] = now
            self.mac_busy = sb
            for k in np.flatnonzero(mchanged & self.pending).tolist():
                mac = self.macs[k]
                if sb[k]:
                    mac.on_busy(now)
                else:
                    self._sched(k, mac.on_idle(now))

    def _start_tx(self, st: Station, k: int, frame, now: float):
        radio = self.cfg.radio
        dur = airtime_s(frame.size_bytes, radio)
        ch = frame.channel.index
        pv = self.tx_gain_t[st.id] * self.aci_row[ch]
        pv[k] = 0.0
        tx = ActiveTx(k, st.id, ch, frame, now, now + dur, pv)
        for other in self.active.values():
            other.overlaps.append(tx)
            tx.overlaps.append(other)
        self._tx_uid += 1
        self.active[self._tx_uid] = tx
        self.sensed += pv
        self.own_tx[k] = True
        route = self._route_of.pop(frame.msg.id, "sent")
        self.metrics.flow(frame.msg.flow_id)[route] += 1
        if self.tx_log is not None:
            self.tx_log.setdefault(k, []).append((now, dur, frame.msg.id))
        self.emit("tx_start", st.id, ali=k, channel=frame.channel.name, msg=frame.msg.id,
                  msg_type=frame.msg.msg_type.value, route=route, airtime_s=dur)
        self._update_busy(now)
        self._push(now + dur, TXEND, self._tx_uid)

    def _end_tx(self, uid: int, now: float):
        tx = self.active.pop(uid)
        self.sensed -= tx.pv
        if not self.active:
            self.sensed.fill(0.0)
        else:
            np.maximum(self.sensed, 0.0, out=self.sensed)
        self.own_tx[tx.k] = False
        self._receive(tx)
        self._update_busy(now)
        mac = self.macs[tx.k]
        mac.medium_busy = bool(self.mac_busy[tx.k])
        self._sched(tx.k, mac.on_tx_end(now))

    def _receive(self, tx: ActiveTx):
        idx = np.flatnonzero(self.on_ch[tx.ch] & self.in_range_t[tx.station])
        m = self.metrics
        if idx.size == 0:
            return
        sig = tx.pv[idx]
        interf = np.full(idx.size, self.noise_mw)
        for g in tx.overlaps:
            interf += g.pv[idx]
        ok = sig >= self.sinr_thr * interf
        if tx.overlaps:
            # half duplex: a receiver that transmitted meanwhile misses the frame
            ks = np.fromiter((g.k for g in tx.overlaps), np.int64, len(tx.overlaps))
            pos = np.minimum(np.searchsorted(idx, ks), idx.size - 1)
            ok[pos[idx[pos] == ks]] = False
        bins = (self.dist_t[tx.station, idx] / m.bin_m).astype(np.int64)
        np.minimum(bins, m.n_bins - 1, out=bins)
        msg = tx.frame.msg
        att = np.bincount(bins, minlength=m.n_bins)
        suc = np.bincount(bins[ok], minlength=m.n_bins)
        for key in (msg.msg_type.value, (self.stations[tx.station].template_index, msg.msg_type.value)):
            acc = self._prr.get(key)
            if acc is None:
                acc = self._prr[key] = (np.zeros(m.n_bins, np.int64), np.zeros(m.n_bins, np.int64))
            np.add(acc[0], att, out=acc[0])
            np.add(acc[1], suc, out=acc[1])
        m.received += int(idx.size)
        n_ok = int(ok.sum())
        m.decoded += n_ok
        if n_ok:
            # one transceiver per channel per station, so a decoded frame
            # reaches each MCE at most once and needs no duplicate check
            rx_st = self.tr_station[idx[ok]]
            self.delivered[rx_st, self.type_index[msg.msg_type]] += self.subscribed[rx_st, self.type_index[msg.msg_type]]
            reports = tx.frame.reports
            if reports:
                src = msg.source_station
                for sid in rx_st.tolist():
                    rst = self.stations[sid]
                    for ch, cbr, ts in reports:
                        cur = rst.neighbor_reports.get(ch)
                        if cur is None or ts > cur.timestamp:
                            rst.neighbor_reports[ch] = ChannelReport(ch, cbr, ts, src)

    # ------------------------------------------------------------ station
    def _withdraw(self, fl: Flow, reason: str, msg: Message | None = None):
        self.metrics.flow(fl.key)["withdrawn"][reason] += 1
        fl.note(reason)
        if msg is not None:
            self._route_of.pop(msg.id, None)

    def _admit(self, st: Station, k: int, frame):
        now = self.now
        fl = self.flow_by_key[frame.msg.flow_id]
        air = airtime_s(frame.size_bytes, self.cfg.radio)
        gk = st.gatekeepers[k]
        if gatekeeper_admit(gk, air, float(self.last_cbr[k]), now) is GkVerdict.DISCARD:
            self.metrics.flow(fl.key)["gatekeeper_discarded"] += 1
            self._route_of.pop(frame.msg.id, None)
            fl.note("gatekeeper_discarded")
            self.emit("gatekeeper_discard", st.id, ali=k, msg=frame.msg.id, cbr=float(self.last_cbr[k]))
            return
        if self.admit_log is not None and gk.config.enabled:
            budget = gk.config.max_duty(float(self.last_cbr[k])) * gk.config.window_s
            self.admit_log.setdefault(k, []).append((now, air, budget))
        mac = self.macs[k]
        mac.medium_busy = bool(self.mac_busy[k])
        self._sched(k, mac.enqueue(frame, now))

    def _piggyback(self, st: Station) -> tuple:
        return tuple((r.channel, r.cbr, r.timestamp) for r in st.local_reports.values())

    def _generate(self, fl: Flow, now: float):
        msg, fl.gen = next_generation(fl.gen, now)
        if fl.gen.next_fire_at < self.cfg.duration_s:
            self._push(fl.gen.next_fire_at, GEN, fl.uid)
        counts = self.metrics.flow(fl.key)
        counts["generated"] += 1
        st = fl.station
        if fl.discard_share > 0:
            fl.discard_acc += fl.discard_share
            if fl.discard_acc >= 1.0 - 1e-12:
                fl.discard_acc -= 1.0
                self._withdraw(fl, "app_discard")
                self.emit("app_discard", st.id, flow=fl.key, msg=msg.id)
                return
        if st.mco:
            dec = mhe_route(msg, fl.fcl, st.view, now, self.cfg.facilities, st.group_for, st.template.offload)
            bme_note_routing(st.bme, dec)
            self.emit("route", st.id, flow=fl.key, msg=msg.id, msg_type=msg.msg_type.value, **dec.as_dict())
            if dec.verdict is Verdict.WITHDRAW:
                self._withdraw(fl, dec.reason.value)
                return
            k = dec.chosen_ali
            if dec.verdict is Verdict.OFFLOAD:
                self._route_of[msg.id] = "offloaded"
                self.metrics.offload_times.append(now)
        else:
            k = st.group_for.get(ChannelId.SCH0)
        reports = self._piggyback(st) if st.share_state and msg.msg_type is MsgType.CAM else ()
        try:
            gagh_route_down(msg, k, st.gagh, self.cfg.net, reports)
        except RoutingError:
            self._withdraw(fl, "no_resources", msg)

    def _fire(self, k: int, token: int, now: float):
        mac = self.macs[k]
        frame = mac.on_fire(now, token)
        self.pending[k] = mac.head is not None
        if frame is None:
            return
        st = self.stations[int(self.tr_station[k])]
        if frame.msg.expired(now):
            self._withdraw(self.flow_by_key[frame.msg.flow_id], "latency_expired", frame.msg)
            self.emit("mac_expired", st.id, ali=k, msg=frame.msg.id)
            mac.medium_busy = bool(self.mac_busy[k])
            self._sched(k, mac.drop_head(now))
            return
        if self.mac_busy[k] and self.mac_busy_since[k] < now - EPS:
            self.metrics.violations.append(f"csma: transceiver {k} started at {now} on a busy medium")
        self._start_tx(st, k, frame, now)

    def _window(self, i: int, now: float):
        cfg = self.cfg
        w = cfg.cbr_window_s
        cb = self.cbr_busy
        self.busy_acc[cb] += now - self.busy_since[cb]
        self.busy_since[cb] = now
        cbr = np.clip(self.busy_acc / w, 0.0, 1.0)
        self.busy_acc[:] = 0.0
        per_ch: dict[int, list] = {}
        for st in self.stations:
            for k, g in st.groups.items():
                if not g.active or g.tuned_at > now - w + EPS:
                    continue
                c = float(cbr[k])
                self.last_cbr[k] = c
                st.local_reports[k] = ChannelReport(g.channel, c, now, LOCAL, k)
                per_ch.setdefault(g.channel.index, []).append(c)
        for ci in sorted(per_ch):
            vals = per_ch[ci]
            self.metrics.cbr_series.setdefault(ChannelId(ci).name, []).append((now, sum(vals) / len(vals)))
        for st in self.stations:
            st.view = merge_channel_reports(st.local_reports.values(), st.neighbor_reports.values(), now, cfg.net.staleness_s)
            if st.mco:
                _, _, notes = bme_handle_report(st.bme, st.view, now)
                for note in notes:
                    self._apply_notification(st, note, now)
        if self.trace is not None:
            for ci in sorted(per_ch):
                self.emit("report", None, channel=ChannelId(ci).name, mean_cbr=sum(per_ch[ci]) / len(per_ch[ci]))
        if cfg.road.mobility and cfg.road.speed_mps > 0:
            for st in self.stations:
                st.x = (st.x + cfg.road.speed_mps * w) % cfg.road.length_m
            self._geometry()
        nxt = (i + 1) * w
        if nxt <= cfg.duration_s + EPS:
            self._push(nxt, WINDOW, i + 1)

    def _apply_notification(self, st: Station, note, now: float):
        fl = self.flow_by_key[note.flow_id]
        self.metrics.notifications.append({"time": now, "station": st.id, **note.as_dict()})
        self.emit("notification", st.id, notification=note.as_dict())
        before = fl.gen.current_rate_hz
        if not st.template.reactive:
            return
        if note.kind is NotificationKind.REDUCE_RATE:
            fl.gen = rate_adapt(fl.gen, before * note.factor)
        elif note.kind is NotificationKind.DISCARD_LOW_PRIORITY:
            fl.discard_share = note.factor
        else:
            fl.gen = rate_adapt(fl.gen, fl.base_rate)
            fl.discard_share = 0.0
            fl.discard_acc = 0.0
        if fl.gen.current_rate_hz != before:
            self.metrics.rate_changes.append({"time": now, "station": st.id, "flow": fl.key,
                                              "from": before, "to": fl.gen.current_rate_hz})

    # ----------------------------------------------------------------- loop
    def run(self) -> Metrics:
        if not self._built:
            self.build()
        heap = self._heap
        duration = self.cfg.duration_s
        last = -math.inf
        while heap:
            t, seq, kind, a, b = heapq.heappop(heap)
            if t < last - EPS:
                raise EngineError(f"causality violated: event at {t} after {last}")
            last = t
            self.now = t
            if kind == GEN:
                self._generate(self.flows[a], t)
            elif kind == FIRE:
                self._fire(a, b, t)
            elif kind == TXEND:
                self._end_tx(a, t)
            else:
                self._window(a, t)
        for fl in self.flows:
            if fl.active and fl.gen.next_fire_at < duration - EPS:
                raise EngineError(f"event queue drained at {self.now} with generator {fl.key} due at {fl.gen.next_fire_at}")
        for key in sorted(self._prr, key=str):
            att, suc = self._prr[key]
            d = {"attempts": att.tolist(), "success": suc.tolist()}
            if isinstance(key, str):
                self.metrics.prr[key] = d
            else:
                ti, t = key
                name = self.cfg.templates[ti].name or f"template{ti}"
                self.metrics.prr_by_template.setdefault(name, {})[t] = d
        self.metrics.delivered = {t.value: int(self.delivered[:, i].sum()) for t, i in self.type_index.items()
                                  if self.delivered[:, i].any()}
        leftovers = sum(len(m.queue) + (m.head is not None) for m in self.macs.values())
        if leftovers:
            raise EngineError(f"{leftovers} frames left queued after drain")
        return self.metrics


def _tune(k: int, ch: ChannelId):
    return AliCommand(AliCommandKind.TUNE, k, ch)


def build_scenario(cfg: Scenario, audit: bool = False) -> World:
    return World(cfg, audit).build()


def run(world: World) -> Metrics:
    return world.run()


def simulate(cfg: Scenario) -> Metrics:
    return build_scenario(cfg).run()
