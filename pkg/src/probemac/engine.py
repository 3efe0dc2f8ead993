"""Frame/slot scheduler that drives channel, traffic and MAC for one run.

Node ``2p`` is the fixed source of pair ``p`` and node ``2p + 1`` its mobile
destination. Each frame the engine

1. moves destinations, advances shadowing and refreshes gains,
2. hands new calls to the MAC,
3. resolves the information slots in order (deliveries, probes, and the
   blocking slot that follows each probed IS),
4. updates every node's interference cache and closes the frame for each link.

Links in steady state (DATA and ACK on established slots) are evaluated as
arrays; links in set-up or recovery go through the slot-by-slot path, which
also serves as the reference the fast path is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import phy
from .channel import Channel, Position, shadow_correlation
from .config import SimConfig
from .mac import Kind, Link, Phase, Tx
from .metrics import MetricsRecord
from .traffic import Call, CallProcess, Mobility

ROLE_IDLE = "idle"


@dataclass
class NodeState:
    id: int
    position: Position
    tx_code: tuple
    rx_code: tuple
    schedule: list  # role per IS
    measurement: np.ndarray
    link: Link | None = None


@dataclass
class FrameTrace:
    """Everything needed to recompute one frame's SINRs from scratch."""

    frame: int
    gains: np.ndarray
    transmissions: list = field(default_factory=list)  # (slot, kind, sender, receiver, power)
    blocking: list = field(default_factory=list)  # (slot, blocker, power)


class Simulation:
    def __init__(self, cfg: SimConfig, fast: bool = True, trace: bool = False, positions=None):
        """``positions`` (N x 2, sources at even rows) replaces the random placement."""
        cfg.validate()
        self.cfg = cfg
        self.params = phy.PhyParams.from_config(cfg)
        self.fast = fast
        self.trace = trace
        self.last_trace: FrameTrace | None = None
        n, m = cfg.N, cfg.M
        place_rng, mob_rng, shadow_rng, traffic_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)
        )
        anchors = place_rng.uniform(0.0, cfg.arena_side, size=(cfg.n_pairs, 2))
        self.mobility = Mobility.place(anchors, cfg.speed, cfg.tether_radius, cfg.arena_side, place_rng)
        self.mobility.rng = mob_rng
        if positions is not None:
            positions = np.asarray(positions, dtype=float)
            if positions.shape != (n, 2):
                raise ValueError(f"positions must have shape ({n}, 2)")
            self.mobility.anchors = positions[0::2].copy()
            self.mobility.positions = positions[1::2].copy()
        moving = np.zeros(n, dtype=bool)
        moving[1::2] = cfg.speed > 0
        eps = shadow_correlation(cfg.speed, cfg.T_frame, cfg.d_corr)
        self.channel = Channel(self.positions(), moving, cfg.beta, cfg.sigma_db, eps, shadow_rng)
        self.traffic = CallProcess(cfg.mean_interarrival, cfg.mean_duration, cfg.n_pairs, traffic_rng)
        self.metrics = MetricsRecord()
        self.frame = 0
        self.links: dict[int, Link] = {}
        self._counted: set[int] = set()  # pairs whose current call started after warm-up
        self._meas = [np.zeros((n, m)) for _ in range(3)]  # latest first
        self._txcode = np.zeros((n, m))
        self._fast_sent = np.zeros(cfg.n_pairs, dtype=np.int64)
        self._fast: set[int] = set()  # pairs evaluated on the array path
        self._fast_cache = None
        self._last = None
        self.max_tether_distance = self._tether_distance()

    # -- queries used by links and tests ------------------------------------

    def positions(self) -> np.ndarray:
        pos = np.empty((self.cfg.N, 2))
        pos[0::2] = self.mobility.anchors
        pos[1::2] = self.mobility.positions
        return pos

    @property
    def gains(self) -> np.ndarray:
        return self.channel.gains

    def measurement(self, node: int, lag: int = 0) -> np.ndarray:
        """Interference per IS seen by ``node``, ``lag`` frames before the latest."""
        return self._meas[lag][node]

    def detected_tx_slots(self, listener: int, target: int) -> set:
        """ISs where ``target``'s transmitting code reached ``listener`` above the detection floor last frame."""
        rx = self._txcode[target] * self.gains[target, listener]
        return {int(k) for k in np.flatnonzero(rx >= self.params.P_rb_th)}

    def record_frame(self, frame: int, delivered: bool) -> None:
        if frame >= self.cfg.warmup_frames:
            self.metrics.record_frame(delivered)

    def slot_measurement(self, node: int, slot: int) -> phy.SlotMeasurement:
        """What ``node`` observed at IS ``slot`` in the last completed frame."""
        if self._last is None:
            return phy.SlotMeasurement()
        tot, des, pr, blk = self._last
        return phy.SlotMeasurement(
            interference=float(tot[node, slot] - des[node, slot]),
            desired_rx=float(des[node, slot]),
            probe_rx=float(pr[node, slot]),
            blocking_rx=float(blk[node, slot]),
        )

    def node_state(self, node: int) -> NodeState:
        pair = node // 2
        link = self.links.get(pair)
        schedule = [ROLE_IDLE] * self.cfg.M
        if link is not None and link.phase is Phase.ACTIVE:
            is_src = node == link.src
            if link.data_is is not None:
                schedule[link.data_is] = "tx_data" if is_src else "rx_data"
            if link.ack_ready:
                schedule[link.ack_is] = "rx_ack" if is_src else "tx_ack"
        x, y = self.positions()[node]
        return NodeState(node, Position(float(x), float(y)), ("tx", node), ("rx", node),
                         schedule, self.measurement(node).copy(), link)

    def _tether_distance(self) -> float:
        off = self.mobility.positions - self.mobility.anchors
        return float(np.max(np.hypot(off[:, 0], off[:, 1]))) if len(off) else 0.0

    # -- call injection (tests and scripted scenarios) -----------------------

    def inject_call(self, pair: int, duration: float) -> Call:
        """Queue a call at ``pair``'s source; it reaches the MAC in the next simulated frame."""
        call = Call(pair, self.frame * self.cfg.T_frame, duration)
        self.traffic.pending[pair].append(call)
        return call

    # -- main loop -----------------------------------------------------------

    def run(self, frames: int | None = None) -> MetricsRecord:
        for _ in range(self.cfg.total_frames if frames is None else frames):
            self.step()
        return self.close()

    def close(self) -> MetricsRecord:
        """Snapshot of the metrics with calls still running counted as in progress.

        The live accumulator is left untouched, so a run can be continued.
        """
        mt = replace(self.metrics, probe_histogram=list(self.metrics.probe_histogram))
        mt.calls_in_progress = len(self._counted)
        mt.is_switches += sum(self.links[p].switches for p in self._counted)
        return mt

    def _fast_arrays(self):
        """Index arrays of the steady-state links, rebuilt only when membership changes."""
        if self._fast_cache is None:
            links = [self.links[p] for p in sorted(self._fast)]
            rp = np.array([lk.call.source for lk in links], dtype=int)
            self._fast_cache = (
                links,
                rp,
                2 * rp,
                2 * rp + 1,
                np.array([lk.data_is for lk in links], dtype=int),
                np.array([lk.ack_is for lk in links], dtype=int),
                np.array([lk.call_end for lk in links], dtype=int),
            )
        return self._fast_cache

    def step(self) -> None:
        cfg, prm = self.cfg, self.params
        f = self.frame
        n, m = cfg.N, cfg.M
        if f > 0 and cfg.speed > 0:
            self.mobility.step(cfg.T_frame)
            self.channel.step(self.positions())
            self.max_tether_distance = max(self.max_tether_distance, self._tether_distance())
        g = self.channel.gains
        counting = f >= cfg.warmup_frames

        for call in self.traffic.arrivals_for_frame(f, cfg.T_frame):
            p = call.source
            self.links[p] = Link(call, 2 * p, 2 * p + 1, self, call.n_frames(cfg.T_frame), cfg.max_attempts)
            if counting:
                self.metrics.calls_started += 1
                self._counted.add(p)

        ptx = np.zeros((n, m))  # DATA/ACK/REQUEST transmit power
        probe = np.zeros((n, m))
        desired = np.zeros((n, m))  # desired received power at each receiver
        receiving = np.zeros((n, m), dtype=bool)
        txcode = np.zeros((n, m))
        dyn = [[] for _ in range(m)]
        trace = FrameTrace(f, g.copy()) if self.trace else None

        def add(tx):
            k, s = tx.slot, tx.sender
            if ptx[s, k] > 0 or probe[s, k] > 0:
                raise RuntimeError(f"node {s} transmits twice in IS {k} of frame {f}")
            if tx.kind is Kind.PROBE:
                probe[s, k] = tx.power
            else:
                ptx[s, k] = tx.power
                receiving[tx.receiver, k] = True
                if tx.kind is not Kind.REQUEST:
                    txcode[s, k] = tx.power
            dyn[k].append(tx)

        slow_links = [self.links[p] for p in sorted(self.links) if p not in self._fast]
        for link in slow_links:
            for tx in link.plan(f):
                add(tx)

        fast_links, rp, rs, rd, rk, ra, ends = self._fast_arrays()
        if len(fast_links):
            ptx[rs, rk] = prm.P
            ptx[rd, ra] = prm.P
            txcode[rs, rk] = prm.P
            txcode[rd, ra] = prm.P
            receiving[rd, rk] = True
            receiving[rs, ra] = True
        # active receivers of the reserved traffic, per slot
        r_node = np.concatenate((rd, rs))
        r_from = np.concatenate((rs, rd))
        r_slot = np.concatenate((rk, ra))

        blocking = np.zeros((n, m))
        for k in range(m):
            txs = dyn[k]
            if not txs:
                continue
            rx = g @ ptx[:, k]
            pr = g @ probe[:, k]
            probes = []
            for tx in sorted(txs, key=lambda t: t.sender):
                if tx.kind is Kind.PROBE:
                    probes.append(tx)
                    continue
                des = tx.power * g[tx.sender, tx.receiver]
                interf = rx[tx.receiver] - des + pr[tx.receiver]
                ok = phy.sinr(des, prm.G_data, interf, prm.noise) >= prm.gamma_d
                for extra in tx.link.on_delivery(tx, ok):
                    if extra.slot <= k:
                        raise RuntimeError(f"{extra} scheduled at or before the current IS {k}")
                    add(extra)
            if not probes:
                continue
            if counting:
                self.metrics.record_probe_slot(len({t.sender for t in probes}))
            # every node receiving DATA or ACK at this IS is an active receiver
            sel = r_slot == k
            nodes = list(r_node[sel])
            sources = list(r_from[sel])
            for tx in txs:
                if tx.kind in (Kind.DATA, Kind.ACK):
                    nodes.append(tx.receiver)
                    sources.append(tx.sender)
            nodes = np.array(nodes, dtype=int)
            sources = np.array(sources, dtype=int)
            blockers, bpow = np.zeros(0, dtype=int), np.zeros(0)
            if len(nodes):
                des = ptx[sources, k] * g[sources, nodes]
                interf = rx[nodes] - des  # the probes themselves are what is being judged
                im = phy.interference_margin(des, prm.G_data, interf, prm.noise, prm.gamma_d)
                pr_n = pr[nodes]
                blk = (im > 0) & phy.would_block(pr_n, prm.alpha, im)
                if blk.any():
                    blockers = nodes[blk]
                    bpow = np.atleast_1d(phy.blocking_power(pr_n[blk], im[blk], prm))
            if trace is not None:
                trace.blocking.extend((k, int(b), float(pw)) for b, pw in zip(blockers, bpow))
            for tx in probes:
                brx = float(bpow @ g[blockers, tx.sender]) if len(blockers) else 0.0
                blocking[tx.sender, k] = brx
                tx.link.on_blocking(tx, brx)

        # whole-frame received powers (ptx may have grown during the slot loop)
        any_probe = probe.any()
        probe_rx = g @ probe if any_probe else np.zeros((n, m))
        total = g @ ptx + probe_rx
        for k in range(m):
            for tx in dyn[k]:
                if tx.kind is not Kind.PROBE:
                    desired[tx.receiver, k] = tx.power * g[tx.sender, tx.receiver]
        leaving = []
        if len(fast_links):
            d_des = prm.P * g[rs, rd]
            desired[rd, rk] = d_des
            desired[rs, ra] = d_des  # reciprocal channel
            data_ok = prm.G_data * d_des >= prm.gamma_d * (total[rd, rk] - d_des + prm.noise)
            ack_ok = prm.G_data * d_des >= prm.gamma_d * (total[rs, ra] - d_des + prm.noise)
            both = data_ok & ack_ok
            if counting:
                ndel = int(np.count_nonzero(data_ok))
                self.metrics.frames_generated += len(fast_links)
                self.metrics.frames_delivered += ndel
                self.metrics.frames_lost += len(fast_links) - ndel
            special = ~both | (f >= ends - 1)
            self._fast_sent[rp[~special]] += 1
            leaving = [(fast_links[i], bool(data_ok[i]), bool(ack_ok[i])) for i in np.flatnonzero(special)]

        transmitting = (ptx > 0) | (probe > 0)
        self.metrics.half_duplex_violations += int(np.count_nonzero(transmitting & receiving))
        new = total - desired
        new[transmitting] = self._meas[0][transmitting]
        self._meas = [new, self._meas[0], self._meas[1]]
        self._txcode = txcode
        self._last = (total, desired, probe_rx, blocking)
        if trace is not None:
            for k in range(m):
                trace.transmissions.extend((k, tx.kind.value, tx.sender, tx.receiver, tx.power) for tx in dyn[k])
            for lk in fast_links:
                trace.transmissions.append((lk.data_is, "data", lk.src, lk.dst, prm.P))
                trace.transmissions.append((lk.ack_is, "ack", lk.dst, lk.src, prm.P))
            self.last_trace = trace

        # state changes see this frame's measurements, as on the per-IS path
        for link, d_ok, a_ok in leaving:
            link.active_frame(f, d_ok, a_ok, counted=True)
            self._fast.discard(link.call.source)
            self._fast_cache = None
        for link in slow_links:
            link.end_frame(f)
        for link in [lk for lk, _, _ in leaving] + slow_links:
            if link.phase.terminal:
                self._finish(link)
            elif self.fast and link.reserved and link.call.source not in self._fast:
                self._fast.add(link.call.source)
                self._fast_cache = None
        self.frame += 1

    def _finish(self, link: Link) -> None:
        p = link.call.source
        link.frames_sent += int(self._fast_sent[p])
        self._fast_sent[p] = 0
        if p in self._counted:
            self._counted.discard(p)
            mt = self.metrics
            if link.phase is Phase.DONE:
                mt.calls_completed += 1
            elif link.phase is Phase.DROPPED:
                mt.calls_dropped += 1
            else:
                mt.calls_blocked += 1
            mt.is_switches += link.switches
        del self.links[p]
        self.traffic.release(p, (self.frame + 1) * self.cfg.T_frame)


def run(cfg: SimConfig, fast: bool = True) -> MetricsRecord:
    return Simulation(cfg, fast=fast).run()
