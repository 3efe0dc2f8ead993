"""Per-call MAC state machine: reservation set-up, blocking, and link recovery.

A :class:`Link` drives one voice call between a fixed source and its mobile
destination. The engine asks it which transmissions it makes in a frame
(``plan``), reports what happened to each one as the slots are resolved, and
closes the frame with ``end_frame``. The link never touches channel state
directly; everything it knows comes through the engine object it was given.
"""

from __future__ import annotations

import enum

import numpy as np

from . import phy


class NoEligibleSlot(Exception):
    """Every information slot is excluded for the operation at hand."""


class Kind(enum.Enum):
    DATA = "data"
    ACK = "ack"
    REQUEST = "request"
    PROBE = "probe"


class Phase(enum.Enum):
    SELECT_DATA_IS = "select_data_is"
    PROBE_DATA = "probe_data"
    AWAIT_BLOCK_DATA = "await_block_data"
    SEND_REQUEST = "send_request"
    AWAIT_ACK = "await_ack"
    ACTIVE = "active"
    REESTABLISH_BOTH = "reestablish_both"
    REESTABLISH_DATA_ONLY = "reestablish_data_only"
    DROPPED = "dropped"
    DONE = "done"
    BLOCKED = "blocked"

    @property
    def terminal(self) -> bool:
        return self in (Phase.DROPPED, Phase.DONE, Phase.BLOCKED)


P = Phase
SUCCESSORS = {
    P.SELECT_DATA_IS: {P.SELECT_DATA_IS, P.PROBE_DATA, P.BLOCKED},
    P.PROBE_DATA: {P.AWAIT_BLOCK_DATA},
    P.AWAIT_BLOCK_DATA: {P.PROBE_DATA, P.SEND_REQUEST, P.BLOCKED},
    P.SEND_REQUEST: {P.AWAIT_ACK},
    P.AWAIT_ACK: {P.AWAIT_ACK, P.ACTIVE, P.PROBE_DATA, P.BLOCKED},
    P.ACTIVE: {P.ACTIVE, P.REESTABLISH_BOTH, P.REESTABLISH_DATA_ONLY, P.DONE, P.DROPPED},
    P.REESTABLISH_BOTH: {P.REESTABLISH_BOTH, P.ACTIVE, P.DROPPED, P.DONE},
    P.REESTABLISH_DATA_ONLY: {P.REESTABLISH_DATA_ONLY, P.ACTIVE, P.DROPPED, P.DONE},
    P.DROPPED: {P.DROPPED},
    P.DONE: {P.DONE},
    P.BLOCKED: {P.BLOCKED},
}
del P


class Tx:
    """One transmission in one information slot."""

    __slots__ = ("slot", "kind", "sender", "receiver", "power", "link")

    def __init__(self, slot, kind, sender, receiver, power, link=None):
        self.slot = slot
        self.kind = kind
        self.sender = sender
        self.receiver = receiver  # -1 for probes
        self.power = power
        self.link = link

    def __repr__(self):
        return f"Tx({self.kind.name} IS{self.slot} {self.sender}->{self.receiver} {self.power:.3g}W)"


def _ranked(interference, excluded):
    """Eligible slot indices ordered by interference, ties to the lowest index."""
    interference = np.asarray(interference, dtype=float)
    order = np.argsort(interference, kind="stable")
    return [int(s) for s in order if int(s) not in excluded]


def select_data_is(interference, dest_tx_slots=(), excluded=()) -> int:
    """Minimum-interference slot, skipping those where the destination transmits."""
    ranked = _ranked(interference, set(dest_tx_slots) | set(excluded))
    if not ranked:
        raise NoEligibleSlot("no eligible DATA information slot")
    return ranked[0]


def build_request(interference, data_is, own_tx_slots=(), count=1) -> tuple:
    """ACK-slot candidates carried in a request: the ``count`` quietest slots other than ``data_is``.

    Returns fewer than ``count`` entries when fewer slots are eligible.
    """
    excluded = set(own_tx_slots)
    if data_is is not None:
        excluded.add(data_is)
    return tuple(_ranked(interference, excluded)[:count])


def data_candidates(dest_interference, dest_tx_slots=(), data_is=None) -> tuple:
    """Two candidate DATA slots a destination advertises in its ACK."""
    return build_request(dest_interference, data_is, dest_tx_slots, count=2)


def on_probe_received(receiving: bool, desired_rx, interference, probe_rx, params: phy.PhyParams):
    """Blocking decision of one node for one probed slot.

    Returns the blocking-message power, or ``None`` when the node stays quiet
    (it is not an active receiver, the predicted increase is tolerable, or its
    own link is already below threshold).
    """
    if not receiving or probe_rx <= 0:
        return None
    im = phy.interference_margin(desired_rx, params.G_data, interference, params.noise, params.gamma_d)
    if im <= 0 or not phy.would_block(probe_rx, params.alpha, im):
        return None
    return phy.blocking_power(probe_rx, im, params)


def on_blocking_result(blocking_rx, p_rb_th) -> bool:
    """True when the prober must give up the slot."""
    return bool(phy.blocking_detected(blocking_rx, p_rb_th))


class Link:
    """MAC state for one call.

    ``env`` must provide ``params``, ``measurement(node, lag)``,
    ``detected_tx_slots(listener, target)`` and ``record_frame(frame, delivered)``.
    """

    def __init__(self, call, src, dst, env, n_frames, max_attempts=3):
        self.call = call
        self.src = src
        self.dst = dst
        self.env = env
        self.n_frames = n_frames
        self.max_attempts = max_attempts
        self.phase = Phase.SELECT_DATA_IS
        self.listen_frame = call.start_frame + 1
        self.data_is = None
        self.ack_is = None
        self.ack_ready = False
        self.attempts = 0
        self.excluded = set()
        self.candidate_data_is = ()
        self.candidate_ack_is = ()
        self.frames_sent = 0
        self.frames_lost = 0
        self.switches = 0
        self.first_data_frame = None
        self.call_end = None
        self.history = [Phase.SELECT_DATA_IS]
        self._reset_handshake()
        self._reset_frame()

    # -- bookkeeping -------------------------------------------------------

    def _goto(self, phase):
        if phase not in SUCCESSORS[self.phase]:
            raise RuntimeError(f"illegal transition {self.phase.name} -> {phase.name}")
        self.phase = phase
        self.history.append(phase)

    def _reset_handshake(self):
        self._req_decoded = False
        self._ack_probe_frame = None
        self._ack_clear = False
        self._expected_ack_frame = None
        self._pending = []
        self._rec_start = None
        self._rec_unblocked = []
        self._new_data_is = None
        self._late_ack_cands = []

    def _reset_frame(self):
        self._probe_clear = {}
        self._ack_probe_clear = {}
        self._data_ok = False
        self._ack_ok = False

    @property
    def reserved(self) -> bool:
        """Steady state: DATA and ACK both flow on established slots."""
        return self.phase is Phase.ACTIVE and self.ack_ready

    def tx_slots(self, node) -> set:
        if node == self.src:
            return {self.data_is} if self.data_is is not None else set()
        if node == self.dst:
            return {self.ack_is} if self.ack_is is not None and self.ack_ready else set()
        return set()

    # -- engine interface --------------------------------------------------

    def plan(self, frame) -> list:
        self._reset_frame()
        prm = self.env.params
        ph = self.phase
        out = []
        if ph is Phase.PROBE_DATA:
            out.append(Tx(self.data_is, Kind.PROBE, self.src, -1, prm.alpha * prm.P, self))
            self._goto(Phase.AWAIT_BLOCK_DATA)
        elif ph is Phase.SEND_REQUEST:
            cands = build_request(self.env.measurement(self.src, 0), self.data_is)
            if not cands:
                raise NoEligibleSlot("no ACK slot besides the DATA slot")
            self.ack_is = cands[0]
            out.append(Tx(self.data_is, Kind.REQUEST, self.src, self.dst, prm.P, self))
        elif ph is Phase.AWAIT_ACK:
            if frame < self.call_end:
                out.append(Tx(self.data_is, Kind.DATA, self.src, self.dst, prm.P, self))
            if self._req_decoded:
                if self._ack_probe_frame == frame:
                    out.append(Tx(self.ack_is, Kind.PROBE, self.dst, -1, prm.alpha * prm.P, self))
                elif self._ack_clear and self._ack_probe_frame < frame:
                    out.append(Tx(self.ack_is, Kind.ACK, self.dst, self.src, prm.P, self))
        elif ph is Phase.ACTIVE:
            out.append(Tx(self.data_is, Kind.DATA, self.src, self.dst, prm.P, self))
            if self.ack_ready:
                out.append(Tx(self.ack_is, Kind.ACK, self.dst, self.src, prm.P, self))
            elif self._ack_probe_frame == frame:
                for a in self._late_ack_cands:
                    out.append(Tx(a, Kind.PROBE, self.dst, -1, prm.alpha * prm.P, self))
        elif ph in (Phase.REESTABLISH_BOTH, Phase.REESTABLISH_DATA_ONLY):
            stage = frame - self._rec_start
            if stage == 0:
                for c in self.candidate_data_is:
                    out.append(Tx(c, Kind.PROBE, self.src, -1, prm.alpha * prm.P, self))
            else:
                if ph is Phase.REESTABLISH_BOTH:
                    own = set(self.candidate_data_is)
                    self.candidate_ack_is = build_request(self.env.measurement(self.src, 0), None, own, count=2)
                for c in self._rec_unblocked:
                    out.append(Tx(c, Kind.REQUEST, self.src, self.dst, prm.P, self))
            if ph is Phase.REESTABLISH_DATA_ONLY:
                # the destination keeps answering on its ACK slot (as NACKs)
                out.append(Tx(self.ack_is, Kind.ACK, self.dst, self.src, prm.P, self))
        return out

    def on_delivery(self, tx, ok) -> list:
        """Outcome of a DATA, ACK or REQUEST; may return extra transmissions later in this frame."""
        if tx.kind is Kind.DATA:
            self._data_ok = bool(ok)
        elif tx.kind is Kind.ACK:
            self._ack_ok = bool(ok)
        elif tx.kind is Kind.REQUEST and ok:
            prm = self.env.params
            frame = self.env.frame
            if self.phase is Phase.SEND_REQUEST:
                self._req_decoded = True
                if self.ack_is > self.data_is:
                    self._ack_probe_frame = frame
                    return [Tx(self.ack_is, Kind.PROBE, self.dst, -1, prm.alpha * prm.P, self)]
                self._ack_probe_frame = frame + 1
            elif self._new_data_is is None:
                self._new_data_is = tx.slot
                if self.phase is Phase.REESTABLISH_BOTH:
                    now = [a for a in self.candidate_ack_is if a > tx.slot]
                    self._late_ack_cands = [a for a in self.candidate_ack_is if a < tx.slot]
                    return [Tx(a, Kind.PROBE, self.dst, -1, prm.alpha * prm.P, self) for a in now]
        return []

    def on_blocking(self, tx, blocking_rx) -> None:
        clear = not on_blocking_result(blocking_rx, self.env.params.P_rb_th)
        if tx.sender == self.src:
            self._probe_clear[tx.slot] = clear
        else:
            self._ack_probe_clear[tx.slot] = clear

    def end_frame(self, frame) -> None:
        ph = self.phase
        if ph is Phase.SELECT_DATA_IS:
            if frame >= self.listen_frame:
                self._select_and_probe()
        elif ph is Phase.AWAIT_BLOCK_DATA:
            if self._probe_clear.get(self.data_is, False):
                self._goto(Phase.SEND_REQUEST)
            else:
                self.excluded.add(self.data_is)
                self._select_and_probe()
        elif ph is Phase.SEND_REQUEST:
            self._goto(Phase.AWAIT_ACK)
            if self._ack_probe_frame == frame:  # ACK slot after the DATA slot: probed this frame
                self._ack_clear = self._ack_probe_clear.get(self.ack_is, False)
            self.first_data_frame = frame + 1
            self.call_end = self.first_data_frame + self.n_frames
            self._expected_ack_frame = frame + 1 if self.ack_is > self.data_is else frame + 2
            self._pending = []
        elif ph is Phase.AWAIT_ACK:
            self._end_await_ack(frame)
        elif ph is Phase.ACTIVE:
            if self.ack_ready:
                self.active_frame(frame, self._data_ok, self._ack_ok)
            else:
                self._end_late_ack(frame)
        elif ph in (Phase.REESTABLISH_BOTH, Phase.REESTABLISH_DATA_ONLY):
            self._end_recovery(frame)

    # -- set-up ------------------------------------------------------------

    def _select_and_probe(self):
        try:
            k = select_data_is(
                self.env.measurement(self.src, 0),
                self.env.detected_tx_slots(self.src, self.dst),
                self.excluded,
            )
        except NoEligibleSlot:
            self._goto(Phase.BLOCKED)
            return
        self.data_is = k
        self.ack_is = None
        self._goto(Phase.PROBE_DATA)

    def _end_await_ack(self, frame):
        if frame < self.call_end:
            self._pending.append((frame, self._data_ok))
        if self._ack_probe_frame == frame:
            self._ack_clear = self._ack_probe_clear.get(self.ack_is, False)
        if frame != self._expected_ack_frame:
            return
        if self._ack_ok:
            self._goto(Phase.ACTIVE)
            self.ack_ready = True
            pending, self._pending = self._pending, []
            if not pending:
                self.complete_call()
                return
            for f, ok in pending[:-1]:
                self._count(f, ok)
            f, ok = pending[-1]
            self.active_frame(f, ok, True)
            return
        # no ACK: the whole probe/request/ACK cycle failed
        self.attempts += 1
        self.excluded.add(self.data_is)
        self._reset_handshake()
        self.data_is = self.ack_is = None
        if self.attempts >= self.max_attempts:
            self._goto(Phase.BLOCKED)
        else:
            self._select_and_probe()

    # -- steady state ------------------------------------------------------

    def _count(self, frame, delivered):
        self.frames_sent += 1
        self.frames_lost += not delivered
        self.env.record_frame(frame, delivered)

    def active_frame(self, frame, data_ok, ack_ok, counted=False) -> None:
        """Close one steady-state frame; ``counted`` when the engine already tallied it."""
        if counted:
            self.frames_sent += 1
            self.frames_lost += not data_ok
        else:
            self._count(frame, data_ok)
        if frame >= self.call_end - 1:
            self.complete_call()
        elif not ack_ok:
            self._start_recovery(Phase.REESTABLISH_BOTH, frame)
        elif not data_ok:
            self._start_recovery(Phase.REESTABLISH_DATA_ONLY, frame)

    def complete_call(self) -> None:
        # no termination signalling: the slots simply fall silent
        self._goto(Phase.DONE)
        self.data_is = self.ack_is = None
        self.ack_ready = False

    # -- recovery ----------------------------------------------------------

    def _start_recovery(self, kind, frame):
        # candidates come from the last ACK that got through
        lag = 2 if kind is Phase.REESTABLISH_BOTH else 1
        cands = data_candidates(self.env.measurement(self.dst, lag), {self.ack_is}, self.data_is)
        self._reset_handshake()
        self._goto(kind)
        self.candidate_data_is = cands
        self.candidate_ack_is = ()
        self.data_is = None
        if kind is Phase.REESTABLISH_BOTH:
            self.ack_is = None
            self.ack_ready = False
        if not cands:
            self._drop()
            return
        self._rec_start = frame + 1

    def _drop(self):
        self._goto(Phase.DROPPED)
        self.data_is = self.ack_is = None
        self.ack_ready = False

    def _end_recovery(self, frame):
        stage = frame - self._rec_start
        self._count(frame, False)
        if frame >= self.call_end - 1:
            self.complete_call()
            return
        if stage == 0:
            self._rec_unblocked = [c for c in self.candidate_data_is if self._probe_clear.get(c, False)]
            if not self._rec_unblocked:
                self._drop()
            return
        if self._new_data_is is None:
            self._drop()
            return
        self.data_is = self._new_data_is
        if self.phase is Phase.REESTABLISH_DATA_ONLY:
            self._goto(Phase.ACTIVE)
            self.switches += 1
            return
        clear = [a for a in self.candidate_ack_is if self._ack_probe_clear.get(a, False)]
        if clear:
            self.ack_is = clear[0]
            self.ack_ready = True
            self._goto(Phase.ACTIVE)
            self.switches += 1
        elif self._late_ack_cands:
            self._goto(Phase.ACTIVE)
            self._ack_probe_frame = frame + 1
        else:
            self._drop()

    def _end_late_ack(self, frame):
        # DATA already flows on the new slot while the destination probes ACK candidates
        self._count(frame, self._data_ok)
        if frame >= self.call_end - 1:
            self.complete_call()
            return
        clear = [a for a in self._late_ack_cands if self._ack_probe_clear.get(a, False)]
        if clear:
            self.ack_is = clear[0]
            self.ack_ready = True
            self._late_ack_cands = []
            self.switches += 1
            self._goto(Phase.ACTIVE)
        else:
            self._drop()
