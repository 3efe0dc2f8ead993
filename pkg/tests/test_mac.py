import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probemac import phy
from probemac.mac import (
    SUCCESSORS,
    Kind,
    Link,
    NoEligibleSlot,
    Phase,
    build_request,
    data_candidates,
    on_blocking_result,
    on_probe_received,
    select_data_is,
)
from probemac.traffic import Call

PRM = phy.PhyParams()
M = 8


class FakeEnv:
    """Stand-in for the engine: fixed measurements, recorded frame outcomes."""

    def __init__(self, src_meas=None, dst_meas=None):
        self.params = PRM
        self.frame = 0
        self.meas = {0: np.asarray(src_meas if src_meas is not None else np.arange(M), float),
                     1: np.asarray(dst_meas if dst_meas is not None else np.arange(M)[::-1], float)}
        self.recorded = []

    def measurement(self, node, lag=0):
        return self.meas[node]

    def detected_tx_slots(self, listener, target):
        return set()

    def record_frame(self, frame, delivered):
        self.recorded.append((frame, delivered))


def drive_frame(link, env, frame, deliver=lambda tx: True, blocking=lambda tx: 0.0):
    """Resolve one frame for a lone link, slot by slot, with scripted outcomes."""
    env.frame = frame
    pending = list(link.plan(frame))
    sent = []
    for k in range(M):
        here = sorted((t for t in pending if t.slot == k), key=lambda t: t.kind is Kind.PROBE)
        for tx in here:
            sent.append(tx)
            if tx.kind is Kind.PROBE:
                link.on_blocking(tx, blocking(tx))
            else:
                pending.extend(link.on_delivery(tx, deliver(tx)))
    link.end_frame(frame)
    return sent


def new_link(env, n_frames=50, start=0):
    return Link(Call(0, 0.0, n_frames * 0.02, start_frame=start), 0, 1, env, n_frames)


class TestSelection:
    def test_argmin_skips_destination_slots(self):
        assert select_data_is([5, 3, 1, 2, 4, 6, 7, 8], dest_tx_slots={2}) == 3

    def test_ties_go_to_lowest_index(self):
        assert select_data_is([1.0] * M) == 0
        assert select_data_is([1.0] * M, excluded={0, 1}) == 2

    def test_nothing_eligible(self):
        with pytest.raises(NoEligibleSlot):
            select_data_is([1.0] * M, excluded=set(range(M)))

    def test_request_candidate(self):
        assert build_request([5, 3, 1, 2, 4, 6, 7, 8], 2) == (3,)

    def test_two_candidates_in_interference_order(self):
        assert build_request([5, 3, 1, 2, 4, 6, 7, 8], None, count=2) == (2, 3)

    def test_single_candidate_left(self):
        assert build_request([1, 2], 0, count=2) == (1,)

    def test_data_candidates_skip_own_slots(self):
        assert data_candidates([0, 1, 2, 3, 4, 5, 6, 7], {0}, 1) == (2, 3)


class TestProbeResponse:
    def test_tolerable_increase_is_quiet(self):
        # IM is about 3.1e-8; a 1e-11 W probe predicts only 1e-9
        assert on_probe_received(True, 1e-8, 1e-9, 1e-11, PRM) is None

    def test_block_power_matches_formula(self):
        desired, interf = 1e-8, 1e-9
        im = phy.interference_margin(desired, PRM.G_data, interf, PRM.noise, PRM.gamma_d)
        p = on_probe_received(True, desired, interf, 1e-9, PRM)
        assert p == pytest.approx(max(2 * PRM.P_rb_th * PRM.alpha * PRM.P / 1e-9, PRM.P_rb_th * PRM.P / im))

    def test_not_a_receiver(self):
        assert on_probe_received(False, 1e-8, 1e-9, 1e-6, PRM) is None

    def test_failing_link_stays_quiet(self):
        assert on_probe_received(True, 1e-12, 1e-6, 1e-6, PRM) is None

    def test_blocking_result(self):
        assert on_blocking_result(PRM.P_rb_th, PRM.P_rb_th)
        assert not on_blocking_result(0.0, PRM.P_rb_th)


class TestSetup:
    def test_clean_setup_timeline(self):
        env = FakeEnv()
        link = new_link(env)
        kinds = [[t.kind for t in drive_frame(link, env, f)] for f in range(5)]
        assert kinds[0] == [] and kinds[1] == []
        assert kinds[2] == [Kind.PROBE]
        assert kinds[3] == [Kind.REQUEST, Kind.PROBE]  # ACK slot above the DATA slot
        assert kinds[4] == [Kind.DATA, Kind.ACK]
        assert link.phase is Phase.ACTIVE
        assert link.first_data_frame == 4
        assert env.recorded == [(4, True)]
        assert link.data_is == 0 and link.ack_is == 1

    def test_ack_slot_below_data_slot_waits_a_frame(self):
        # the source hears least at IS 5; its next-quietest slot is IS 2
        meas = [9, 9, 1, 9, 9, 0, 9, 9]
        env = FakeEnv(src_meas=meas)
        link = new_link(env)
        sent = [drive_frame(link, env, f) for f in range(6)]
        assert [t.kind for t in sent[3]] == [Kind.REQUEST]
        assert [(t.kind, t.slot) for t in sent[4]] == [(Kind.PROBE, 2), (Kind.DATA, 5)]
        assert [(t.kind, t.slot) for t in sent[5]] == [(Kind.ACK, 2), (Kind.DATA, 5)]
        assert link.phase is Phase.ACTIVE
        assert env.recorded == [(4, True), (5, True)]

    def test_blocked_slot_is_excluded(self):
        env = FakeEnv()
        link = new_link(env)
        for f in range(2):
            drive_frame(link, env, f)
        sent = drive_frame(link, env, 2, blocking=lambda tx: PRM.P_rb_th)
        assert sent[0].slot == 0
        assert link.excluded == {0} and link.phase is Phase.PROBE_DATA
        sent = drive_frame(link, env, 3)
        assert sent[0].slot == 1

    def test_all_slots_blocked(self):
        env = FakeEnv()
        link = new_link(env)
        f = 0
        while not link.phase.terminal:
            drive_frame(link, env, f, blocking=lambda tx: 1.0)
            f += 1
        assert link.phase is Phase.BLOCKED
        assert link.excluded == set(range(M))

    def test_three_failed_cycles(self):
        env = FakeEnv()
        link = new_link(env)
        f = 0
        while not link.phase.terminal:
            drive_frame(link, env, f, deliver=lambda tx: tx.kind is not Kind.ACK)
            f += 1
        assert link.phase is Phase.BLOCKED
        assert link.attempts == 3
        assert env.recorded == []

    def test_undecoded_request_sends_nothing(self):
        env = FakeEnv()
        link = new_link(env)
        for f in range(3):
            drive_frame(link, env, f)
        sent = drive_frame(link, env, 3, deliver=lambda tx: False)
        assert [t.kind for t in sent] == [Kind.REQUEST]


def active_link(env, n_frames=50):
    link = new_link(env, n_frames)
    for f in range(5):
        drive_frame(link, env, f)
    assert link.phase is Phase.ACTIVE
    return link


class TestSteadyStateAndRecovery:
    def test_call_completes(self):
        env = FakeEnv()
        link = active_link(env, n_frames=10)
        f = 5
        while not link.phase.terminal:
            drive_frame(link, env, f)
            f += 1
        assert link.phase is Phase.DONE
        assert len(env.recorded) == 10 and all(ok for _, ok in env.recorded)
        assert link.data_is is None and link.ack_is is None

    def test_data_failure_rebinds_data_only(self):
        env = FakeEnv()
        link = active_link(env)
        drive_frame(link, env, 5, deliver=lambda tx: tx.kind is not Kind.DATA)
        assert link.phase is Phase.REESTABLISH_DATA_ONLY
        old_ack = link.ack_is
        sent = drive_frame(link, env, 6)
        assert sorted(t.slot for t in sent if t.kind is Kind.PROBE) == sorted(link.candidate_data_is)
        drive_frame(link, env, 7)
        assert link.phase is Phase.ACTIVE
        # requests go out in slot order and the first one decoded wins
        assert link.ack_is == old_ack and link.data_is == min(link.candidate_data_is)
        assert link.switches == 1
        assert [ok for _, ok in env.recorded[-3:]] == [False, False, False]

    def test_first_candidate_blocked(self):
        env = FakeEnv()
        link = active_link(env)
        drive_frame(link, env, 5, deliver=lambda tx: tx.kind is not Kind.DATA)
        a, b = sorted(link.candidate_data_is)
        drive_frame(link, env, 6, blocking=lambda tx: 1.0 if tx.slot == a else 0.0)
        drive_frame(link, env, 7)
        assert link.phase is Phase.ACTIVE and link.data_is == b

    def test_both_candidates_blocked(self):
        env = FakeEnv()
        link = active_link(env)
        drive_frame(link, env, 5, deliver=lambda tx: tx.kind is not Kind.ACK)
        assert link.phase is Phase.REESTABLISH_BOTH
        drive_frame(link, env, 6, blocking=lambda tx: 1.0)
        assert link.phase is Phase.DROPPED

    def test_ack_failure_rebinds_both(self):
        env = FakeEnv()
        link = active_link(env)
        old = (link.data_is, link.ack_is)
        drive_frame(link, env, 5, deliver=lambda tx: tx.kind is not Kind.ACK)
        f = 6
        while link.phase is Phase.REESTABLISH_BOTH or not link.ack_ready:
            drive_frame(link, env, f)
            f += 1
            assert not link.phase.terminal
        assert link.phase is Phase.ACTIVE
        assert link.data_is not in old and link.data_is != link.ack_is

    def test_undecoded_requests_drop(self):
        env = FakeEnv()
        link = active_link(env)
        drive_frame(link, env, 5, deliver=lambda tx: tx.kind is not Kind.DATA)
        drive_frame(link, env, 6)
        drive_frame(link, env, 7, deliver=lambda tx: tx.kind is not Kind.REQUEST)
        assert link.phase is Phase.DROPPED


class TestSoundness:
    @settings(max_examples=300, deadline=None)
    @given(
        n_frames=st.integers(1, 40),
        seed=st.integers(0, 2**32 - 1),
        p_fail=st.floats(0.0, 0.6),
        p_block=st.floats(0.0, 0.6),
        meas=st.lists(st.floats(0, 1e-6), min_size=M, max_size=M),
    )
    def test_random_outcomes(self, n_frames, seed, p_fail, p_block, meas):
        rng = np.random.default_rng(seed)
        env = FakeEnv(src_meas=meas, dst_meas=meas[::-1])
        link = new_link(env, n_frames)
        for f in range(n_frames + 60):
            drive_frame(link, env, f,
                        deliver=lambda tx: rng.uniform() >= p_fail,
                        blocking=lambda tx: 1.0 if rng.uniform() < p_block else 0.0)
            for a, b in zip(link.history, link.history[1:]):
                assert b in SUCCESSORS[a]
            assert link.attempts <= link.max_attempts
            if link.data_is is not None and link.ack_is is not None:
                assert link.data_is != link.ack_is
            if link.phase.terminal:
                before = list(link.history)
                drive_frame(link, env, f + 1)
                assert link.history == before
                break
        assert link.phase.terminal
        frames = [fr for fr, _ in env.recorded]
        assert len(frames) == len(set(frames)) <= n_frames
        assert link.frames_sent == len(env.recorded)
