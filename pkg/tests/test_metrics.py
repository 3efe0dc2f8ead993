import pytest

from probemac.metrics import MetricsRecord, finalize


class TestProbeHistogram:
    def test_fractions(self):
        m = MetricsRecord()
        for c in [1, 1, 1, 2]:
            m.record_probe_slot(c)
        assert m.probe_fractions == pytest.approx((0.75, 0.25, 0.0))

    def test_three_or_more_bucket(self):
        m = MetricsRecord()
        for c in [3, 4, 7]:
            m.record_probe_slot(c)
        assert m.probe_histogram == [0, 0, 3]

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            MetricsRecord().record_probe_slot(0)


class TestFinalize:
    def test_loss_ratio(self):
        m = MetricsRecord(frames_generated=10**6, frames_delivered=10**6 - 300, frames_lost=300)
        assert finalize(m)["frame_loss_rate"] == pytest.approx(3e-4)

    def test_drop_ratio(self):
        m = MetricsRecord(calls_started=1000, calls_dropped=12, calls_completed=988)
        assert finalize(m)["call_drop_rate"] == pytest.approx(0.012)

    def test_empty_run_flagged(self):
        row = finalize(MetricsRecord())
        assert row["frame_loss_rate"] == 0.0 and row["call_drop_rate"] == 0.0
        assert row["no_frames"] and row["no_calls"]

    def test_identities(self):
        m = MetricsRecord(frames_generated=5, frames_delivered=4, frames_lost=1,
                          calls_started=3, calls_completed=1, calls_dropped=1, calls_in_progress=1)
        assert m.check_identities() == []
        m.frames_lost = 2
        assert len(m.check_identities()) == 1
