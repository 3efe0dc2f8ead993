"""Per-run accumulators and the summary row derived from them."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class MetricsRecord:
    frames_generated: int = 0
    frames_delivered: int = 0
    frames_lost: int = 0
    calls_started: int = 0
    calls_completed: int = 0
    calls_dropped: int = 0
    calls_blocked: int = 0
    calls_in_progress: int = 0
    is_switches: int = 0
    half_duplex_violations: int = 0
    # ISs carrying exactly 1, exactly 2, and 3 or more probes
    probe_histogram: list = field(default_factory=lambda: [0, 0, 0])

    def record_probe_slot(self, count: int) -> None:
        if count < 1:
            raise ValueError("only slots with at least one probe are recorded")
        self.probe_histogram[min(count, 3) - 1] += 1

    def record_frame(self, delivered: bool) -> None:
        self.frames_generated += 1
        if delivered:
            self.frames_delivered += 1
        else:
            self.frames_lost += 1

    @property
    def probe_fractions(self) -> tuple:
        total = sum(self.probe_histogram)
        if total == 0:
            return (0.0, 0.0, 0.0)
        return tuple(c / total for c in self.probe_histogram)

    @property
    def frame_loss_rate(self) -> float:
        return self.frames_lost / self.frames_generated if self.frames_generated else 0.0

    @property
    def call_drop_rate(self) -> float:
        return self.calls_dropped / self.calls_started if self.calls_started else 0.0

    @property
    def call_block_rate(self) -> float:
        return self.calls_blocked / self.calls_started if self.calls_started else 0.0

    def check_identities(self) -> list:
        """Names of violated accounting identities (empty when consistent)."""
        bad = []
        if self.frames_generated != self.frames_delivered + self.frames_lost:
            bad.append("frames_generated != frames_delivered + frames_lost")
        ended = self.calls_completed + self.calls_dropped + self.calls_blocked + self.calls_in_progress
        if self.calls_started != ended:
            bad.append("calls_started != completed + dropped + blocked + in_progress")
        if self.half_duplex_violations:
            bad.append("half-duplex violations recorded")
        return bad

    def as_dict(self) -> dict:
        return asdict(self)


def finalize(record: MetricsRecord) -> dict:
    """Summary row for one finished run.

    Rates with an empty denominator are reported as 0 and flagged.
    """
    p1, p2, p3 = record.probe_fractions
    return {
        "frame_loss_rate": record.frame_loss_rate,
        "call_drop_rate": record.call_drop_rate,
        "call_block_rate": record.call_block_rate,
        "p1": p1,
        "p2": p2,
        "p3plus": p3,
        "no_frames": record.frames_generated == 0,
        "no_calls": record.calls_started == 0,
    }
