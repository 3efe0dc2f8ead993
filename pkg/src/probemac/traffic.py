"""Voice call generation and destination mobility.

Each source alternates between an exponential idle period and a call, so the
gap to the next arrival is drawn when the previous call ends. A call that is
handed over while the source is still busy (for instance one injected by a
test) waits in a per-source queue for the current one to finish. Destinations
move in straight lines inside a disk around their source and redraw their
heading only when a step would leave the disk or the arena.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Call:
    source: int  # pair index
    arrival_time: float  # seconds
    duration: float  # seconds
    start_frame: int = -1  # frame at which the MAC starts handling it

    def n_frames(self, t_frame: float) -> int:
        """Number of DATA frames this call generates (at least one)."""
        return max(1, math.ceil(self.duration / t_frame - 1e-9))


@dataclass
class CallProcess:
    """Per-source on/off arrival process with a deferral queue."""

    mean_interarrival: float
    mean_duration: float
    n_sources: int
    rng: np.random.Generator
    next_arrival: np.ndarray = field(init=False)
    pending: list = field(init=False)
    busy: np.ndarray = field(init=False)

    def __post_init__(self):
        self.next_arrival = np.array([self._gap() for _ in range(self.n_sources)])
        self.pending = [deque() for _ in range(self.n_sources)]
        self.busy = np.zeros(self.n_sources, dtype=bool)

    def _gap(self) -> float:
        if math.isinf(self.mean_interarrival):
            return math.inf
        return float(self.rng.exponential(self.mean_interarrival))

    def arrivals_for_frame(self, t: int, t_frame: float) -> list:
        """Calls handed to the MAC in frame ``t``.

        Arrivals falling inside the frame are queued per source; an idle source
        takes the head of its queue. Busy sources keep theirs until ``release``.
        A source draws no new arrival time while it is busy.
        """
        frame_end = (t + 1) * t_frame
        for s in np.flatnonzero(self.next_arrival < frame_end):
            while self.next_arrival[s] < frame_end:
                arrival = float(self.next_arrival[s])
                duration = float(self.rng.exponential(self.mean_duration))
                self.pending[s].append(Call(int(s), arrival, duration))
                self.next_arrival[s] = math.inf  # next gap starts when this call ends
        started = []
        for s in range(self.n_sources):
            if not self.busy[s] and self.pending[s]:
                call = self.pending[s].popleft()
                call.start_frame = t
                self.busy[s] = True
                started.append(call)
        return started

    def release(self, source: int, now: float) -> None:
        """Mark ``source`` idle at time ``now``; its next idle period starts here."""
        self.busy[source] = False
        if not self.pending[source] and math.isinf(self.next_arrival[source]):
            self.next_arrival[source] = now + self._gap()


def frames_to_send(first_data_frame: int, n_frames: int, t: int) -> int:
    """1 if a call whose traffic spans ``[first_data_frame, first_data_frame + n_frames)`` has a frame at ``t``."""
    return int(first_data_frame <= t < first_data_frame + n_frames)


@dataclass
class MobilityState:
    x: float
    y: float
    anchor_x: float
    anchor_y: float
    heading: float
    speed: float  # m/s
    tether_radius: float = 150.0
    arena_side: float = 1000.0

    def distance_to_anchor(self) -> float:
        return math.hypot(self.x - self.anchor_x, self.y - self.anchor_y)


def kph_to_mps(v_kph: float) -> float:
    return v_kph / 3.6


def _inside(x, y, ax, ay, radius, side) -> bool:
    return math.hypot(x - ax, y - ay) <= radius and 0.0 <= x <= side and 0.0 <= y <= side


def step_mobility(state: MobilityState, dt: float, rng: np.random.Generator, max_redraws: int = 32) -> MobilityState:
    if state.speed < 0:
        raise ValueError("speed must be >= 0")
    step = state.speed * dt
    if step == 0.0:
        return state
    x, y, heading = state.x, state.y, state.heading
    args = (state.anchor_x, state.anchor_y, state.tether_radius, state.arena_side)
    nx, ny = x + step * math.cos(heading), y + step * math.sin(heading)
    if _inside(nx, ny, *args):
        return MobilityState(nx, ny, state.anchor_x, state.anchor_y, heading, state.speed,
                             state.tether_radius, state.arena_side)
    dx, dy = state.anchor_x - x, state.anchor_y - y
    dist = math.hypot(dx, dy)
    if dist > 1e-9:
        inward = math.atan2(dy, dx)
    else:
        half = state.arena_side / 2.0
        inward = math.atan2(half - y, half - x)
    for _ in range(max_redraws):
        # uniform over the open half-circle of directions facing the anchor
        heading = inward + rng.uniform(-math.pi / 2, math.pi / 2)
        nx, ny = x + step * math.cos(heading), y + step * math.sin(heading)
        if _inside(nx, ny, *args):
            return MobilityState(nx, ny, state.anchor_x, state.anchor_y, heading, state.speed,
                                 state.tether_radius, state.arena_side)
    # the segment towards the anchor lies inside the (convex) feasible region
    heading = inward
    move = min(step, dist)
    nx, ny = x + move * math.cos(heading), y + move * math.sin(heading)
    return MobilityState(nx, ny, state.anchor_x, state.anchor_y, heading, state.speed,
                         state.tether_radius, state.arena_side)


class Mobility:
    """Vectorised mobility for all destinations; boundary cases fall back to ``step_mobility``."""

    def __init__(self, anchors, positions, headings, speed, tether_radius, arena_side, rng):
        self.anchors = np.asarray(anchors, dtype=float)
        self.positions = np.array(positions, dtype=float)
        self.headings = np.array(headings, dtype=float)
        self.speed = speed
        self.tether_radius = tether_radius
        self.arena_side = arena_side
        self.rng = rng

    @classmethod
    def place(cls, anchors, speed, tether_radius, arena_side, rng):
        """Destinations uniform over the tether disk clipped to the arena."""
        anchors = np.asarray(anchors, dtype=float)
        pos = np.empty_like(anchors)
        for i, (ax, ay) in enumerate(anchors):
            while True:
                r = tether_radius * math.sqrt(rng.uniform())
                th = rng.uniform(0.0, 2 * math.pi)
                x, y = ax + r * math.cos(th), ay + r * math.sin(th)
                if 0.0 <= x <= arena_side and 0.0 <= y <= arena_side:
                    break
            pos[i] = (x, y)
        headings = rng.uniform(0.0, 2 * math.pi, size=len(anchors))
        return cls(anchors, pos, headings, speed, tether_radius, arena_side, rng)

    def step(self, dt: float) -> None:
        step = self.speed * dt
        if step == 0.0:
            return
        new = self.positions + step * np.column_stack((np.cos(self.headings), np.sin(self.headings)))
        off = new - self.anchors
        bad = (
            (np.hypot(off[:, 0], off[:, 1]) > self.tether_radius)
            | (new[:, 0] < 0) | (new[:, 0] > self.arena_side)
            | (new[:, 1] < 0) | (new[:, 1] > self.arena_side)
        )
        for i in np.flatnonzero(bad):
            st = MobilityState(self.positions[i, 0], self.positions[i, 1], self.anchors[i, 0], self.anchors[i, 1],
                               self.headings[i], self.speed, self.tether_radius, self.arena_side)
            st = step_mobility(st, dt, self.rng)
            new[i] = (st.x, st.y)
            self.headings[i] = st.heading
        self.positions = new
