"""Node geometry and the reciprocal path-gain matrix.

Gains combine a clamped power-law path loss with log-normal shadowing that
evolves as a first-order autoregressive process, one state per unordered
node pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class ShadowState:
    value_db: float
    epsilon: float
    sigma_db: float


def path_loss(distance, beta):
    """Linear gain ``min(1, d**-beta)``; distances at or below 1 m give unity."""
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    out = d ** (-beta)
    return float(out) if out.ndim == 0 else out


def step_shadowing(state: ShadowState, rng_draw: float) -> ShadowState:
    eps = state.epsilon
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {eps}")
    value = eps * state.value_db + math.sqrt(1.0 - eps * eps) * state.sigma_db * rng_draw
    return ShadowState(value, eps, state.sigma_db)


def shadow_correlation(speed_mps: float, t_frame: float, d_corr: float) -> float:
    """Per-frame AR(1) coefficient for a pair whose geometry changes at ``speed_mps``."""
    return math.exp(-speed_mps * t_frame / d_corr)


def refresh_gains(positions, shadow_db, beta):
    """Full gain matrix from positions (N x 2) and a symmetric shadowing matrix in dB.

    Each unordered pair is computed once and written to both entries, so the
    result is exactly symmetric. The diagonal is zero (a node never hears itself).
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    iu, ju = np.triu_indices(n, 1)
    d = np.hypot(pos[iu, 0] - pos[ju, 0], pos[iu, 1] - pos[ju, 1])
    g = path_loss(d, beta) * 10.0 ** (np.asarray(shadow_db, dtype=float)[iu, ju] / 10.0)
    gains = np.zeros((n, n))
    gains[iu, ju] = g
    gains[ju, iu] = g
    return gains


class Channel:
    """Evolving channel state for one run.

    Shadowing lives in a flat array over the upper-triangle pairs. Pairs where
    both endpoints are static keep their initial draw; pairs touching a moving
    node advance once per frame with coefficient ``epsilon``.
    """

    def __init__(self, positions, moving, beta, sigma_db, epsilon, rng):
        self.positions = np.array(positions, dtype=float)
        self.n = len(self.positions)
        self.beta = beta
        self.sigma_db = sigma_db
        self.epsilon = epsilon
        self.rng = rng
        self._iu, self._ju = np.triu_indices(self.n, 1)
        self.shadow_db = rng.normal(0.0, sigma_db, size=len(self._iu)) if sigma_db > 0 else np.zeros(len(self._iu))
        moving = np.asarray(moving, dtype=bool)
        self._dyn = np.flatnonzero(moving[self._iu] | moving[self._ju])
        self._innov = math.sqrt(max(0.0, 1.0 - epsilon * epsilon)) * sigma_db
        self.gains = np.zeros((self.n, self.n))
        self._recompute(np.arange(len(self._iu)))
        # index arrays for the per-frame refresh, fixed for the whole run
        self._dyn_i, self._dyn_j = self._iu[self._dyn], self._ju[self._dyn]
        self._dyn_flat = (self._dyn_i * self.n + self._dyn_j, self._dyn_j * self.n + self._dyn_i)

    def _gain(self, i, j, shadow_db):
        pos = self.positions
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        d2 = np.maximum(dx * dx + dy * dy, 1.0)
        # d**-beta * 10**(S/10), evaluated as a single exponential
        return np.exp(-0.5 * self.beta * np.log(d2) + (math.log(10.0) / 10.0) * shadow_db)

    def _recompute(self, pairs):
        iu, ju = self._iu[pairs], self._ju[pairs]
        g = self._gain(iu, ju, self.shadow_db[pairs])
        self.gains[iu, ju] = g
        self.gains[ju, iu] = g

    def step(self, positions=None):
        """Advance shadowing by one frame and refresh gains of affected pairs."""
        if positions is not None:
            self.positions = np.asarray(positions, dtype=float)
        if len(self._dyn) == 0:
            return
        s = self.shadow_db[self._dyn]
        if self._innov > 0:
            s = self.epsilon * s + self._innov * self.rng.standard_normal(len(s))
            self.shadow_db[self._dyn] = s
        g = self._gain(self._dyn_i, self._dyn_j, s)
        flat = self.gains.reshape(-1)
        flat[self._dyn_flat[0]] = g
        flat[self._dyn_flat[1]] = g

    def shadow_matrix(self):
        s = np.zeros((self.n, self.n))
        s[self._iu, self._ju] = self.shadow_db
        s[self._ju, self._iu] = self.shadow_db
        return s

    def shadow_state(self, i, j) -> ShadowState:
        if i == j:
            raise ValueError("no shadowing state for a node with itself")
        i, j = min(i, j), max(i, j)
        # index of (i, j) in row-major upper-triangle order
        idx = i * self.n - i * (i + 1) // 2 + (j - i - 1)
        dyn = idx in set(self._dyn.tolist())
        return ShadowState(float(self.shadow_db[idx]), self.epsilon if dyn else 1.0, self.sigma_db)
