"""Power and SINR arithmetic shared by the MAC and the engine.

Every function here is pure and works elementwise on floats or numpy arrays,
so the engine can evaluate whole slots at once with the same code the unit
tests exercise on scalars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhyParams:
    P: float = 0.1
    alpha: float = 0.01
    G_data: float = 32.0
    G_probe: float = 3200.0
    P_rb_th: float = 1e-13
    gamma_d: float = 10.0
    noise: float = 1e-13

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.G_data < 1 or self.G_probe < self.G_data:
            raise ValueError("need 1 <= G_data <= G_probe")
        if min(self.P, self.P_rb_th, self.gamma_d, self.noise) <= 0:
            raise ValueError("powers, threshold and noise must be positive")

    @classmethod
    def from_config(cls, cfg) -> "PhyParams":
        return cls(
            P=cfg.P,
            alpha=cfg.alpha,
            G_data=cfg.G_data,
            G_probe=cfg.G_probe,
            P_rb_th=cfg.P_rb_th,
            gamma_d=cfg.gamma_d,
            noise=cfg.noise,
        )


@dataclass
class SlotMeasurement:
    """What one node observed in one information slot (all in watts)."""

    interference: float = 0.0
    desired_rx: float = 0.0
    probe_rx: float = 0.0
    blocking_rx: float = 0.0


def sinr(desired_rx, spreading_gain, interference, noise):
    return spreading_gain * desired_rx / (interference + noise)


def interference_margin(desired_rx, spreading_gain, interference, noise, gamma_d):
    """Extra interference (W) a receiver can absorb before its SINR drops below ``gamma_d``.

    Negative when the link is already failing.
    """
    return spreading_gain * desired_rx / gamma_d - (interference + noise)


def predict_interference_increase(probe_rx, alpha):
    # a probe is sent at alpha * P, so scaling back by alpha gives the full-power contribution
    return probe_rx / alpha


def blocking_power(probe_rx, im, params: PhyParams):
    """Transmit power of a blocking message.

    The first term guarantees ``2 * P_rb_th`` at a lone prober (and ``P_rb_th``
    at the stronger of two); the second reaches any prober whose full-power
    transmission would exceed the margin ``im``.
    """
    probe_rx = np.asarray(probe_rx, dtype=float)
    if np.any(probe_rx <= 0):
        raise ValueError("blocking_power needs a positive received probe power")
    first = 2.0 * params.P_rb_th * params.alpha * params.P / probe_rx
    second = params.P_rb_th * params.P / np.asarray(im, dtype=float)
    out = np.maximum(first, second)
    return float(out) if out.ndim == 0 else out


def blocking_detected(blocking_rx, p_rb_th):
    return blocking_rx >= p_rb_th


def would_block(probe_rx, alpha, im):
    return predict_interference_increase(probe_rx, alpha) > im
