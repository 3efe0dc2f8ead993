"""Scenario configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unparseable, unknown or invalid configuration entries."""


@dataclass
class SimConfig:
    # topology / mobility
    N: int = 20
    v_kph: float = 10.0
    arena_side: float = 1000.0
    tether_radius: float = 150.0
    # frame structure
    M: int = 8
    T_frame: float = 0.020
    # channel
    beta: float = 2.4
    sigma_db: float = 4.0
    d_corr: float = 20.0
    # physical layer
    P: float = 0.1
    alpha: float = 0.01
    G_data: float = 32.0
    G_probe: float = 3200.0
    P_rb_th: float = 1e-13
    gamma_d_db: float = 10.0
    noise: float = 1e-13
    # traffic
    mean_interarrival: float = 48.0
    mean_duration: float = 30.0
    # MAC
    max_attempts: int = 3
    # run control
    total_frames: int = 150_000
    warmup_fraction: float = 0.1
    seed: int = 1

    @property
    def gamma_d(self) -> float:
        return 10.0 ** (self.gamma_d_db / 10.0)

    @property
    def n_pairs(self) -> int:
        return self.N // 2

    @property
    def speed(self) -> float:
        """Destination speed in m/s."""
        return self.v_kph / 3.6

    @property
    def warmup_frames(self) -> int:
        return int(self.total_frames * self.warmup_fraction)

    def replace(self, **changes) -> "SimConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.N >= 2 and self.N % 2 == 0, f"N must be even and >= 2, got {self.N}")
        need(self.M >= 2, f"M must be >= 2, got {self.M}")
        need(self.total_frames >= 1, "total_frames must be >= 1")
        need(0.0 <= self.warmup_fraction < 1.0, "warmup_fraction must be in [0, 1)")
        need(self.v_kph >= 0, "v_kph must be >= 0")
        need(self.T_frame > 0, "T_frame must be > 0")
        need(self.arena_side > 0 and self.tether_radius > 0, "arena_side and tether_radius must be > 0")
        need(self.beta > 0, "beta must be > 0")
        need(self.sigma_db >= 0 and self.d_corr > 0, "sigma_db must be >= 0 and d_corr > 0")
        need(0.0 < self.alpha < 1.0, "alpha must be in (0, 1)")
        need(self.G_data >= 1 and self.G_probe >= self.G_data, "need 1 <= G_data <= G_probe")
        need(self.P > 0 and self.P_rb_th > 0 and self.noise > 0, "P, P_rb_th and noise must be > 0")
        need(math.isfinite(self.gamma_d_db), "gamma_d_db must be finite")
        need(self.mean_interarrival > 0 and self.mean_duration > 0, "traffic means must be > 0")
        need(self.max_attempts >= 1, "max_attempts must be >= 1")


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _coerce(key: str, raw: str, lineno: int):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r}") from None


def parse_config(text: str) -> SimConfig:
    """Parse flat ``key = value`` text. Blank lines and ``#`` comments are ignored.

    Keys must be SimConfig field names; missing keys take the defaults.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, raw = line.split("=", 1)
        elif ":" in line:
            key, raw = line.split(":", 1)
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, lineno)
    cfg = SimConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> SimConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SimConfig) -> str:
    lines = []
    for f in fields(SimConfig):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {value!r}")
    return "\n".join(lines) + "\n"


def save_config(cfg: SimConfig, path) -> None:
    Path(path).write_text(format_config(cfg))
