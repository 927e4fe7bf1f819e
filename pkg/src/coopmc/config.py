"""System configuration types and the default (Table-scale) parameter set.

All quantities are SI internally: metres, seconds, m^2/s.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

UM = 1e-6
MS = 1e-3


def _vec3(p) -> tuple:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size != 3 or not np.all(np.isfinite(arr)):
        raise ValueError(f"expected a finite 3-vector, got {p!r}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class SpatialConfig:
    tx_position: tuple
    rx_positions: tuple
    fc_position: tuple
    rx_radius: tuple
    fc_radius: float

    def __post_init__(self):
        object.__setattr__(self, "tx_position", _vec3(self.tx_position))
        object.__setattr__(self, "fc_position", _vec3(self.fc_position))
        rxs = tuple(_vec3(p) for p in self.rx_positions)
        if len(rxs) < 1:
            raise ValueError("need at least one RX")
        object.__setattr__(self, "rx_positions", rxs)
        radii = self.rx_radius
        if np.isscalar(radii):
            radii = (float(radii),) * len(rxs)
        radii = tuple(float(r) for r in radii)
        if len(radii) != len(rxs):
            raise ValueError("rx_radius length must match number of RXs")
        object.__setattr__(self, "rx_radius", radii)
        object.__setattr__(self, "fc_radius", float(self.fc_radius))
        if min(radii) <= 0 or self.fc_radius <= 0:
            raise ValueError("radii must be positive")
        if np.any(self.d_tx <= 0) or np.any(self.d_fc <= 0):
            raise ValueError("coincident TX/RX or RX/FC centres")

    @property
    def K(self) -> int:
        return len(self.rx_positions)

    @property
    def d_tx(self) -> np.ndarray:
        return np.linalg.norm(np.asarray(self.rx_positions) - np.asarray(self.tx_position), axis=1)

    @property
    def d_fc(self) -> np.ndarray:
        return np.linalg.norm(np.asarray(self.rx_positions) - np.asarray(self.fc_position), axis=1)


@dataclass(frozen=True)
class TimingConfig:
    t_trans: float
    t_report: float
    dt_rx: float
    dt_fc: float
    m_rx: int
    m_fc: int
    L: int

    def __post_init__(self):
        if min(self.t_trans, self.t_report, self.dt_rx, self.dt_fc) <= 0:
            raise ValueError("durations must be positive")
        if self.m_rx < 0 or self.m_fc < 0 or self.L < 1:
            raise ValueError("sample counts must be >= 0 and L >= 1")
        eps = 1e-12
        if self.m_rx * self.dt_rx > self.t_trans * (1 + 1e-9) + eps:
            raise ValueError("RX samples exceed the transmission phase")
        if self.m_fc * self.dt_fc > self.t_report * (1 + 1e-9) + eps:
            raise ValueError("FC samples exceed the report phase")

    @property
    def T(self) -> float:
        return self.t_trans + self.t_report

    def rx_sample_times(self, j: int) -> np.ndarray:
        """Absolute RX sample instants of interval j (1-based)."""
        return (j - 1) * self.T + self.dt_rx * np.arange(1, self.m_rx + 1)

    def fc_sample_times(self, j: int) -> np.ndarray:
        return (j - 1) * self.T + self.t_trans + self.dt_fc * np.arange(1, self.m_fc + 1)


@dataclass(frozen=True)
class ReleaseConfig:
    s0: int
    s_k: tuple
    alpha_k: tuple
    d0: float
    d_k: tuple
    p1: float

    def __post_init__(self):
        object.__setattr__(self, "s_k", tuple(float(s) for s in self.s_k))
        object.__setattr__(self, "alpha_k", tuple(float(a) for a in self.alpha_k))
        object.__setattr__(self, "d_k", tuple(float(d) for d in self.d_k))
        if self.s0 < 0 or int(self.s0) != self.s0:
            raise ValueError("s0 must be a nonnegative integer")
        if any(s < 0 for s in self.s_k) or any(a < 0 for a in self.alpha_k):
            raise ValueError("release counts and amplification factors must be >= 0")
        if self.d0 <= 0 or any(d <= 0 for d in self.d_k):
            raise ValueError("diffusion coefficients must be positive")
        if not 0.0 <= self.p1 <= 1.0:
            raise ValueError("p1 must lie in [0, 1]")


@dataclass(frozen=True)
class SystemConfig:
    spatial: SpatialConfig
    timing: TimingConfig
    release: ReleaseConfig
    rx_thresholds: tuple = field(default=())

    def __post_init__(self):
        K = self.spatial.K
        th = self.rx_thresholds
        if np.isscalar(th):
            th = (th,) * K
        if len(th) == 0:
            th = (1,) * K
        th = tuple(int(x) for x in th)
        object.__setattr__(self, "rx_thresholds", th)
        r = self.release
        if len(th) != K or len(r.s_k) != K or len(r.alpha_k) != K or len(r.d_k) != K:
            raise ValueError("per-RX parameter lengths must all equal K")
        if any(x < 0 for x in th):
            raise ValueError("RX thresholds must be >= 0")

    @property
    def K(self) -> int:
        return self.spatial.K

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_allocation(self, s_k: Sequence[float]) -> "SystemConfig":
        return self.replace(release=dataclasses.replace(self.release, s_k=tuple(s_k)))

    def with_rx_threshold(self, xi) -> "SystemConfig":
        return self.replace(rx_thresholds=xi)

    def with_alpha(self, alpha: Sequence[float]) -> "SystemConfig":
        return self.replace(release=dataclasses.replace(self.release, alpha_k=tuple(alpha)))

    def with_timing(self, **changes) -> "SystemConfig":
        return self.replace(timing=dataclasses.replace(self.timing, **changes))


# hexagon of RX sites on the circle of radius 0.6 um around (2, 0, 0) um
_HEX_ANGLES = {1: (0,), 2: (0, 180), 3: (0, 120, 240), 4: (0, 60, 180, 240),
               5: (0, 60, 120, 180, 240), 6: (0, 60, 120, 180, 240, 300)}


def symmetric_rx_positions(K: int, radius_um: float = 0.6, x_um: float = 2.0) -> list:
    if K not in _HEX_ANGLES:
        raise ValueError("symmetric layout supports 1 <= K <= 6")
    out = []
    for a in _HEX_ANGLES[K]:
        th = np.deg2rad(a)
        y, z = radius_um * np.cos(th), radius_um * np.sin(th)
        out.append((x_um * UM, round(y, 4) * UM, round(z, 4) * UM))
    return out


def default_config(K: int = 2, rx_positions=None, total_rx_molecules: float = 2000.0,
                   rx_threshold: int = 5, alpha=None, m_fc: int = 10, dt_fc: float = 30e-6,
                   L: int = 20) -> SystemConfig:
    """Baseline system: TX at the origin, FC at (2, 0, 0) um, radii 0.2 um."""
    if rx_positions is None:
        rx_positions = symmetric_rx_positions(K)
    K = len(rx_positions)
    spatial = SpatialConfig(
        tx_position=(0.0, 0.0, 0.0),
        rx_positions=tuple(rx_positions),
        fc_position=(2 * UM, 0.0, 0.0),
        rx_radius=0.2 * UM,
        fc_radius=0.2 * UM,
    )
    timing = TimingConfig(t_trans=1.0 * MS, t_report=0.3 * MS, dt_rx=100e-6, dt_fc=dt_fc,
                          m_rx=5, m_fc=m_fc, L=L)
    s_each = float(np.floor(total_rx_molecules / K + 0.5))
    release = ReleaseConfig(s0=10_000, s_k=(s_each,) * K,
                            alpha_k=tuple(alpha) if alpha is not None else (0.0,) * K,
                            d0=5e-9, d_k=(5e-9,) * K, p1=0.5)
    return SystemConfig(spatial, timing, release, rx_thresholds=(rx_threshold,) * K)
