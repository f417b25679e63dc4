"""User drops and near-field line-of-sight channels.

Users stand in the xy-plane in front of the array (boresight +x). Each
user carries an N-element vertical ULA with elements at heights
``h0 + l * delta``. The channel between BS antenna ``t_m`` and user
antenna ``r`` at distance ``d`` is the free-space response

    lambda / (4 pi d) * exp(-j 2 pi d / lambda)

evaluated with exact element-pair distances, so spherical wavefronts
are kept for every pair.
"""

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .geometry import ArrayLayout

__all__ = [
    "SPEED_OF_LIGHT",
    "ScenarioConfig",
    "UserDrop",
    "ChannelSet",
    "sample_drop",
    "sample_drops",
    "user_antenna_positions",
    "channel_tensor",
    "channel_matrix",
    "drop_records",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Coverage-area and radio parameters.

    Defaults reproduce the reference scenario: 3 GHz, six dual-antenna
    users spaced one wavelength apart, radial range 20 to 5000
    wavelengths over a 120 degree sector, 50 W total power and 3.98 pW
    noise. Length fields left as ``None`` are filled in from the
    wavelength.
    """

    f_c: float = 3e9
    k: int = 6
    n: int = 2
    delta: Optional[float] = None
    h0: float = 1.25
    rho_min: Optional[float] = None
    rho_max: Optional[float] = None
    phi_min: float = -math.pi / 3
    phi_max: float = math.pi / 3
    noise_power: float = 3.98e-12
    p_max: float = 50.0
    bandwidth: float = 100e6

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError("f_c must be positive")
        lam = self.wavelength
        for name, mult in (("delta", 1.0), ("rho_min", 20.0), ("rho_max", 5000.0)):
            value = getattr(self, name)
            object.__setattr__(self, name, mult * lam if value is None else float(value))
        for name in ("k", "n"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))
        if not 0 < self.rho_min <= self.rho_max:
            raise ValueError("rho_min must satisfy 0 < rho_min <= rho_max")
        if not self.phi_min <= self.phi_max:
            raise ValueError("phi_min must not exceed phi_max")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class UserDrop:
    """Planar positions ``(r_x, r_y)`` of the K users, shape ``(K, 2)``."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("drop positions must have shape (K, 2)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def num_users(self) -> int:
        return self.positions.shape[0]

    @property
    def rho(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    @property
    def phi(self) -> np.ndarray:
        return np.arctan2(self.positions[:, 1], self.positions[:, 0])

    def antenna_positions(self, config: ScenarioConfig) -> np.ndarray:
        return user_antenna_positions(self.positions, config)


@dataclass(frozen=True)
class ChannelSet:
    """Stacked user channels ``H[i]`` of shape ``(K, N, M)``."""

    h: np.ndarray

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.h[i]


def sample_drops(config: ScenarioConfig, rng: np.random.Generator,
                 count: Optional[int] = None) -> np.ndarray:
    """Draw user positions, shape ``(K, 2)`` or ``(count, K, 2)``."""
    shape = (config.k,) if count is None else (count, config.k)
    rho = rng.uniform(config.rho_min, config.rho_max, size=shape)
    phi = rng.uniform(config.phi_min, config.phi_max, size=shape)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)


def sample_drop(config: ScenarioConfig, rng: np.random.Generator) -> UserDrop:
    return UserDrop(sample_drops(config, rng))


def user_antenna_positions(xy: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """3D user antenna coordinates, shape ``(..., K, N, 3)``."""
    xy = np.asarray(xy, dtype=float)
    heights = config.h0 + np.arange(config.n) * config.delta
    out = np.empty(xy.shape[:-1] + (config.n, 3))
    out[..., 0] = xy[..., None, 0]
    out[..., 1] = xy[..., None, 1]
    out[..., 2] = heights
    return out


def channel_tensor(bs_positions: np.ndarray, user_xy: np.ndarray,
                   config: ScenarioConfig) -> np.ndarray:
    """Channels for broadcastable batches of layouts and drops.

    ``bs_positions`` has shape ``(..., M, 2)`` holding ``(y, z)``;
    ``user_xy`` has shape ``(..., K, 2)``. Leading dimensions broadcast
    and the result has shape ``(..., K, N, M)``.
    """
    bs = np.asarray(bs_positions, dtype=float)
    ue = user_antenna_positions(user_xy, config)           # (..., K, N, 3)
    dx = ue[..., 0][..., None]                             # (..., K, N, 1)
    dy = ue[..., 1][..., None] - bs[..., None, None, :, 0]
    dz = ue[..., 2][..., None] - bs[..., None, None, :, 1]
    d = np.sqrt(dx * dx + dy * dy + dz * dz)
    if np.any(d == 0):
        raise ValueError("a user antenna coincides with a BS antenna")
    lam = config.wavelength
    return (lam / (4 * np.pi * d)) * np.exp(-2j * np.pi * (d / lam))


def channel_matrix(layout: ArrayLayout, drop: UserDrop,
                   config: ScenarioConfig) -> ChannelSet:
    if drop.num_users != config.k:
        raise ValueError(f"drop has {drop.num_users} users, config expects {config.k}")
    return ChannelSet(channel_tensor(layout.positions, drop.positions, config))


def drop_records(drops, start_id: int = 0):
    """Rows ``(drop_id, user, rho_m, phi_rad, rx_m, ry_m)`` for audit logs."""
    rows = []
    for q, xy in enumerate(drops, start=start_id):
        xy = xy.positions if isinstance(xy, UserDrop) else np.asarray(xy)
        for i, (x, y) in enumerate(xy):
            rows.append((q, i, float(np.hypot(x, y)), float(np.arctan2(y, x)),
                         float(x), float(y)))
    return rows
