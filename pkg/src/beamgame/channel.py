"""Physical-layer models: keyhole antennas, Nakagami-m fading, noise and SINR.

All powers are carried in Watts; dBm only appears in the conversion helpers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BOLTZMANN = 1.38e-23  # J/K, value used for the noise floor

__all__ = [
    "BOLTZMANN",
    "AntennaPattern",
    "FadingParams",
    "NoiseModel",
    "LinkGain",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "wrap_angle",
    "derive_antenna_gains",
    "antenna_gain",
    "sample_fading",
    "noise_power",
    "link_gain",
    "interference_plus_noise",
    "equivalent_gain",
    "sinr",
]


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0


def wrap_angle(theta):
    """Map angles onto (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def derive_antenna_gains(beam_width: float, msr: float) -> tuple[float, float]:
    """Main- and side-lobe gains of a keyhole pattern with unit radiated power.

    Parameters
    ----------
    beam_width : float
        Main-lobe width in radians, strictly between 0 and 2*pi.
    msr : float
        Main-to-side-lobe ratio as a linear factor (>= 1).

    Returns
    -------
    (g_max, g_min) : tuple of float
    """
    if not 0.0 < beam_width < 2.0 * math.pi:
        raise ValueError(f"beam width must lie in (0, 2*pi), got {beam_width!r}")
    if not msr >= 1.0:
        raise ValueError(f"main-to-side-lobe ratio must be >= 1, got {msr!r}")
    g_min = 1.0 / ((msr - 1.0) * beam_width + 2.0 * math.pi)
    return msr * g_min, g_min


@dataclass(frozen=True)
class AntennaPattern:
    """Sectorized (keyhole) antenna: constant gain inside the beam, constant outside."""

    beam_width: float
    msr: float
    g_max: float = field(init=False)
    g_min: float = field(init=False)

    def __post_init__(self):
        g_max, g_min = derive_antenna_gains(self.beam_width, self.msr)
        object.__setattr__(self, "g_max", g_max)
        object.__setattr__(self, "g_min", g_min)

    @classmethod
    def from_db(cls, beam_width: float, msr_db: float) -> "AntennaPattern":
        return cls(beam_width, float(db_to_linear(msr_db)))

    @property
    def msr_db(self) -> float:
        return float(linear_to_db(self.msr))

    @property
    def radiated_power(self) -> float:
        return self.beam_width * self.g_max + (2.0 * math.pi - self.beam_width) * self.g_min

    def gain(self, offset):
        return antenna_gain(self, offset)


def antenna_gain(pattern: AntennaPattern, offset):
    """Gain seen at angular ``offset`` from boresight; the lobe edge is main lobe."""
    off = np.abs(wrap_angle(offset))
    out = np.where(off <= pattern.beam_width / 2.0, pattern.g_max, pattern.g_min)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class FadingParams:
    """Nakagami-m parameters: shape ``mu`` and mean-square gain ``omega``."""

    mu: float = 1.0
    omega: float = 1e-3

    def __post_init__(self):
        if not self.mu > 0 or not self.omega > 0:
            raise ValueError(f"Nakagami parameters must be positive, got mu={self.mu}, omega={self.omega}")


def sample_fading(params: FadingParams, rng: np.random.Generator, size=None):
    """Draw Nakagami-m amplitudes; ``h**2`` is Gamma(mu, omega/mu)."""
    power = rng.gamma(params.mu, params.omega / params.mu, size=size)
    return np.sqrt(power)


@dataclass(frozen=True)
class NoiseModel:
    noise_figure_db: float
    temperature_k: float
    bandwidth_hz: float

    @property
    def sigma2_dbm(self) -> float:
        return (10.0 * math.log10(BOLTZMANN * self.temperature_k * 1e3)
                + self.noise_figure_db + 10.0 * math.log10(self.bandwidth_hz))

    @property
    def sigma2_watts(self) -> float:
        return float(dbm_to_watts(self.sigma2_dbm))


def noise_power(nr_db: float, temperature_k: float, bandwidth_hz: float) -> NoiseModel:
    """Thermal noise over ``bandwidth_hz`` for a receiver with noise figure ``nr_db``."""
    if not bandwidth_hz > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz!r}")
    if not temperature_k > 0:
        raise ValueError(f"temperature must be positive, got {temperature_k!r}")
    return NoiseModel(float(nr_db), float(temperature_k), float(bandwidth_hz))


@dataclass(frozen=True)
class LinkGain:
    """Composite power gain of one BS-UE pair and its four factors."""

    ue_gain: float
    bs_gain: float
    fading_power: float
    path_gain: float

    @property
    def hbar2(self) -> float:
        return self.ue_gain * self.bs_gain * self.fading_power * self.path_gain


def link_gain(bs_position, ue_position, bs_boresight: float, ue_boresight: float,
              bs_pattern: AntennaPattern, ue_pattern: AntennaPattern,
              h: float, eta: float) -> LinkGain:
    """Equivalent power gain between a BS and a UE for given beam pointing."""
    bs_position = np.asarray(bs_position, dtype=float)
    ue_position = np.asarray(ue_position, dtype=float)
    delta = ue_position - bs_position
    d = float(np.hypot(delta[0], delta[1]))
    if d == 0.0:
        raise ValueError("BS and UE positions coincide")
    bearing_bs = math.atan2(delta[1], delta[0])
    bearing_ue = math.atan2(-delta[1], -delta[0])
    return LinkGain(
        ue_gain=antenna_gain(ue_pattern, bearing_ue - ue_boresight),
        bs_gain=antenna_gain(bs_pattern, bearing_bs - bs_boresight),
        fading_power=float(h) ** 2,
        path_gain=d ** (-eta),
    )


def interference_plus_noise(hbar2_row, serving: int, powers, sigma2: float) -> float:
    """Received interference from every non-serving BS plus noise."""
    hbar2_row = np.asarray(hbar2_row, dtype=float)
    powers = np.asarray(powers, dtype=float)
    total = float(hbar2_row @ powers) - hbar2_row[serving] * powers[serving]
    return total + sigma2


def equivalent_gain(hbar2_row, serving: int, powers, sigma2: float) -> float:
    """Direct gain normalised by interference plus noise, so that SINR = g * p."""
    return float(hbar2_row[serving]) / interference_plus_noise(hbar2_row, serving, powers, sigma2)


def sinr(hbar2_row, serving: int, powers, sigma2: float) -> float:
    """SINR at a UE given the gains from all BSs and their transmit powers.

    ``hbar2_row[l]`` is the composite gain from BS ``l`` to the UE and
    ``powers[l]`` the power BS ``l`` radiates (zero for silent BSs).
    """
    return equivalent_gain(hbar2_row, serving, powers, sigma2) * float(powers[serving])
