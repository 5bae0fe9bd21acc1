"""Scenario generation and geometry: placement, association and beam pointing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import AntennaPattern, FadingParams, NoiseModel, antenna_gain, dbm_to_watts, noise_power, wrap_angle

__all__ = [
    "Scenario",
    "Placement",
    "PointingState",
    "Geometry",
    "default_scenario",
    "place_bs",
    "place_ues",
    "generate_scenario",
    "select_ues",
    "angular_offset",
    "point_beams",
]


@dataclass(frozen=True)
class Scenario:
    """Physical parameters of a multi-operator downlink deployment.

    Powers are in Watts, lengths in meters, angles in radians.
    """

    num_bs: int = 10
    ues_per_bs: int = 10
    grid_side: float = 800.0
    coverage_radius: float = 150.0
    pathloss_eta: float = 4.0
    p_max: float = float(dbm_to_watts(39.0))
    p_avg: float = float(dbm_to_watts(38.13))
    bandwidth: float = 400e6
    carrier_frequency: float = 37e9
    bs_antenna: AntennaPattern = field(default_factory=lambda: AntennaPattern.from_db(math.pi / 18, 20.0))
    ue_antenna: AntennaPattern = field(default_factory=lambda: AntennaPattern.from_db(math.pi / 18, 10.0))
    fading: FadingParams = field(default_factory=FadingParams)
    noise: NoiseModel = field(default_factory=lambda: noise_power(1.5, 290.0, 400e6))
    bs_positions: tuple | None = None
    min_bs_separation: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_bs < 1 or self.ues_per_bs < 1:
            raise ValueError("need at least one BS and one UE per BS")
        if self.p_avg > self.p_max:
            raise ValueError(f"p_avg ({self.p_avg} W) exceeds p_max ({self.p_max} W)")
        if self.coverage_radius > self.grid_side:
            raise ValueError("coverage radius larger than the grid")
        if self.bs_positions is not None and len(self.bs_positions) != self.num_bs:
            raise ValueError(f"{len(self.bs_positions)} BS positions given for {self.num_bs} BSs")

    @property
    def num_ues(self) -> int:
        return self.num_bs * self.ues_per_bs

    @property
    def sigma2(self) -> float:
        return self.noise.sigma2_watts

    @property
    def separation(self) -> float:
        if self.min_bs_separation is None:
            return 2.0 * self.coverage_radius / 3.0
        return self.min_bs_separation


def default_scenario(**overrides) -> Scenario:
    return Scenario(**overrides)


@dataclass(frozen=True)
class Placement:
    bs_positions: np.ndarray
    ue_positions: np.ndarray
    association: np.ndarray

    @property
    def num_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def num_ues(self) -> int:
        return len(self.ue_positions)

    def members(self, bs: int) -> np.ndarray:
        return np.flatnonzero(self.association == bs)

    def member_lists(self) -> list[np.ndarray]:
        return [self.members(i) for i in range(self.num_bs)]


@dataclass(frozen=True)
class PointingState:
    bs_boresight: np.ndarray
    ue_boresight: np.ndarray


def place_bs(scenario: Scenario, rng: np.random.Generator, max_tries: int = 100_000) -> np.ndarray:
    """BS coordinates: the explicit list if given, else uniform with a separation floor."""
    if scenario.bs_positions is not None:
        return np.asarray(scenario.bs_positions, dtype=float).reshape(scenario.num_bs, 2)
    sep = scenario.separation
    points: list[np.ndarray] = []
    for _ in range(max_tries):
        cand = rng.uniform(0.0, scenario.grid_side, size=2)
        if all(np.hypot(*(cand - q)) >= sep for q in points):
            points.append(cand)
            if len(points) == scenario.num_bs:
                return np.array(points)
    raise RuntimeError(
        f"could not place {scenario.num_bs} BSs {sep} m apart on a {scenario.grid_side} m grid")


def place_ues(bs_positions: np.ndarray, ues_per_bs: int, radius: float,
              rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform-by-area UE drops in each BS disk; UEs are numbered BS by BS."""
    m = len(bs_positions)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=(m, ues_per_bs)))
    phi = rng.uniform(-math.pi, math.pi, size=(m, ues_per_bs))
    # a UE exactly on top of its BS has no defined bearing
    r = np.maximum(r, 1e-3)
    xy = bs_positions[:, None, :] + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    association = np.repeat(np.arange(m), ues_per_bs)
    return xy.reshape(-1, 2), association


def generate_scenario(scenario: Scenario, bs_rng: np.random.Generator | None = None,
                      ue_rng: np.random.Generator | None = None) -> Placement:
    """Draw a placement for ``scenario``; separate streams keep BS sites fixed when K changes."""
    if bs_rng is None:
        bs_rng = np.random.default_rng([scenario.seed, 0])
    if ue_rng is None:
        ue_rng = np.random.default_rng([scenario.seed, 1])
    bs = place_bs(scenario, bs_rng)
    ues, assoc = place_ues(bs, scenario.ues_per_bs, scenario.coverage_radius, ue_rng)
    return Placement(bs, ues, assoc)


def select_ues(members: list[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """One UE per BS, uniformly from its associated set."""
    counts = np.array([len(m) for m in members])
    if np.any(counts == 0):
        raise ValueError("every BS needs at least one associated UE")
    picks = rng.integers(0, counts)
    return np.array([m[k] for m, k in zip(members, picks)])


def angular_offset(from_position, boresight: float, to_position) -> float:
    """Signed angle in (-pi, pi] from the boresight to the direction of ``to_position``."""
    a = np.asarray(from_position, dtype=float)
    b = np.asarray(to_position, dtype=float)
    d = b - a
    if d[0] == 0.0 and d[1] == 0.0:
        raise ValueError("angular offset undefined for coincident points")
    return wrap_angle(math.atan2(d[1], d[0]) - boresight)


def point_beams(geometry: "Geometry", selected: np.ndarray) -> PointingState:
    """BS beams at their selected UEs, UE beams at their serving BSs."""
    bs_idx = np.arange(geometry.num_bs)
    return PointingState(
        bs_boresight=geometry.bearing_bs_ue[bs_idx, selected],
        ue_boresight=geometry.ue_boresight.copy(),
    )


class Geometry:
    """Distances and bearings of a placement, plus the static UE-side antenna gains.

    UEs always point at their serving BS, so their gains towards every BS
    are fixed. BS gains depend on which UE each BS serves.
    """

    def __init__(self, placement: Placement, bs_antenna: AntennaPattern,
                 ue_antenna: AntennaPattern, eta: float):
        self.placement = placement
        self.bs_antenna = bs_antenna
        self.ue_antenna = ue_antenna
        self.eta = eta
        bs = placement.bs_positions
        ue = placement.ue_positions
        delta = ue[:, None, :] - bs[None, :, :]  # (K, M): BS -> UE
        self.distance = np.hypot(delta[..., 0], delta[..., 1])
        if np.any(self.distance == 0.0):
            raise ValueError("a UE coincides with a BS")
        self.bearing_bs_ue = np.arctan2(delta[..., 1], delta[..., 0]).T  # (M, K)
        bearing_ue_bs = np.arctan2(-delta[..., 1], -delta[..., 0])  # (K, M)
        serving = placement.association
        self.ue_boresight = bearing_ue_bs[np.arange(len(ue)), serving]
        self.ue_gain = antenna_gain(ue_antenna, bearing_ue_bs - self.ue_boresight[:, None])
        self.path_gain = self.distance ** (-eta)
        self.aligned_gain = bs_antenna.g_max * ue_antenna.g_max * self.path_gain[np.arange(len(ue)), serving]

    @property
    def num_bs(self) -> int:
        return self.placement.num_bs

    @property
    def num_ues(self) -> int:
        return self.placement.num_ues

    def bs_gain(self, selected: np.ndarray, ues=None) -> np.ndarray:
        """BS antenna gain towards ``ues`` (rows) from every BS (columns)."""
        boresight = self.bearing_bs_ue[np.arange(self.num_bs), selected]
        bearings = self.bearing_bs_ue if ues is None else self.bearing_bs_ue[:, ues]
        return antenna_gain(self.bs_antenna, bearings - boresight[:, None]).T

    def hbar2(self, selected: np.ndarray, fading: np.ndarray, ues=None) -> np.ndarray:
        """Composite gains hbar^2 from every BS to ``ues`` when BSs serve ``selected``.

        ``fading`` is the (K, M) amplitude matrix for the epoch.
        """
        rows = slice(None) if ues is None else ues
        return (self.ue_gain[rows] * self.bs_gain(selected, ues)
                * fading[rows] ** 2 * self.path_gain[rows])

    def direct_gain(self, fading: np.ndarray) -> np.ndarray:
        """Aligned serving-link gain of every UE (both main lobes)."""
        k = np.arange(self.num_ues)
        return self.aligned_gain * fading[k, self.placement.association] ** 2
