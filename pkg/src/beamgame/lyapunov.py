"""Drift-plus-penalty bookkeeping: virtual queues, auxiliary variables and utility."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VirtualQueueState",
    "EpochRecord",
    "update_z",
    "update_h",
    "solve_aux",
    "gamma_cap",
    "pricing_factors",
    "epoch_throughput",
    "block_throughput",
    "alpha_fair",
    "network_utility",
    "game_ideal_gap",
]


@dataclass
class VirtualQueueState:
    """Power-budget queues ``z`` (one per BS) and auxiliary queues ``h`` (one per UE)."""

    z: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, num_bs: int, num_ues: int) -> "VirtualQueueState":
        return cls(np.zeros(num_bs), np.zeros(num_ues))

    def copy(self) -> "VirtualQueueState":
        return VirtualQueueState(self.z.copy(), self.h.copy())


@dataclass
class EpochRecord:
    """Outcome of one epoch under some scheduling scheme.

    Attributes
    ----------
    x : ndarray, shape (K,)
        Throughput delivered to each UE.
    energy : ndarray, shape (M,)
        Energy radiated by each BS (power times transmission time).
    td : ndarray, shape (K,)
        Data transmission time of each UE, in slots.
    powers : ndarray, shape (M,)
        Representative transmit power of each BS over the epoch.
    stats : dict
        Scheme-specific diagnostics (iteration counts, slot usage, ...).
    """

    x: np.ndarray
    energy: np.ndarray
    td: np.ndarray
    powers: np.ndarray
    stats: dict = field(default_factory=dict)


def update_z(z, energy, budget):
    """Power-budget queue: ``max(z + energy - budget, 0)``; ``budget`` is T*p_avg."""
    energy = np.asarray(energy, dtype=float)
    if np.any(energy < 0):
        raise ValueError("energy must be nonnegative")
    return np.maximum(np.asarray(z, dtype=float) + energy - budget, 0.0)


def update_h(h, gamma, x):
    """Auxiliary queue: ``max(h + gamma - x, 0)``."""
    return np.maximum(np.asarray(h, dtype=float) + gamma - x, 0.0)


def solve_aux(v: float, h, gamma_max, gamma_floor: float = 1e-6):
    """Maximise ``v*log(gamma) - h*gamma`` over ``[gamma_floor, gamma_max]``.

    The objective is concave with stationary point ``v/h``; for ``h = 0`` it
    is increasing and the cap is returned. Works elementwise on arrays.
    """
    h = np.asarray(h, dtype=float)
    gamma_max = np.asarray(gamma_max, dtype=float)
    if v <= 0:
        raise ValueError(f"Lyapunov weight must be positive, got {v!r}")
    if np.any(h < 0):
        raise ValueError("queue values must be nonnegative")
    with np.errstate(over="ignore", divide="ignore"):
        stationary = np.where(h > 0, v / np.where(h > 0, h, 1.0), np.inf)
    lo = np.minimum(gamma_floor, gamma_max)
    out = np.clip(stationary, lo, gamma_max)
    return float(out) if out.ndim == 0 else out


def gamma_cap(num_slots: int, rate, snr_max_gain, p_max):
    """Throughput cap ``T * rate * log(1 + g_max * p_max)`` of the auxiliary variables."""
    return num_slots * rate * np.log1p(np.asarray(snr_max_gain) * p_max)


def pricing_factors(h_selected, z, slots_per_block: int):
    """Per-BS game weights ``(alpha, lambda) = (H * T^b, Z * T^b)``."""
    return (np.asarray(h_selected, dtype=float) * slots_per_block,
            np.asarray(z, dtype=float) * slots_per_block)


def epoch_throughput(sinr, rate: float, weights=None):
    """Sum of per-slot rates ``rate * log(1 + sinr)`` over the slot axis.

    Parameters
    ----------
    sinr : array_like, shape (slots, users)
    rate : float
        Throughput per slot per nat of spectral efficiency (bandwidth times slot length).
    weights : array_like, shape (slots,), optional
        Active time of each row in slots; rows of a block-constant schedule
        can be collapsed into one weighted row. Defaults to one slot each.
    """
    sinr = np.atleast_2d(np.asarray(sinr, dtype=float))
    per_slot = rate * np.log1p(sinr)
    if weights is None:
        return per_slot.sum(axis=0)
    return np.asarray(weights, dtype=float) @ per_slot


def block_throughput(td, sinr, rate: float):
    """Block-constant throughput ``sum_n td_n * rate * log(1 + sinr_n)``."""
    td = np.asarray(td, dtype=float)
    return np.sum(td * rate * np.log1p(np.asarray(sinr, dtype=float)), axis=0)


def alpha_fair(x, alpha: float = 1.0):
    """alpha-fair utility; ``alpha = 1`` is the logarithm."""
    x = np.asarray(x, dtype=float)
    if alpha == 1.0:
        return np.log(x)
    return x ** (1.0 - alpha) / (1.0 - alpha)


def network_utility(mean_throughput, x_floor: float = 1.0, alpha: float = 1.0) -> float:
    """Sum of per-UE utilities of the running-mean throughputs, floored at ``x_floor``."""
    return float(np.sum(alpha_fair(np.maximum(mean_throughput, x_floor), alpha)))


def game_ideal_gap(x_ideal, x_game, x_floor: float = 1.0) -> float:
    """Utility shortfall of the game against the interference-free benchmark.

    Both throughput vectors must come from the same epoch state (channel,
    selection and queues); only the UEs present in them are compared.
    """
    return (network_utility(x_ideal, x_floor) - network_utility(x_game, x_floor))
