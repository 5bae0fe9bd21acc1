"""Exclusive-channel baselines: p-persistent and CSMA/CA contention, ideal and random-power variants.

Schedules mark each slot with the owning BS, ``IDLE`` or ``CONTENTION``
(collisions, sensing and election slots). Only one BS owns any slot, so
throughput on owned slots is computed from the interference-free SNR.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lyapunov import EpochRecord, VirtualQueueState

__all__ = [
    "IDLE",
    "CONTENTION",
    "ContentionConfig",
    "TransmissionSchedule",
    "EpochInputs",
    "baseline_power",
    "backoff_window",
    "p_persistent_schedule",
    "csma_ca_schedule",
    "estimate_td",
    "p_persistent_epoch",
    "csma_ca_epoch",
    "ideal_epoch",
    "random_power_variant",
]

IDLE = -1
CONTENTION = -2


@dataclass(frozen=True)
class ContentionConfig:
    """Contention parameters.

    ``sensing_slots`` is the carrier-sensing overhead charged before every
    CSMA/CA grant; ``success_backoff`` is the window drawn by a BS right
    after a successful grant; after ``C`` collisions the window is
    ``backoff_base * 2**C``, capped at ``cw_max`` and the epoch length.
    """

    p_c: float = 0.1
    cw_min: int = 20
    cw_max: int = 200
    tx_duration: int = 2
    sensing_slots: int = 1
    backoff_base: int = 1
    success_backoff: int = 2

    def __post_init__(self):
        if not 0.0 < self.p_c <= 1.0:
            raise ValueError(f"contention probability must lie in (0, 1], got {self.p_c}")
        if not 1 <= self.cw_min <= self.cw_max:
            raise ValueError(f"need 1 <= cw_min <= cw_max, got {self.cw_min}, {self.cw_max}")
        if self.tx_duration < 1 or self.sensing_slots < 0:
            raise ValueError("grant length must be >= 1 and sensing overhead >= 0")
        if self.backoff_base < 1 or self.success_backoff < 1:
            raise ValueError("backoff windows must be >= 1")


@dataclass
class TransmissionSchedule:
    """Per-slot channel owner and the UE it serves (-1 when nobody transmits)."""

    owner: np.ndarray
    served: np.ndarray

    @property
    def num_slots(self) -> int:
        return len(self.owner)

    def owned_slots(self, num_bs: int) -> np.ndarray:
        own = self.owner[self.owner >= 0]
        return np.bincount(own, minlength=num_bs)

    def ue_slots(self, num_ues: int) -> np.ndarray:
        s = self.served[self.served >= 0]
        return np.bincount(s, minlength=num_ues)

    @property
    def idle_slots(self) -> int:
        return int(np.sum(self.owner == IDLE))

    @property
    def contention_slots(self) -> int:
        return int(np.sum(self.owner == CONTENTION))


@dataclass(frozen=True)
class EpochInputs:
    """Everything an exclusive-channel scheme needs about one epoch.

    Attributes
    ----------
    direct_gain : ndarray, shape (K,)
        Aligned serving-link gain of every UE this epoch.
    members : list of ndarray
        UEs associated with each BS.
    selected : ndarray, shape (M,)
        UE drawn by each BS for the epoch.
    rate : float
        Throughput per slot per nat of spectral efficiency.
    energy_scale : float
        Energy per Watt-slot in queue units.
    efficiency : float
        Fraction of every slot left for data after feedback.
    """

    direct_gain: np.ndarray
    members: list
    selected: np.ndarray
    p_max: np.ndarray
    sigma2: float
    num_blocks: int
    block_len: int
    rate: float
    energy_scale: float = 1.0
    efficiency: float = 1.0

    @property
    def num_bs(self) -> int:
        return len(self.members)

    @property
    def num_ues(self) -> int:
        return len(self.direct_gain)

    @property
    def num_slots(self) -> int:
        return self.num_blocks * self.block_len

    @property
    def serving(self) -> np.ndarray:
        out = np.empty(self.num_ues, dtype=int)
        for i, m in enumerate(self.members):
            out[m] = i
        return out

    @property
    def price_bandwidth(self) -> float:
        """Throughput-per-energy conversion that enters the water level."""
        return self.rate / self.energy_scale


def baseline_power(h_queue, z_queue, td_estimate, gain, bandwidth, p_max):
    """Maximiser of ``H*Td*W*log(1+g*p) - Z*Td*p`` over ``[0, p_max]``.

    ``Td`` cancels unless it is zero, in which case nothing is sent.
    ``Z = 0`` with ``H > 0`` gives ``p_max``.
    """
    h = np.asarray(h_queue, dtype=float)
    z = np.asarray(z_queue, dtype=float)
    td = np.asarray(td_estimate, dtype=float)
    g = np.asarray(gain, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        level = np.where(z > 0, h * bandwidth / np.where(z > 0, z, 1.0), np.inf)
        p = np.clip(level - 1.0 / g, 0.0, p_max)
    p = np.where((h > 0) & (td > 0) & (g > 0), p, 0.0)
    return float(p) if p.ndim == 0 else p


def backoff_window(collisions: int, cfg: ContentionConfig, num_slots: int) -> int:
    """Largest backoff after ``collisions`` consecutive collisions."""
    if collisions <= 0:
        return min(cfg.success_backoff, num_slots)
    return int(min(cfg.backoff_base * 2 ** min(collisions, 62), cfg.cw_max, num_slots))


def p_persistent_schedule(members, num_blocks: int, block_len: int, cfg: ContentionConfig,
                          rng: np.random.Generator) -> TransmissionSchedule:
    """Per-block election: slots repeat until exactly one BS attempts.

    The election slot and collisions are overhead; the winner serves one
    uniformly chosen UE for the rest of the block.
    """
    m = len(members)
    total = num_blocks * block_len
    owner = np.full(total, IDLE, dtype=int)
    served = np.full(total, -1, dtype=int)
    for b in range(num_blocks):
        start, end = b * block_len, (b + 1) * block_len
        for t in range(start, end):
            attempts = np.flatnonzero(rng.random(m) < cfg.p_c)
            if len(attempts) == 0:
                continue
            owner[t] = CONTENTION
            if len(attempts) == 1:
                winner = int(attempts[0])
                owner[t + 1:end] = winner
                pool = members[winner]
                served[t + 1:end] = pool[rng.integers(len(pool))]
                break
    return TransmissionSchedule(owner, served)


def csma_ca_schedule(selected, num_slots: int, cfg: ContentionConfig,
                     rng: np.random.Generator, record_windows: bool = False):
    """Epoch-long CSMA/CA with binary exponential backoff.

    Counters start uniform on ``1..cw_min`` and count down on every slot
    in which the channel is not carrying data. A lone BS reaching zero
    senses for ``sensing_slots`` slots and then sends ``tx_duration`` data
    slots to its selected UE; simultaneous attempts collide and each
    collider redraws from its doubled window.

    Returns the schedule, plus the list of ``(bs, window)`` collision
    redraws when ``record_windows`` is set.
    """
    selected = np.asarray(selected, dtype=int)
    m = len(selected)
    owner = np.full(num_slots, IDLE, dtype=int)
    served = np.full(num_slots, -1, dtype=int)
    counters = rng.integers(1, min(cfg.cw_min, num_slots) + 1, size=m)
    collisions = np.zeros(m, dtype=int)
    windows = []
    t = 0
    while t < num_slots:
        counters -= 1
        ready = np.flatnonzero(counters <= 0)
        if len(ready) == 0:
            t += 1
            continue
        if len(ready) > 1:
            owner[t] = CONTENTION
            for i in ready:
                collisions[i] += 1
                w = backoff_window(collisions[i], cfg, num_slots)
                counters[i] = rng.integers(1, w + 1)
                if record_windows:
                    windows.append((int(i), w))
            t += 1
            continue
        i = int(ready[0])
        sense_end = min(t + cfg.sensing_slots, num_slots)
        owner[t:sense_end] = CONTENTION
        data_end = min(sense_end + cfg.tx_duration, num_slots)
        owner[sense_end:data_end] = i
        served[sense_end:data_end] = selected[i]
        collisions[i] = 0
        counters[i] = rng.integers(1, backoff_window(0, cfg, num_slots) + 1)
        # other counters keep counting through the sensing slot(s)
        if cfg.sensing_slots > 1:
            others = np.arange(m) != i
            counters[others] -= (sense_end - t - 1)
        t = data_end if data_end > t else t + 1
    sched = TransmissionSchedule(owner, served)
    return (sched, windows) if record_windows else sched


def estimate_td(protocol: str, inputs: EpochInputs, cfg: ContentionConfig,
                rng: np.random.Generator) -> np.ndarray:
    """Expected data slots per UE from one simulated contention pass.

    The pass only fixes the total number of data slots; by symmetry among
    BSs (and among the UEs of a BS for p-persistent) it is split evenly.
    """
    m = inputs.num_bs
    est = np.zeros(inputs.num_ues)
    if protocol == "p_persistent":
        sched = p_persistent_schedule(inputs.members, inputs.num_blocks, inputs.block_len, cfg, rng)
        data = float(np.sum(sched.owner >= 0))
        for mem in inputs.members:
            est[mem] = data / (m * len(mem))
    elif protocol == "csma_ca":
        sched = csma_ca_schedule(inputs.selected, inputs.num_slots, cfg, rng)
        data = float(np.sum(sched.owner >= 0))
        est[inputs.selected] = data / m
    else:
        raise ValueError(f"unknown contention protocol {protocol!r}")
    return est * inputs.efficiency


def _exclusive_record(sched: TransmissionSchedule, ue_power: np.ndarray, inputs: EpochInputs,
                      bs_power: np.ndarray) -> EpochRecord:
    """Throughput and energy of an exclusive schedule with per-UE powers."""
    k = inputs.num_ues
    td = sched.ue_slots(k) * inputs.efficiency
    snr = inputs.direct_gain * ue_power / inputs.sigma2
    x = td * inputs.rate * np.log1p(snr)
    energy = np.bincount(inputs.serving, weights=td * ue_power, minlength=inputs.num_bs)
    energy = energy * inputs.energy_scale
    stats = {
        "owned_slots": sched.owned_slots(inputs.num_bs),
        "idle_slots": sched.idle_slots,
        "contention_slots": sched.contention_slots,
    }
    return EpochRecord(x=x, energy=energy, td=td, powers=bs_power, stats=stats)


def _optimized_ue_power(queues: VirtualQueueState, td_est: np.ndarray, inputs: EpochInputs) -> np.ndarray:
    serving = inputs.serving
    g = inputs.direct_gain / inputs.sigma2
    return baseline_power(queues.h, queues.z[serving], td_est, g, inputs.price_bandwidth,
                          inputs.p_max[serving])


def p_persistent_epoch(inputs: EpochInputs, queues: VirtualQueueState, cfg: ContentionConfig,
                       rng: np.random.Generator, estimation_rng: np.random.Generator,
                       powers=None) -> EpochRecord:
    """One epoch of block-wise p-persistent access.

    Powers are solved per UE at the start of the epoch from the queues and
    a simulated contention pass; ``powers`` (one per BS) overrides them.
    """
    if powers is None:
        td_est = estimate_td("p_persistent", inputs, cfg, estimation_rng)
        ue_power = _optimized_ue_power(queues, td_est, inputs)
    else:
        ue_power = np.asarray(powers, dtype=float)[inputs.serving]
    sched = p_persistent_schedule(inputs.members, inputs.num_blocks, inputs.block_len, cfg, rng)
    bs_power = np.array([ue_power[m].mean() for m in inputs.members])
    return _exclusive_record(sched, ue_power, inputs, bs_power)


def csma_ca_epoch(inputs: EpochInputs, queues: VirtualQueueState, cfg: ContentionConfig,
                  rng: np.random.Generator, estimation_rng: np.random.Generator,
                  powers=None) -> EpochRecord:
    """One epoch of CSMA/CA; every BS serves its epoch-selected UE."""
    if powers is None:
        td_est = estimate_td("csma_ca", inputs, cfg, estimation_rng)
        ue_power = _optimized_ue_power(queues, td_est, inputs)
    else:
        ue_power = np.zeros(inputs.num_ues)
        ue_power[inputs.selected] = np.asarray(powers, dtype=float)
    sched = csma_ca_schedule(inputs.selected, inputs.num_slots, cfg, rng)
    return _exclusive_record(sched, ue_power, inputs, ue_power[inputs.selected])


def ideal_epoch(inputs: EpochInputs, queues: VirtualQueueState) -> EpochRecord:
    """Interference-free benchmark: every BS serves its selected UE in every slot."""
    sel = inputs.selected
    slots = inputs.num_slots * inputs.efficiency
    g = inputs.direct_gain[sel] / inputs.sigma2
    p = baseline_power(queues.h[sel], queues.z, slots, g, inputs.price_bandwidth, inputs.p_max)
    x = np.zeros(inputs.num_ues)
    td = np.zeros(inputs.num_ues)
    x[sel] = slots * inputs.rate * np.log1p(g * p)
    td[sel] = slots
    energy = slots * p * inputs.energy_scale
    return EpochRecord(x=x, energy=energy, td=td, powers=p, stats={})


def random_power_variant(protocol: str, inputs: EpochInputs, queues: VirtualQueueState,
                         cfg: ContentionConfig, rng: np.random.Generator,
                         power_rng: np.random.Generator) -> EpochRecord:
    """Same contention as ``protocol`` with per-BS powers uniform on ``[0, p_max]``."""
    powers = power_rng.uniform(0.0, 1.0, size=inputs.num_bs) * inputs.p_max
    if protocol == "p_persistent":
        return p_persistent_epoch(inputs, queues, cfg, rng, None, powers=powers)
    if protocol == "csma_ca":
        return csma_ca_epoch(inputs, queues, cfg, rng, None, powers=powers)
    raise ValueError(f"unknown contention protocol {protocol!r}")
