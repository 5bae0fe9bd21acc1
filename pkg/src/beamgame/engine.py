"""Epoch/block/slot simulation loop, traces and parameter sweeps."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import AntennaPattern, sample_fading
from .game import GameInstance, build_q_matrix, ideal_powers, is_p_matrix, parallel_update
from .lyapunov import (
    EpochRecord,
    VirtualQueueState,
    game_ideal_gap,
    gamma_cap,
    network_utility,
    pricing_factors,
    solve_aux,
    update_h,
    update_z,
)
from .mac import (
    ContentionConfig,
    EpochInputs,
    csma_ca_epoch,
    ideal_epoch,
    p_persistent_epoch,
    random_power_variant,
)
from .topology import Geometry, Scenario, generate_scenario, select_ues

__all__ = [
    "PROTOCOLS",
    "OPTIMIZED_PROTOCOLS",
    "STREAMS",
    "SWEEP_AXES",
    "SimConfig",
    "RunTrace",
    "substream",
    "feedback_efficiency",
    "apply_feedback_overhead",
    "game_epoch",
    "run",
    "apply_axis",
    "sweep",
    "write_trace_csv",
    "write_diagnostics_csv",
    "write_manifest",
]

PROTOCOLS = ("game", "ideal", "p_persistent", "csma_ca", "p_persistent_random", "csma_ca_random")
OPTIMIZED_PROTOCOLS = ("game", "ideal", "p_persistent", "csma_ca")
SWEEP_AXES = ("beam_width", "msr", "ue_count", "feedback", "protocol")

# Independent random streams, keyed by concern. Placement streams are seeded
# from the scenario, the rest from the run configuration.
STREAMS = {
    "bs_placement": 0,
    "ue_placement": 1,
    "fading": 2,
    "selection": 3,
    "contention": 4,
    "estimation": 5,
    "initial_power": 6,
    "random_power": 7,
}


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name]])


@dataclass(frozen=True)
class SimConfig:
    """Run configuration.

    Inside the virtual queues throughput is counted in ``throughput_unit``
    nats and energy in ``energy_unit`` Joules, with slots of
    ``slot_duration`` seconds. These scales set how fast the queues react
    relative to ``lyapunov_v``; reported throughputs, utilities and the
    floors ``x_floor`` and ``gamma_floor`` are always in nats.
    """

    epochs: int = 2000
    blocks_per_epoch: int = 8
    slots_per_block: int = 50
    lyapunov_v: float = 1000.0
    protocol: str = "game"
    feedback_subslots: int = 0
    subslots_per_slot: int = 20
    seed: int = 0
    x_floor: float = 1.0
    gamma_floor: float = 1e-6
    epsilon: float = 1e-6
    max_iters: int | None = None
    slot_duration: float = 1e-3
    throughput_unit: float = 1e8
    energy_unit: float = 0.1
    contention: ContentionConfig = field(default_factory=ContentionConfig)
    zero_cross_gains: bool = False
    track_gap: bool = False
    diagnostics: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        if self.epochs < 0:
            raise ValueError("epoch count must be nonnegative")
        if self.blocks_per_epoch < 1 or self.slots_per_block < 1:
            raise ValueError("need at least one block of one slot")
        if not self.lyapunov_v > 0:
            raise ValueError("Lyapunov weight V must be positive")
        if not 0 <= self.feedback_subslots <= self.subslots_per_slot:
            raise ValueError(f"feedback sub-slots must lie in [0, {self.subslots_per_slot}]")
        if not (self.x_floor > 0 and self.gamma_floor > 0 and self.epsilon > 0):
            raise ValueError("floors and epsilon must be positive")
        if not (self.slot_duration > 0 and self.throughput_unit > 0 and self.energy_unit > 0):
            raise ValueError("unit scales must be positive")
        if self.contention.cw_max > self.slots_per_epoch:
            raise ValueError("cw_max cannot exceed the epoch length")

    @property
    def slots_per_epoch(self) -> int:
        return self.blocks_per_epoch * self.slots_per_block

    @property
    def iteration_cap(self) -> int:
        return self.slots_per_block if self.max_iters is None else self.max_iters

    def rate(self, bandwidth: float) -> float:
        """Throughput per slot per nat of spectral efficiency, in throughput units."""
        return bandwidth * self.slot_duration / self.throughput_unit

    @property
    def energy_scale(self) -> float:
        """Energy of one Watt over one slot, in energy units."""
        return self.slot_duration / self.energy_unit

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunTrace:
    """Per-epoch metrics of one run; every per-epoch array has one row per epoch."""

    utility: np.ndarray
    mean_power: np.ndarray
    z: np.ndarray
    h: np.ndarray
    ne_iterations: np.ndarray
    ne_converged: np.ndarray
    gap: np.ndarray
    mean_throughput: np.ndarray
    p_avg: float = float("nan")
    p_max: float = float("nan")
    ideal_utility: np.ndarray = field(default_factory=lambda: np.empty(0))
    diagnostics: list = field(default_factory=list)
    label: dict = field(default_factory=dict)

    @property
    def epochs(self) -> int:
        return len(self.utility)

    @property
    def final_utility(self) -> float:
        return float(self.utility[-1]) if self.epochs else float("nan")

    def convergence_rate(self) -> float:
        """Fraction of game blocks that met the stopping rule."""
        if self.ne_converged.size == 0 or np.all(np.isnan(self.ne_converged)):
            return float("nan")
        return float(np.nanmean(self.ne_converged))


def feedback_efficiency(config: SimConfig) -> float:
    return (config.subslots_per_slot - config.feedback_subslots) / config.subslots_per_slot


def apply_feedback_overhead(config: SimConfig, slots):
    """Effective data time once ``feedback_subslots`` of every slot carry feedback."""
    return np.asarray(slots, dtype=float) * feedback_efficiency(config)


def _block_weights(path_len: int, block_len: int) -> np.ndarray:
    """Slots spent at each iterate: one per update, the last holds to the end of the block."""
    used = min(path_len, block_len)
    w = np.ones(used)
    w[-1] += block_len - used
    return w


def game_epoch(instance: GameInstance, initial, config: SimConfig, rate: float,
               energy_scale: float, efficiency: float, keep_blocks: bool = False):
    """Run the game scheme for one epoch on a fixed channel.

    Each block starts from the previous block's output. Slot ``s`` of a block
    transmits at the ``s``-th iterate of the best-response dynamics, and the
    last iterate is held once the stopping rule fires.

    Returns
    -------
    x : ndarray, shape (M,)
        Throughput of the selected UEs.
    energy : ndarray, shape (M,)
    final : ndarray, shape (M,)
        Powers at the end of the epoch.
    blocks : list of NEResult
    """
    m = instance.num_players
    g = instance.gains
    direct = instance.direct
    tb = config.slots_per_block
    x = np.zeros(m)
    watt_slots = np.zeros(m)
    p = np.asarray(initial, dtype=float)
    blocks = []
    for _ in range(config.blocks_per_epoch):
        res = parallel_update(instance, p, config.epsilon, config.iteration_cap)
        path = np.asarray(res.path[:tb])
        w = _block_weights(len(res.path), tb)
        received = path @ g.T
        own = path * direct
        sinr = own / (received - own + instance.sigma2)
        x += w @ np.log1p(sinr)
        watt_slots += w @ path
        p = res.powers
        res.path = [] if not keep_blocks else res.path
        blocks.append(res)
    return x * rate * efficiency, watt_slots * energy_scale * efficiency, p, blocks


class _Simulator:
    """State of one run; ``step`` advances one epoch."""

    def __init__(self, scenario: Scenario, config: SimConfig):
        self.scenario = scenario
        self.config = config
        placement = generate_scenario(
            scenario,
            np.random.default_rng([scenario.seed, STREAMS["bs_placement"]]),
            np.random.default_rng([scenario.seed, STREAMS["ue_placement"]]),
        )
        self.placement = placement
        self.geometry = Geometry(placement, scenario.bs_antenna, scenario.ue_antenna, scenario.pathloss_eta)
        self.members = placement.member_lists()
        m, k = placement.num_bs, placement.num_ues
        self.p_max = np.full(m, scenario.p_max)
        self.queues = VirtualQueueState.zeros(m, k)
        seed = config.seed
        self.rng = {name: substream(seed, name) for name in STREAMS if "placement" not in name}
        self.rate = config.rate(scenario.bandwidth)
        self.energy_scale = config.energy_scale
        self.efficiency = feedback_efficiency(config)
        self.budget = config.slots_per_epoch * scenario.p_avg * self.energy_scale

    def step(self, epoch: int):
        cfg = self.config
        sc = self.scenario
        geo = self.geometry
        m, k = self.placement.num_bs, self.placement.num_ues
        fading = sample_fading(sc.fading, self.rng["fading"], size=(k, m))
        selected = select_ues(self.members, self.rng["selection"])
        direct = geo.direct_gain(fading)
        cap = gamma_cap(cfg.slots_per_epoch, self.rate, direct / sc.sigma2, sc.p_max)
        gamma = solve_aux(cfg.lyapunov_v, self.queues.h, cap, cfg.gamma_floor / cfg.throughput_unit)

        stats = {}
        if cfg.protocol == "game":
            rec, stats = self._game(epoch, fading, selected)
        else:
            inputs = EpochInputs(
                direct_gain=direct, members=self.members, selected=selected, p_max=self.p_max,
                sigma2=sc.sigma2, num_blocks=cfg.blocks_per_epoch, block_len=cfg.slots_per_block,
                rate=self.rate, energy_scale=self.energy_scale, efficiency=self.efficiency,
            )
            if cfg.protocol == "ideal":
                rec = ideal_epoch(inputs, self.queues)
            elif cfg.protocol == "p_persistent":
                rec = p_persistent_epoch(inputs, self.queues, cfg.contention,
                                         self.rng["contention"], self.rng["estimation"])
            elif cfg.protocol == "csma_ca":
                rec = csma_ca_epoch(inputs, self.queues, cfg.contention,
                                    self.rng["contention"], self.rng["estimation"])
            else:
                base = cfg.protocol.removesuffix("_random")
                rec = random_power_variant(base, inputs, self.queues, cfg.contention,
                                           self.rng["contention"], self.rng["random_power"])

        self.queues.h = update_h(self.queues.h, gamma, rec.x)
        self.queues.z = update_z(self.queues.z, rec.energy, self.budget)
        return rec, stats

    def _game(self, epoch, fading, selected):
        cfg = self.config
        sc = self.scenario
        gains = self.geometry.hbar2(selected, fading, ues=selected)
        if cfg.zero_cross_gains:
            gains = np.diag(np.diag(gains))
        alpha, lam = pricing_factors(self.queues.h[selected], self.queues.z, cfg.slots_per_block)
        inst = GameInstance(alpha, lam, self.p_max, self.rate / self.energy_scale, gains, sc.sigma2)
        start = self.rng["initial_power"].uniform(0.0, 1.0, size=len(selected)) * self.p_max
        x_sel, energy, final, blocks = game_epoch(inst, start, cfg, self.rate, self.energy_scale,
                                                  self.efficiency)
        k = self.placement.num_ues
        x = np.zeros(k)
        x[selected] = x_sel
        td = np.zeros(k)
        td[selected] = cfg.slots_per_epoch * self.efficiency
        iters = np.array([b.iterations for b in blocks])
        conv = np.array([b.converged for b in blocks])
        stats = {"iterations": iters, "converged": conv}
        if cfg.track_gap:
            slots = cfg.slots_per_epoch * self.efficiency * self.rate
            x_game = slots * np.log1p(inst.sinr(final))
            x_ideal = slots * np.log1p(inst.direct * ideal_powers(inst) / sc.sigma2)
            stats["gap"] = game_ideal_gap(x_ideal * cfg.throughput_unit, x_game * cfg.throughput_unit,
                                          cfg.x_floor)
            stats["ideal_utility"] = network_utility(x_ideal * cfg.throughput_unit, cfg.x_floor)
        if cfg.diagnostics:
            p_ok = is_p_matrix(build_q_matrix(inst)) if np.all(inst.alpha > 0) else False
            stats["blocks"] = [
                {"epoch": epoch, "block": n, "iterations": b.iterations, "converged": b.converged,
                 "residual": b.residual, "p_matrix": p_ok, "powers": b.powers.tolist()}
                for n, b in enumerate(blocks)
            ]
        return EpochRecord(x=x, energy=energy, td=td, powers=final, stats=stats), stats


def run(scenario: Scenario, config: SimConfig) -> RunTrace:
    """Simulate ``config.epochs`` epochs and collect per-epoch metrics."""
    sim = _Simulator(scenario, config)
    e = config.epochs
    m, k = sim.placement.num_bs, sim.placement.num_ues
    utility = np.empty(e)
    mean_power = np.empty((e, m))
    z_hist = np.empty((e, m))
    h_hist = np.empty((e, k))
    iters = np.full(e, np.nan)
    conv = np.full(e, np.nan)
    gap = np.full(e, np.nan)
    ideal_u = np.full(e, np.nan)
    diag_rows = []
    x_sum = np.zeros(k)
    energy_sum = np.zeros(m)
    per_watt = config.slots_per_epoch * sim.energy_scale
    for t in range(e):
        rec, stats = sim.step(t)
        x_sum += rec.x * config.throughput_unit
        energy_sum += rec.energy
        utility[t] = network_utility(x_sum / (t + 1), config.x_floor)
        mean_power[t] = energy_sum / ((t + 1) * per_watt)
        z_hist[t] = sim.queues.z
        h_hist[t] = sim.queues.h
        if "iterations" in stats:
            iters[t] = stats["iterations"].mean()
            conv[t] = stats["converged"].mean()
        if "gap" in stats:
            gap[t] = stats["gap"]
            ideal_u[t] = stats["ideal_utility"]
        diag_rows.extend(stats.get("blocks", []))
    mean_x = x_sum / e if e else x_sum
    return RunTrace(utility=utility, mean_power=mean_power, z=z_hist, h=h_hist, ne_iterations=iters,
                    ne_converged=conv, gap=gap, mean_throughput=mean_x, p_avg=scenario.p_avg,
                    p_max=scenario.p_max, ideal_utility=ideal_u, diagnostics=diag_rows,
                    label={"protocol": config.protocol, "seed": config.seed})


def apply_axis(scenario: Scenario, config: SimConfig, axis: str, value):
    """Return ``(scenario, config)`` with one sweep parameter changed.

    ``beam_width`` is in radians, ``msr`` in dB, ``ue_count`` is the total
    number of UEs (a multiple of the BS count), ``feedback`` the number of
    feedback sub-slots and ``protocol`` a protocol name.
    """
    if axis == "beam_width":
        ant = AntennaPattern(float(value), scenario.bs_antenna.msr)
        return dataclasses.replace(scenario, bs_antenna=ant), config
    if axis == "msr":
        ant = AntennaPattern.from_db(scenario.bs_antenna.beam_width, float(value))
        return dataclasses.replace(scenario, bs_antenna=ant), config
    if axis == "ue_count":
        total = int(value)
        if total % scenario.num_bs:
            raise ValueError(f"{total} UEs cannot be split evenly over {scenario.num_bs} BSs")
        return dataclasses.replace(scenario, ues_per_bs=total // scenario.num_bs), config
    if axis == "feedback":
        return scenario, config.replace(feedback_subslots=int(value))
    if axis == "protocol":
        return scenario, config.replace(protocol=str(value))
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


def _run_args(args):
    return run(*args)


def sweep(scenario: Scenario, config: SimConfig, axis: str, values, seeds=None,
          workers: int = 1) -> list[tuple[object, int, RunTrace]]:
    """Run every ``(value, seed)`` pair with common random numbers.

    Each seed drives both the layout and the run streams, so points that
    share a seed see the same draws. Results come back in input order as
    ``(value, seed, trace)``.
    """
    seeds = [config.seed] if seeds is None else list(seeds)
    jobs, keys = [], []
    for value in values:
        for s in seeds:
            sc, cf = apply_axis(dataclasses.replace(scenario, seed=s), config.replace(seed=s), axis, value)
            jobs.append((sc, cf))
            keys.append((value, s))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_args, jobs))
    else:
        traces = [run(*j) for j in jobs]
    out = []
    for (value, s), tr in zip(keys, traces):
        tr.label.update({"axis": axis, "value": value})
        out.append((value, s, tr))
    return out


def write_trace_csv(path, trace: RunTrace) -> Path:
    """One row per epoch: utility, running-mean power per BS, NE statistics, gap."""
    path = Path(path)
    m = trace.mean_power.shape[1] if trace.mean_power.ndim == 2 else 0
    header = (["epoch", "utility"] + [f"mean_power_bs{i}" for i in range(m)]
              + ["ne_iterations_mean", "ne_converged_fraction", "gap"])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(trace.epochs):
            w.writerow([t + 1, _fmt(trace.utility[t])] + [_fmt(v) for v in trace.mean_power[t]]
                       + [_fmt(trace.ne_iterations[t]), _fmt(trace.ne_converged[t]), _fmt(trace.gap[t])])
    return path


def write_diagnostics_csv(path, trace: RunTrace) -> Path:
    """Per-block NE powers, iteration counts and P-matrix verdicts."""
    path = Path(path)
    rows = trace.diagnostics
    m = len(rows[0]["powers"]) if rows else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "block", "iterations", "converged", "residual", "p_matrix"]
                   + [f"power_bs{i}" for i in range(m)])
        for r in rows:
            w.writerow([r["epoch"] + 1, r["block"], r["iterations"], int(r["converged"]),
                        _fmt(r["residual"]), int(r["p_matrix"])] + [_fmt(v) for v in r["powers"]])
    return path


def write_manifest(path, entries: list[dict]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(entries, indent=2, default=_jsonable) + "\n")
    return path


def _fmt(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    return str(obj)
