"""Non-cooperative power game between BSs: payoffs, best responses and equilibrium search."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GameInstance",
    "NEResult",
    "best_response_power",
    "payoff",
    "best_response",
    "best_response_map",
    "parallel_update",
    "build_q_matrix",
    "principal_minors",
    "is_p_matrix",
    "verify_ne",
    "ideal_powers",
    "MAX_P_MATRIX_SIZE",
]

MAX_P_MATRIX_SIZE = 20


@dataclass(frozen=True)
class GameInstance:
    """One block's game.

    ``gains[i, l]`` is the composite gain from BS ``l`` to the UE selected by
    BS ``i``; the diagonal holds the direct links. ``bandwidth`` multiplies
    ``alpha`` in the payoff and may carry any unit conversion between the
    throughput and energy scales.
    """

    alpha: np.ndarray
    lam: np.ndarray
    p_max: np.ndarray
    bandwidth: float
    gains: np.ndarray
    sigma2: float

    def __post_init__(self):
        m = len(self.gains)
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).reshape(m))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float).reshape(m))
        object.__setattr__(self, "p_max", np.broadcast_to(np.asarray(self.p_max, dtype=float), (m,)).copy())
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=float))
        if self.gains.shape != (m, m):
            raise ValueError(f"gain matrix must be square, got {self.gains.shape}")
        if np.any(self.alpha < 0) or np.any(self.lam < 0):
            raise ValueError("pricing factors must be nonnegative")
        if np.any(self.p_max <= 0):
            raise ValueError("peak powers must be positive")
        if np.any(self.gains < 0) or np.any(np.diag(self.gains) <= 0):
            raise ValueError("gains must be nonnegative with a positive diagonal")
        if not self.sigma2 > 0:
            raise ValueError("noise power must be positive")

    @property
    def num_players(self) -> int:
        return len(self.gains)

    @property
    def direct(self) -> np.ndarray:
        return np.diag(self.gains)

    def water_level(self) -> np.ndarray:
        """``alpha*W/lambda`` with the degenerate-pricing conventions applied."""
        aw = self.alpha * self.bandwidth
        with np.errstate(divide="ignore", invalid="ignore"):
            level = np.where(self.lam > 0, aw / np.where(self.lam > 0, self.lam, 1.0), np.inf)
        return np.where(self.alpha > 0, level, 0.0)

    def interference(self, powers) -> np.ndarray:
        p = np.asarray(powers, dtype=float)
        return self.gains @ p - self.direct * p

    def equivalent_gains(self, powers) -> np.ndarray:
        return self.direct / (self.interference(powers) + self.sigma2)

    def sinr(self, powers) -> np.ndarray:
        return self.equivalent_gains(powers) * np.asarray(powers, dtype=float)


@dataclass
class NEResult:
    powers: np.ndarray
    iterations: int
    converged: bool
    residual: float
    path: list = field(default_factory=list)


def best_response_power(alpha, lam, bandwidth, g, p_max):
    """Clamped water-filling ``clamp(alpha*W/lambda - 1/g, 0, p_max)``.

    ``lambda = 0`` with ``alpha > 0`` gives ``p_max``; ``alpha = 0`` gives 0.
    """
    alpha = np.asarray(alpha, dtype=float)
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0):
        raise ValueError("equivalent gain must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(lam > 0, alpha * bandwidth / np.where(lam > 0, lam, 1.0), np.inf)
    p = np.clip(level - 1.0 / g, 0.0, p_max)
    p = np.where(alpha > 0, p, 0.0)
    return float(p) if p.ndim == 0 else p


def payoff(instance: GameInstance, i: int, powers) -> float:
    """Payoff of BS ``i``: weighted rate minus priced power."""
    p = np.asarray(powers, dtype=float)
    g = instance.equivalent_gains(p)[i]
    return float(instance.alpha[i] * instance.bandwidth * np.log1p(g * p[i]) - instance.lam[i] * p[i])


def best_response(instance: GameInstance, i: int, powers) -> float:
    """Best power of BS ``i`` against the others' powers in ``powers`` (its own entry is ignored)."""
    g = instance.equivalent_gains(powers)[i]
    return best_response_power(instance.alpha[i], instance.lam[i], instance.bandwidth, g, instance.p_max[i])


def best_response_map(instance: GameInstance, powers, level=None) -> np.ndarray:
    """Simultaneous best responses of every BS to the same profile."""
    if level is None:
        level = instance.water_level()
    g = instance.equivalent_gains(powers)
    return np.clip(level - 1.0 / g, 0.0, instance.p_max)


def parallel_update(instance: GameInstance, initial, epsilon: float = 1e-6,
                    max_iters: int = 50, keep_path: bool = True) -> NEResult:
    """Synchronous best-response iteration from ``initial``.

    Every BS measures interference under the previous iterate and moves to
    its best response. Stops once the squared step ``||p_new - p||^2`` is at
    most ``epsilon`` or after ``max_iters`` updates. ``path`` holds the
    starting point followed by every iterate.
    """
    p = np.clip(np.asarray(initial, dtype=float), 0.0, instance.p_max)
    level = instance.water_level()
    path = [p] if keep_path else []
    step = np.inf
    it = 0
    while it < max_iters:
        new = best_response_map(instance, p, level)
        step = float(np.sum((new - p) ** 2))
        p = new
        it += 1
        if keep_path:
            path.append(p)
        if step <= epsilon:
            break
    return NEResult(powers=p, iterations=it, converged=step <= epsilon, residual=step, path=path)


def build_q_matrix(instance: GameInstance, p_max_all=None) -> np.ndarray:
    """Sufficient-condition matrix for equilibrium uniqueness.

    Diagonal ``alpha_p * W``; off-diagonal entries weigh the cross-to-direct
    gain ratio by the worst-case received power over noise at UE ``q``.
    """
    g = instance.gains
    m = instance.num_players
    pm = instance.p_max if p_max_all is None else np.asarray(p_max_all, dtype=float)
    aw = instance.alpha * instance.bandwidth
    direct = np.diag(g)
    # 1 + sum_i hbar2_{j(q), i} p_i^max / sigma2, per column q
    load = 1.0 + (g @ pm) / instance.sigma2
    ratio = g / direct[None, :]  # ratio[p, q] = g[p, q] / g[q, q]
    q = -aw[:, None] * ratio * load[None, :]
    q[np.arange(m), np.arange(m)] = aw
    return q


def principal_minors(matrix) -> np.ndarray:
    """Every principal minor, ordered by subset size then lexicographically."""
    a = np.asarray(matrix, dtype=float)
    m = len(a)
    out = []
    for k in range(1, m + 1):
        subsets = np.array(list(itertools.combinations(range(m), k)))
        blocks = a[subsets[:, :, None], subsets[:, None, :]]
        out.append(np.linalg.det(blocks))
    return np.concatenate(out) if out else np.empty(0)


def is_p_matrix(matrix) -> bool:
    """True when every principal minor is strictly positive (exhaustive check)."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    if len(a) > MAX_P_MATRIX_SIZE:
        raise ValueError(f"exhaustive minor check limited to {MAX_P_MATRIX_SIZE} players")
    if np.any(np.diag(a) <= 0):
        return False
    return bool(np.all(principal_minors(a) > 0))


def verify_ne(instance: GameInstance, powers, tolerance: float | None = None):
    """Largest deviation of ``powers`` from the joint best response.

    Returns the residual, or ``(residual, residual <= tolerance)`` when a
    tolerance is supplied.
    """
    p = np.asarray(powers, dtype=float)
    residual = float(np.max(np.abs(best_response_map(instance, p) - p)))
    if tolerance is None:
        return residual
    return residual, residual <= tolerance


def ideal_powers(instance: GameInstance) -> np.ndarray:
    """Interference-free benchmark powers ``clamp(alpha*W/lambda - sigma2/hbar2, 0, p_max)``."""
    return np.clip(instance.water_level() - instance.sigma2 / instance.direct, 0.0, instance.p_max)
