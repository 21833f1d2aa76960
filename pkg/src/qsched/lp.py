"""Delay-optimal policy search as a linear program over departure variables.

The decision variables are ``y[k, w]``: the stationary probability that a
slot ends with a departure over channel ``w`` that leaves ``k`` packets
behind (``k = 0..K-1``).  Cut balance between levels ``<= k`` and ``> k``
gives ``sum_i pi[k-i] r[i] = sum_w eta[w] y[k, w]``, which is triangular in
``pi`` and lets the queue distribution be written as ``pi = G @ y + e_K``
(the last row enforces normalization).  Delay, power and the feasibility
bounds ``y[k, w] <= sum_m theta[m] pi[k+1-m]`` are then all affine in ``y``.

The formulation is exact for the finite buffer, overflow included; when the
buffer never fills it coincides with the classical throughput-constrained
form where ``sum eta y = abar``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import simplex
from .markov import DimensionMismatch, Policy, evaluate_policy
from .model import SystemConfig, tail_masses, xi_constant
from .simplex import LinearProgram, Status

log = logging.getLogger(__name__)

STRUCTURE_TOL = 1e-7
DEGENERATE_DENOM = 1e-12
TIE_EPS = 1e-9
DEFAULT_GRID = 60


class DegenerateArrivals(ValueError):
    pass


class NotThresholdStructured(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GMatrix:
    """Affine map ``pi = matrix @ y.ravel() + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    @property
    def K(self) -> int:
        return self.matrix.shape[0] - 1


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-channel queue thresholds.

    In channel ``w`` the scheduler stays silent below ``thresholds[w]``,
    transmits with probability ``frac[w]`` exactly at it and always above it.
    ``thresholds[w] = K + 1`` means the channel is never used.
    """

    thresholds: tuple[int, ...]
    frac: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "frac": list(self.frac)}


@dataclass
class LPSolution:
    status: Status
    budget: float
    y: np.ndarray | None = None
    delay: float = float("nan")
    power: float = float("nan")
    iterations: int = 0
    max_violation: float = float("nan")
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class TradeoffPoint:
    budget: float
    status: Status
    power_used: float = float("nan")
    delay: float = float("nan")
    policy: ThresholdPolicy | None = None
    message: str = ""
    general: Policy | None = None


@dataclass
class LPProblem:
    config: SystemConfig
    budget: float
    program: LinearProgram
    g: GMatrix
    # row index blocks inside program.A_ub
    rows: dict = field(default_factory=dict)


def departure_bounds(config: SystemConfig, pi: np.ndarray) -> np.ndarray:
    """``b[k] = sum_m theta[m] pi[k+1-m]`` for ``k = 0..K-1``: probability that
    the post-arrival queue length equals ``k+1``."""
    K = config.K
    b = np.zeros(K)
    for m, th in enumerate(config.theta):
        lo = max(0, m - 1)
        # k + 1 - m in [0, K]  <=>  k in [m - 1, K - 1 + m - 1]
        ks = np.arange(lo, K)
        b[ks] += th * pi[ks + 1 - m]
    return b


def substitute_y(config: SystemConfig, policy: Policy, pi: np.ndarray) -> np.ndarray:
    """Departure variables ``y[k, w] = f[k+1, w] * Pr{post-arrival length = k+1}``."""
    policy.check(config)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (config.K + 1,):
        raise DimensionMismatch(f"pi has shape {pi.shape}, expected ({config.K + 1},)")
    return policy.f[1:] * departure_bounds(config, pi)[:, None]


def build_G(config: SystemConfig) -> GMatrix:
    K, W = config.K, config.W
    r = tail_masses(config.arrival)
    if r[0] <= 0:
        raise DegenerateArrivals("no arrivals ever occur")
    G = np.zeros((K + 1, W * K))
    for k in range(K):
        row = np.zeros(W * K)
        row[k * W:(k + 1) * W] = config.eta
        for i in range(1, min(config.M - 1, k) + 1):
            row -= r[i] * G[k - i]
        G[k] = row / r[0]
    G[K] = -G[:K].sum(axis=0)
    offset = np.zeros(K + 1)
    offset[K] = 1.0
    G.setflags(write=False)
    offset.setflags(write=False)
    return GMatrix(G, offset)


def pi_from_y(g: GMatrix, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != g.matrix.shape[1]:
        raise DimensionMismatch(f"y has {y.size} entries, G expects {g.matrix.shape[1]}")
    pi = g.matrix @ y + g.offset
    pi[(pi < 0) & (pi > -1e-10)] = 0.0
    return pi


def delay_from_y(config: SystemConfig, y: np.ndarray) -> float:
    """Delay in the lossless y-space form ``(sum k eta y - xi) / abar^2``."""
    y = np.asarray(y).reshape(config.K, config.W)
    k = np.arange(config.K)
    return float((k @ y @ config.eta - xi_constant(config.arrival)) / config.abar ** 2)


def power_from_y(config: SystemConfig, y: np.ndarray) -> float:
    y = np.asarray(y).reshape(config.K, config.W)
    return float(y.sum(axis=0) @ (config.eta * config.power))


def _bound_map(config: SystemConfig, g: GMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Affine map ``y -> departure_bounds(pi(y))`` as ``(B, b0)``."""
    K = config.K
    B = np.zeros((K, g.matrix.shape[1]))
    b0 = np.zeros(K)
    for k in range(K):
        for m, th in enumerate(config.theta):
            j = k + 1 - m
            if 0 <= j <= K:
                B[k] += th * g.matrix[j]
                b0[k] += th * g.offset[j]
    return B, b0


def build_lp(config: SystemConfig, p_budget: float, g: GMatrix | None = None,
             tie_break: bool = False) -> LPProblem:
    """Minimize average delay over ``y`` subject to the power budget."""
    g = build_G(config) if g is None else g
    K, W = config.K, config.W
    n = K * W
    abar = config.abar

    levels = np.arange(K + 1)
    c = levels @ g.matrix / abar
    c0 = float(levels @ g.offset / abar)
    if tie_break:
        kk, ww = np.meshgrid(np.arange(K), np.arange(1, W + 1), indexing="ij")
        c = c + TIE_EPS * (kk * ww).ravel()

    power_row = np.tile(config.eta * config.power, K)
    B, b0 = _bound_map(config, g)
    bound_rows = np.eye(n) - np.repeat(B, W, axis=0)
    bound_rhs = np.repeat(b0, W)
    A_ub = np.vstack([power_row[None, :], bound_rows, -g.matrix])
    b_ub = np.concatenate([[p_budget], bound_rhs, g.offset])
    rows = {"power": slice(0, 1), "bound": slice(1, 1 + n), "nonneg": slice(1 + n, 2 + n + K)}
    return LPProblem(config, float(p_budget), LinearProgram(c, A_ub, b_ub, c0=c0), g, rows)


def solve_lp(problem: LPProblem) -> LPSolution:
    cfg = problem.config
    res = simplex.solve(problem.program)
    if res.status is not Status.OPTIMAL:
        return LPSolution(res.status, problem.budget, iterations=res.iterations)
    x = res.x
    viol = simplex.max_violation(problem.program, x)
    y = x.reshape(cfg.K, cfg.W)
    pi = problem.g.matrix @ x + problem.g.offset
    delay = float(np.arange(cfg.K + 1) @ pi / cfg.abar)
    return LPSolution(Status.OPTIMAL, problem.budget, y, delay, power_from_y(cfg, y),
                      res.iterations, viol)


def extract_thresholds(sol: LPSolution, g: GMatrix, config: SystemConfig,
                       tol: float = STRUCTURE_TOL) -> ThresholdPolicy:
    if not sol.optimal:
        raise ValueError(f"cannot extract thresholds from a {sol.status.value} solution")
    y = np.asarray(sol.y)
    pi = pi_from_y(g, y)
    bound = departure_bounds(config, pi)
    K = config.K
    thresholds, fracs = [], []
    for w in range(config.W):
        col = y[:, w]
        active = np.flatnonzero(col > tol)
        if active.size == 0:
            thresholds.append(K + 1)
            fracs.append(0.0)
            continue
        k0 = int(active[0])
        gap = np.abs(col[k0 + 1:] - bound[k0 + 1:])
        if gap.size and gap.max() > tol:
            bad = k0 + 1 + int(np.argmax(gap))
            raise NotThresholdStructured(
                f"channel {w}: y[{bad}] = {col[bad]:.3g} is neither 0 nor its bound {bound[bad]:.3g}")
        frac = 1.0 if bound[k0] < DEGENERATE_DENOM else min(1.0, max(0.0, col[k0] / bound[k0]))
        if frac > 1.0 - tol:
            frac = 1.0
        thresholds.append(k0 + 1)
        fracs.append(float(frac))
    return ThresholdPolicy(tuple(thresholds), tuple(fracs))


def threshold_to_policy(tp: ThresholdPolicy, config: SystemConfig) -> Policy:
    K, W = config.K, config.W
    if len(tp.thresholds) != W or len(tp.frac) != W:
        raise DimensionMismatch("threshold policy does not match the number of channel states")
    q = np.arange(K + 1)[:, None]
    t = np.asarray(tp.thresholds)[None, :]
    f = np.where(q > t, 1.0, np.where(q == t, np.asarray(tp.frac)[None, :], 0.0))
    return Policy(f)


def recover_policy(sol: LPSolution, g: GMatrix, config: SystemConfig,
                   floor: float = 1e-10) -> Policy:
    """General policy ``f[k+1, w] = y[k, w] / bound[k]``.

    Levels whose post-arrival probability is below ``floor`` carry no
    information in ``y``; they are set to transmit so that round-off there
    cannot create a trap state.
    """
    if not sol.optimal:
        raise ValueError(f"cannot recover a policy from a {sol.status.value} solution")
    y = np.asarray(sol.y)
    bound = departure_bounds(config, pi_from_y(g, y))
    f = np.ones((config.K + 1, config.W))
    live = bound > floor
    f[1:][live] = np.clip(y[live] / bound[live, None], 0.0, 1.0)
    return Policy(f)


def column_structure_ok(sol: LPSolution, g: GMatrix, config: SystemConfig,
                        tol: float = STRUCTURE_TOL) -> bool:
    """At most one entry per channel column strictly between 0 and its bound."""
    y = np.asarray(sol.y)
    bound = departure_bounds(config, pi_from_y(g, y))
    for w in range(config.W):
        col = y[:, w]
        frac = (col > tol) & (np.abs(col - bound) > tol)
        if frac.sum() > 1:
            return False
    return True


def min_stable_power(config: SystemConfig) -> float:
    """Least power that can carry the full arrival rate: serve the cheapest
    channel states first until their combined probability covers ``abar``."""
    need = config.abar
    total = 0.0
    for eta, p in zip(config.eta, config.power):
        take = min(eta, need)
        total += take * p
        need -= take
        if need <= 0:
            break
    return float(total)


def greedy_power(config: SystemConfig) -> float:
    """Average power of the transmit-whenever-nonempty policy."""
    return evaluate_policy(config, Policy.constant(config, 1.0), warn_overflow=False).power


def budget_grid(config: SystemConfig, n: int = DEFAULT_GRID) -> np.ndarray:
    lo, hi = min_stable_power(config), greedy_power(config)
    if n == 1:
        return np.array([hi])
    return np.geomspace(lo, hi, n)


@dataclass
class OptimalPolicy:
    solution: LPSolution
    policy: ThresholdPolicy | None
    tie_broken: bool = False
    # always set for an optimal solution; the only form when no thresholds exist
    general: Policy | None = None


def optimize(config: SystemConfig, budget: float, g: GMatrix | None = None,
             require_stable: bool = True) -> OptimalPolicy:
    """Solve the LP at one budget and read off the threshold policy.

    With ``require_stable`` a budget below :func:`min_stable_power` is
    reported as infeasible: it could only be met by dropping traffic.
    """
    g = build_G(config) if g is None else g
    if require_stable and budget < min_stable_power(config) * (1 - 1e-12):
        sol = LPSolution(Status.INFEASIBLE, budget,
                         message="budget below the minimum power needed to carry the arrival rate")
        return OptimalPolicy(sol, None)
    sol = solve_lp(build_lp(config, budget, g))
    if not sol.optimal:
        return OptimalPolicy(sol, None)
    try:
        return OptimalPolicy(sol, extract_thresholds(sol, g, config), general=recover_policy(sol, g, config))
    except NotThresholdStructured as exc:
        log.info("re-solving with tie-break perturbation: %s", exc)
    alt = solve_lp(build_lp(config, budget, g, tie_break=True))
    if alt.optimal and alt.delay <= sol.delay + 1e-9 * max(1.0, sol.delay):
        try:
            return OptimalPolicy(alt, extract_thresholds(alt, g, config), tie_broken=True,
                                 general=recover_policy(alt, g, config))
        except NotThresholdStructured:
            pass
    # the optimum genuinely idles at some high queue level
    sol.message = "optimal policy is not of threshold form"
    return OptimalPolicy(sol, None, general=recover_policy(sol, g, config))


def sweep(config: SystemConfig, budgets: Sequence[float], workers: int = 1,
          require_stable: bool = True) -> list[TradeoffPoint]:
    """Tradeoff curve: one point per budget, in the order given."""
    budgets = [float(b) for b in budgets]
    if any(b2 < b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be sorted ascending")
    g = build_G(config)

    def one(b: float) -> TradeoffPoint:
        opt = optimize(config, b, g, require_stable)
        sol = opt.solution
        if not sol.optimal:
            return TradeoffPoint(b, sol.status, message=sol.message)
        return TradeoffPoint(b, sol.status, sol.power, sol.delay, opt.policy, sol.message, opt.general)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, budgets))
    return [one(b) for b in budgets]
