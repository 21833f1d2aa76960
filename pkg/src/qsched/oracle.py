"""Brute-force ground truth for small systems.

Every deterministic threshold policy is evaluated directly on the Markov
chain; the lower convex hull of the resulting (power, delay) cloud is the
tradeoff curve that any correct LP solution must reproduce.  The identities
linking queue distribution and departure variables are checked on random
policies.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .lp import (ThresholdPolicy, build_G, departure_bounds, delay_from_y, pi_from_y,
                 power_from_y, substitute_y, threshold_to_policy)
from .markov import Policy, SingularSystem, evaluate_policy, loss_rate
from .model import SystemConfig, tail_masses, xi_constant

MAX_ATLAS = 100_000


class TooLarge(ValueError):
    pass


class Empty(ValueError):
    pass


@dataclass
class PolicyAtlas:
    config: SystemConfig
    thresholds: np.ndarray  # (N, W) ints
    delay: np.ndarray
    power: np.ndarray

    def __len__(self) -> int:
        return self.delay.size

    def policy(self, i: int) -> ThresholdPolicy:
        return ThresholdPolicy(tuple(int(t) for t in self.thresholds[i]), (1.0,) * self.config.W)


def enumerate_pure(config: SystemConfig) -> PolicyAtlas:
    """Evaluate all ``(K+1)^W`` deterministic threshold policies.

    Threshold ``t`` in channel ``w`` means: transmit iff the post-arrival
    queue is at least ``t``; ``t = K+1`` never transmits.  This covers both
    0/1 choices of the randomization at the threshold.
    """
    K, W = config.K, config.W
    count = (K + 1) ** W
    if count > MAX_ATLAS:
        raise TooLarge(f"{count} threshold vectors exceed the limit of {MAX_ATLAS}")
    combos = np.array(list(itertools.product(range(1, K + 2), repeat=W)), dtype=int).reshape(-1, W)
    delay = np.empty(len(combos))
    power = np.empty(len(combos))
    ones = (1.0,) * W
    for i, t in enumerate(combos):
        pol = threshold_to_policy(ThresholdPolicy(tuple(int(v) for v in t), ones), config)
        ev = evaluate_policy(config, pol, warn_overflow=False)
        delay[i], power[i] = ev.delay, ev.power
    return PolicyAtlas(config, combos, delay, power)


def enumerate_deterministic(config: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """(power, delay) of every 0/1 policy matrix, ``2^(K W)`` of them.

    With batch arrivals the clipped boundary can make idling at a full
    buffer optimal, so this cloud, not the threshold atlas, spans the exact
    tradeoff curve.  Only feasible for tiny ``K W``.
    """
    K, W = config.K, config.W
    bits = K * W
    if 2 ** bits > MAX_ATLAS:
        raise TooLarge(f"2^{bits} deterministic policies exceed the limit of {MAX_ATLAS}")
    codes = np.arange(2 ** bits)
    delay, power = [], []
    shifts = np.arange(bits)
    for code in codes:
        f = np.zeros((K + 1, W))
        f[1:] = ((code >> shifts) & 1).reshape(K, W)
        try:
            ev = evaluate_policy(config, Policy(f), warn_overflow=False)
        except SingularSystem:
            continue
        delay.append(ev.delay)
        power.append(ev.power)
    return np.array(power), np.array(delay)


@dataclass
class TradeoffHull:
    """Piecewise-linear minimal delay as a function of the power budget."""

    power: np.ndarray
    delay: np.ndarray

    def __call__(self, budget):
        b = np.asarray(budget, dtype=float)
        out = np.interp(b, self.power, self.delay)
        out = np.where(b < self.power[0] - 1e-12, np.inf, out)
        return float(out) if out.ndim == 0 else out


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def lower_hull(atlas: PolicyAtlas | None = None, points=None, tol: float = 1e-12) -> TradeoffHull:
    """Lower-left convex hull of (power, delay) points, restricted to the
    non-increasing branch.  Collinear interior points are dropped."""
    if points is None:
        if atlas is None:
            raise Empty("no atlas given")
        points = np.column_stack([atlas.power, atlas.delay])
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if pts.shape[0] == 0:
        raise Empty("no finite (power, delay) points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    hull: list = []
    for p in pts:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) <= tol:
            hull.pop()
        if hull and abs(hull[-1][0] - p[0]) <= tol:
            continue  # same power, higher delay
        hull.append(p)
    hull = np.array(hull)
    stop = int(np.argmin(hull[:, 1]))
    hull = hull[:stop + 1]
    return TradeoffHull(hull[:, 0].copy(), hull[:, 1].copy())


def random_policy(config: SystemConfig, rng: np.random.Generator) -> Policy:
    f = rng.uniform(size=(config.K + 1, config.W))
    f[0] = 0.0
    return Policy(f)


def delay_boundary_term(config: SystemConfig, pi: np.ndarray) -> float:
    """Correction that makes the y-space delay expression exact under overflow.

    ``sum_k k eta y_k = abar E[q] + xi - sum_j pi_j (j abar + xi - A_j)`` where
    ``A_j = sum_{i < K-j} (j+i) r_i``; the sum only involves the top ``M-1``
    levels and vanishes when the buffer never overflows.
    """
    K, abar, xi = config.K, config.abar, xi_constant(config.arrival)
    r = np.zeros(K + config.M + 1)
    r[:config.M] = tail_masses(config.arrival)
    term = 0.0
    for j in range(K + 1):
        A = sum((j + i) * r[i] for i in range(K - j))
        term += pi[j] * (j * abar + xi - A)
    return term


@dataclass
class VerificationReport:
    n_policies: int
    cut_balance: float = 0.0
    throughput_lossless: float = 0.0
    throughput_with_loss: float = 0.0
    bounds: float = 0.0
    reconstruction: float = 0.0
    normalization: float = 0.0
    power: float = 0.0
    delay_lossless: float = 0.0
    delay_with_boundary: float = 0.0
    affine_slope: float = float("nan")
    affine_intercept: float = float("nan")
    affine_residual: float = float("nan")
    max_overflow: float = 0.0
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def verify_transformations(config: SystemConfig, n_random: int = 200, seed: int = 0,
                           g=None) -> VerificationReport:
    """Check the departure-variable identities on random policies and report
    the largest absolute violation of each."""
    rng = np.random.default_rng(seed)
    g = build_G(config) if g is None else g
    r = tail_masses(config.arrival)
    eta, abar = config.eta, config.abar
    rep = VerificationReport(n_random)
    d_y, d_q = [], []
    for _ in range(n_random):
        pol = random_policy(config, rng)
        ev = evaluate_policy(config, pol, warn_overflow=False)
        pi = ev.pi
        y = substitute_y(config, pol, pi)
        dep = y @ eta
        cut = np.array([sum(pi[k - i] * r[i] for i in range(min(config.M - 1, k) + 1))
                        for k in range(config.K)])
        rep.cut_balance = max(rep.cut_balance, float(np.max(np.abs(cut - dep))))
        rep.throughput_lossless = max(rep.throughput_lossless, abs(dep.sum() - abar))
        rep.throughput_with_loss = max(rep.throughput_with_loss,
                                       abs(dep.sum() - (abar - loss_rate(config, pi))))
        bound = departure_bounds(config, pi)[:, None]
        rep.bounds = max(rep.bounds, float(np.max(np.maximum(-y, y - bound))), 0.0)
        rec = pi_from_y(g, y)
        rep.reconstruction = max(rep.reconstruction, float(np.max(np.abs(rec - pi))))
        rep.normalization = max(rep.normalization, abs(rec.sum() - 1.0))
        rep.power = max(rep.power, abs(power_from_y(config, y) - ev.power))
        dl = delay_from_y(config, y)
        rep.delay_lossless = max(rep.delay_lossless, abs(dl - ev.delay))
        corrected = dl + delay_boundary_term(config, pi) / abar ** 2
        rep.delay_with_boundary = max(rep.delay_with_boundary, abs(corrected - ev.delay))
        rep.max_overflow = max(rep.max_overflow, float(pi[-1]))
        d_y.append(dl)
        d_q.append(ev.delay)

    d_y, d_q = np.array(d_y), np.array(d_q)
    if n_random >= 2 and np.ptp(d_y) > 0:
        A = np.column_stack([d_y, np.ones_like(d_y)])
        (slope, icpt), *_ = np.linalg.lstsq(A, d_q, rcond=None)
        rep.affine_slope, rep.affine_intercept = float(slope), float(icpt)
        rep.affine_residual = float(np.max(np.abs(A @ [slope, icpt] - d_q)))
    if rep.max_overflow > 1e-9:
        rep.notes.append(
            f"buffer fills with probability up to {rep.max_overflow:.3g}; lossless forms "
            "of the throughput and delay identities carry boundary terms")
    return rep
