"""Queue-length Markov chain induced by a probabilistic transmission policy.

The chain state is the queue length at the end of a slot.  Within a slot a
batch of ``m`` packets arrives, then one packet is sent with probability
``f[k + m, w]`` where ``w`` is the current channel state.  A batch that would
push the queue beyond ``K`` is clipped to ``K`` and nothing is sent in that
slot (the policy is zero past the buffer).

Matrices are stored row-by-source: ``tau[k, l] = Pr{q[n] = l | q[n-1] = k}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .model import SystemConfig, IndexOutOfRange

log = logging.getLogger(__name__)

OVERFLOW_WARN = 1e-6
RESIDUAL_TOL = 1e-10


class DimensionMismatch(ValueError):
    pass


class SingularSystem(ArithmeticError):
    """The chain has no unique stationary distribution."""


class ZeroArrivalRate(ZeroDivisionError):
    pass


@dataclass(frozen=True, eq=False)
class Policy:
    """Transmission probabilities ``f[q, w]``.

    Rows are post-arrival queue lengths ``0..K``; columns are channel states.
    Row 0 is forced to zero.
    """

    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.ndim != 2:
            raise DimensionMismatch("policy matrix must be 2-D (queue length x channel state)")
        if np.any(f < -1e-12) or np.any(f > 1 + 1e-12) or not np.all(np.isfinite(f)):
            raise ValueError("transmission probabilities must lie in [0, 1]")
        f = np.clip(f, 0.0, 1.0)
        f[0, :] = 0.0
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def K(self) -> int:
        return self.f.shape[0] - 1

    @property
    def W(self) -> int:
        return self.f.shape[1]

    @classmethod
    def constant(cls, config: SystemConfig, value: float) -> "Policy":
        return cls(np.full((config.K + 1, config.W), float(value)))

    def check(self, config: SystemConfig) -> None:
        if self.f.shape != (config.K + 1, config.W):
            raise DimensionMismatch(
                f"policy shape {self.f.shape} does not match (K+1, W) = {(config.K + 1, config.W)}")


class Evaluation(NamedTuple):
    delay: float
    power: float
    pi: np.ndarray


def build_transition(config: SystemConfig, policy: Policy) -> np.ndarray:
    """Transition matrix of the queue-length chain under ``policy``."""
    policy.check(config)
    K = config.K
    theta = config.theta
    # probability of a transmission given post-arrival length p (averaged over channel)
    serve = policy.f @ config.eta
    tau = np.zeros((K + 1, K + 1))
    for k in range(K + 1):
        for m, th in enumerate(theta):
            if th == 0.0:
                continue
            p = k + m
            if p > K:
                tau[k, K] += th
                continue
            tau[k, p] += th * (1.0 - serve[p])
            if p >= 1:
                tau[k, p - 1] += th * serve[p]
    return tau


def _closed_classes(tau: np.ndarray) -> list[np.ndarray]:
    n_comp, labels = connected_components(tau > 0, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(tau.shape[0], dtype=bool)
        outside[members] = False
        if not np.any(tau[np.ix_(members, outside)] > 0):
            closed.append(members)
    return closed


def stationary(tau: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix.

    States outside the (single) closed class get zero mass.  On the closed
    class, one balance equation is replaced by the normalization row and the
    square system is solved by LU with partial pivoting.
    """
    tau = np.asarray(tau, dtype=float)
    n = tau.shape[0]
    if tau.ndim != 2 or tau.shape[1] != n:
        raise DimensionMismatch("transition matrix must be square")
    if np.any(tau < -1e-15) or np.max(np.abs(tau.sum(axis=1) - 1.0)) > 1e-12:
        raise ValueError("not a stochastic matrix")

    closed = _closed_classes(tau)
    if len(closed) != 1:
        raise SingularSystem(f"chain has {len(closed)} closed classes; stationary law is not unique")
    cls = closed[0]
    sub = tau[np.ix_(cls, cls)]
    A = sub.T - np.eye(cls.size)
    A[-1, :] = 1.0
    b = np.zeros(cls.size)
    b[-1] = 1.0
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc

    pi = np.zeros(n)
    pi[cls] = sol
    pi[(pi < 0) & (pi > -1e-12)] = 0.0
    if np.any(pi < 0):
        raise SingularSystem(f"stationary solve produced negative mass {pi.min():.3g}")
    pi /= pi.sum()
    resid = np.max(np.abs(pi @ tau - pi))
    if resid > RESIDUAL_TOL:
        log.warning("stationary residual %.3g exceeds %.0e", resid, RESIDUAL_TOL)
    return pi


def transmit_probs(config: SystemConfig, policy: Policy) -> np.ndarray:
    """Matrix ``psi[k, w]``: probability of sending in a slot that starts at
    queue length ``k``, given channel state ``w``.  Policy entries past ``K``
    count as 0."""
    policy.check(config)
    K = config.K
    padded = np.vstack([policy.f, np.zeros((config.M, config.W))])
    psi = np.zeros((K + 1, config.W))
    for m, th in enumerate(config.theta):
        psi += th * padded[m:m + K + 1]
    return psi


def transmit_prob(config: SystemConfig, policy: Policy, k: int, w: int) -> float:
    """Single entry of :func:`transmit_probs`; ``w = -1`` gives the idle probability.

    Channel states are 0-based here (0 is the best channel).
    """
    if not 0 <= k <= config.K:
        raise IndexOutOfRange(f"queue length {k} outside [0, {config.K}]")
    if not -1 <= w < config.W:
        raise IndexOutOfRange(f"channel state {w} outside [0, {config.W - 1}]")
    row = transmit_probs(config, policy)[k]
    if w == -1:
        return float(1.0 - row @ config.eta)
    return float(row[w])


def average_delay(pi: np.ndarray, abar: float) -> float:
    """Little's law: mean queue length over mean arrival rate."""
    if abar <= 0:
        raise ZeroArrivalRate("average delay is undefined without arrivals")
    pi = np.asarray(pi)
    return float(np.dot(np.arange(pi.size), pi) / abar)


def average_power(config: SystemConfig, policy: Policy, pi: np.ndarray) -> float:
    pi = np.asarray(pi)
    if pi.shape != (config.K + 1,):
        raise DimensionMismatch(f"pi has shape {pi.shape}, expected ({config.K + 1},)")
    psi = transmit_probs(config, policy)
    return float(pi @ psi @ (config.eta * config.power))


def throughput(config: SystemConfig, policy: Policy, pi: np.ndarray) -> float:
    """Departures per slot."""
    return float(np.asarray(pi) @ transmit_probs(config, policy) @ config.eta)


def loss_rate(config: SystemConfig, pi: np.ndarray) -> float:
    """Packets dropped per slot because the post-arrival queue exceeds ``K``."""
    return float(np.dot(overflow_weights(config), pi))


def overflow_weights(config: SystemConfig) -> np.ndarray:
    """``c[j]``: expected packets dropped in a slot starting at queue length ``j``."""
    K = config.K
    c = np.zeros(K + 1)
    for j in range(K + 1):
        for m, th in enumerate(config.theta):
            if j + m > K:
                c[j] += th * (j + m - K)
    return c


def evaluate_policy(config: SystemConfig, policy: Policy, warn_overflow: bool = True) -> Evaluation:
    tau = build_transition(config, policy)
    pi = stationary(tau)
    if warn_overflow and pi[-1] > OVERFLOW_WARN:
        log.warning("buffer is full with probability %.3g; overflow is not negligible", pi[-1])
    return Evaluation(average_delay(pi, config.abar), average_power(config, policy, pi), pi)


def power_iteration(tau: np.ndarray, tol: float = 1e-13, max_iter: int = 1_000_000) -> np.ndarray:
    """Reference stationary vector by repeated multiplication from the empty queue.

    Uses the lazy chain ``(I + tau)/2`` so periodic chains converge too.
    """
    tau = np.asarray(tau, dtype=float)
    lazy = 0.5 * (tau + np.eye(tau.shape[0]))
    pi = np.zeros(tau.shape[0])
    pi[0] = 1.0
    for _ in range(max_iter):
        nxt = pi @ lazy
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise RuntimeError("power iteration did not converge")
