"""System description: bursty arrivals, block-fading channel, finite buffer.

All types are frozen dataclasses holding tuples, so a validated config can be
shared freely between evaluations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9
DEFAULT_BUFFER = 40


class ConfigError(ValueError):
    """Base class for invalid system descriptions."""


class NonNormalized(ConfigError):
    pass


class NonIncreasingPower(ConfigError):
    pass


class Unstable(ConfigError):
    pass


class BufferTooSmall(ConfigError):
    pass


class IndexOutOfRange(IndexError):
    pass


def _check_distribution(name: str, probs: Sequence[float]) -> tuple[float, ...]:
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise NonNormalized(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise NonNormalized(f"{name} contains non-finite entries")
    if np.any(arr < -NORMALIZATION_TOL) or np.any(arr > 1 + NORMALIZATION_TOL):
        raise NonNormalized(f"{name} entries must lie in [0, 1]")
    total = float(arr.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NonNormalized(f"{name} sums to {total!r}, expected 1")
    arr = np.clip(arr, 0.0, None)
    return tuple(float(v) for v in arr / arr.sum())


@dataclass(frozen=True)
class ArrivalSpec:
    """Per-slot batch arrival distribution, ``theta[m] = Pr{a = m}``."""

    theta: tuple[float, ...]

    @property
    def M(self) -> int:
        return len(self.theta) - 1

    @property
    def mean(self) -> float:
        return mean_rate(self)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel state probabilities and per-packet transmit power in each state.

    State 0 is the best channel (cheapest transmission).
    """

    eta: tuple[float, ...]
    power: tuple[float, ...]

    @property
    def W(self) -> int:
        return len(self.eta)

    @property
    def mean_power(self) -> float:
        return float(np.dot(self.eta, self.power))


@dataclass(frozen=True)
class SystemConfig:
    arrival: ArrivalSpec
    channel: ChannelSpec
    K: int = DEFAULT_BUFFER

    @property
    def M(self) -> int:
        return self.arrival.M

    @property
    def W(self) -> int:
        return self.channel.W

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.arrival.theta)

    @property
    def eta(self) -> np.ndarray:
        return np.asarray(self.channel.eta)

    @property
    def power(self) -> np.ndarray:
        return np.asarray(self.channel.power)

    @property
    def abar(self) -> float:
        return mean_rate(self.arrival)

    def to_dict(self) -> dict:
        return {
            "theta": list(self.arrival.theta),
            "eta": list(self.channel.eta),
            "power": list(self.channel.power),
            "K": self.K,
        }


def validate(theta: Sequence[float], eta: Sequence[float], power: Sequence[float],
             K: int = DEFAULT_BUFFER) -> SystemConfig:
    """Check raw inputs and build a :class:`SystemConfig`.

    Trailing zeros of ``theta`` are trimmed so that ``theta[M] > 0``.
    """
    th = list(_check_distribution("theta", theta))
    while len(th) > 1 and th[-1] == 0.0:
        th.pop()
    arrival = ArrivalSpec(tuple(th))
    if arrival.M < 1:
        raise Unstable("arrival distribution has no mass above zero packets")

    et = _check_distribution("eta", eta)
    pw = np.asarray(power, dtype=float)
    if pw.ndim != 1 or pw.size != len(et):
        raise ConfigError(f"power has {pw.size} entries, eta has {len(et)}")
    if not np.all(np.isfinite(pw)) or np.any(pw <= 0):
        raise NonIncreasingPower("transmit powers must be finite and positive")
    if np.any(np.diff(pw) <= 0):
        raise NonIncreasingPower("transmit powers must be strictly increasing")
    channel = ChannelSpec(et, tuple(float(p) for p in pw))

    if isinstance(K, bool) or int(K) != K or K < 1:
        raise BufferTooSmall(f"buffer capacity must be a positive integer, got {K!r}")
    K = int(K)
    abar = mean_rate(arrival)
    if abar >= 1.0:
        raise Unstable(f"mean arrival rate {abar:.6g} >= 1 packet/slot")
    if K < arrival.M:
        raise BufferTooSmall(f"K={K} cannot hold a batch of M={arrival.M} packets")
    return SystemConfig(arrival, channel, K)


def revalidate(config: SystemConfig) -> SystemConfig:
    return validate(config.arrival.theta, config.channel.eta, config.channel.power, config.K)


def mean_rate(arrival: ArrivalSpec) -> float:
    """Mean packets per slot."""
    theta = np.asarray(arrival.theta)
    return float(np.dot(np.arange(theta.size), theta))


def xi_constant(arrival: ArrivalSpec) -> float:
    """``sum_{m=1}^{M-1} m(m+1)/2 * theta[m+1]``; offset in the y-space delay objective."""
    theta = arrival.theta
    return float(sum(m * (m + 1) / 2 * theta[m + 1] for m in range(1, arrival.M)))


def tail_mass(arrival: ArrivalSpec, i: int) -> float:
    """``Pr{a > i}`` for ``0 <= i <= M-1``."""
    if not 0 <= i <= arrival.M - 1:
        raise IndexOutOfRange(f"tail index {i} outside [0, {arrival.M - 1}]")
    return float(sum(arrival.theta[i + 1:]))


def tail_masses(arrival: ArrivalSpec) -> np.ndarray:
    """Vector ``r`` with ``r[i] = Pr{a > i}``, ``i = 0..M-1``."""
    theta = np.asarray(arrival.theta)
    return np.cumsum(theta[::-1])[::-1][1:].copy()
