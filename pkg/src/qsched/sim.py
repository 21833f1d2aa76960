"""Slot-level Monte Carlo of the queue under a probabilistic policy.

Each slot draws a batch of arrivals and a channel state, then sends one
packet with probability ``f[q + a, w]``.  A batch that overflows the buffer
is clipped at ``K`` and nothing is sent in that slot, which is the same
boundary rule the Markov chain uses.

Random numbers come from a Philox counter-based generator, one stream per
run, and are drawn in fixed-size chunks so a run is bit-reproducible from
its seed.
"""
from __future__ import annotations

from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .markov import Policy
from .model import SystemConfig

CHUNK = 1 << 18


class TooFewBatches(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_slots: int = 10_000_000
    seed: int = 0
    warmup: int = 10_000
    sojourn: bool = False  # track per-packet FIFO delays as well

    def __post_init__(self):
        if self.warmup < 0 or self.n_slots <= self.warmup:
            raise ValueError(f"need n_slots > warmup >= 0, got {self.n_slots}, {self.warmup}")


@dataclass(frozen=True)
class SimResult:
    empirical_delay: float
    empirical_power: float
    loss_rate: float
    mean_queue: float
    slots_run: int
    # whole-run counters, warmup included
    accepted: int = 0
    departures: int = 0
    final_queue: int = 0
    sojourn_delay: float = float("nan")


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def simulate(config: SystemConfig, policy: Policy, sc: SimConfig = SimConfig()) -> SimResult:
    policy.check(config)
    K = config.K
    rng = _generator(sc.seed)
    theta = config.theta
    eta = config.eta
    f = policy.f.tolist()
    power = config.power.tolist()

    q = 0
    accepted = departures = 0
    # post-warmup tallies
    area = energy = 0.0
    arrived_w = accepted_w = lost_w = 0
    fifo: deque | None = deque() if sc.sojourn else None
    wait_sum = 0
    wait_n = 0

    slot = 0
    while slot < sc.n_slots:
        n = min(CHUNK, sc.n_slots - slot)
        arr = rng.choice(theta.size, size=n, p=theta).tolist()
        chan = rng.choice(eta.size, size=n, p=eta).tolist()
        unif = rng.random(n).tolist()
        for a, w, u in zip(arr, chan, unif):
            counted = slot >= sc.warmup
            p = q + a
            if p > K:
                got = K - q
                q = K
                sent = False
                if counted:
                    lost_w += p - K
            else:
                got = a
                sent = u < f[p][w]
                q = p - 1 if sent else p
            accepted += got
            if fifo is not None:
                fifo.extend([slot] * got)
            if sent:
                departures += 1
                if fifo is not None:
                    t0 = fifo.popleft()
                    if counted:
                        wait_sum += slot - t0
                        wait_n += 1
            if counted:
                arrived_w += a
                accepted_w += got
                area += q
                if sent:
                    energy += power[w]
            slot += 1

    span = sc.n_slots - sc.warmup
    mean_q = area / span
    rate = accepted_w / span
    delay = mean_q / rate if rate > 0 else float("inf")
    return SimResult(
        empirical_delay=delay,
        empirical_power=energy / span,
        loss_rate=lost_w / arrived_w if arrived_w else 0.0,
        mean_queue=mean_q,
        slots_run=span,
        accepted=accepted,
        departures=departures,
        final_queue=q,
        sojourn_delay=wait_sum / wait_n if wait_n else float("nan"),
    )


def batch_seeds(seed: int, n: int) -> list[int]:
    """Independent 64-bit seeds derived from one master seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def _run(args):
    config, policy, sc = args
    return simulate(config, policy, sc)


def simulate_batches(config: SystemConfig, policy: Policy, sc: SimConfig, n: int,
                     workers: int = 1) -> list[SimResult]:
    """``n`` independent runs, returned in seed order."""
    jobs = [(config, policy, SimConfig(sc.n_slots, s, sc.warmup, sc.sojourn))
            for s in batch_seeds(sc.seed, n)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run, jobs))
    return [_run(j) for j in jobs]


def confidence(results, field: str = "empirical_delay", level: float = 0.95) -> tuple[float, float]:
    """Batch-means estimate and Student-t half-width."""
    vals = np.array([getattr(r, field) if not np.isscalar(r) else r for r in results], dtype=float)
    if vals.size < 10:
        raise TooFewBatches(f"need at least 10 batches, got {vals.size}")
    mean = float(vals.mean())
    sd = float(vals.std(ddof=1))
    if sd == 0.0:
        return mean, 0.0
    half = float(stats.t.ppf(0.5 + level / 2, vals.size - 1) * sd / np.sqrt(vals.size))
    return mean, half
