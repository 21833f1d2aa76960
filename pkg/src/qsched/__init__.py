"""Delay-optimal, power-constrained packet scheduling over a fading channel."""
from .model import ArrivalSpec, ChannelSpec, SystemConfig, validate
from .markov import Policy, evaluate_policy, stationary
from .lp import ThresholdPolicy, optimize, sweep
from .sim import SimConfig, SimResult, simulate

__version__ = "0.1.0"

__all__ = [
    "ArrivalSpec", "ChannelSpec", "SystemConfig", "validate",
    "Policy", "evaluate_policy", "stationary",
    "ThresholdPolicy", "optimize", "sweep",
    "SimConfig", "SimResult", "simulate",
]
