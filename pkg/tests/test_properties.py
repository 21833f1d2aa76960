"""Randomized invariants."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsched.lp import build_G, build_lp, greedy_power, pi_from_y, solve_lp, substitute_y
from qsched.markov import Policy, build_transition, evaluate_policy, stationary
from qsched.model import mean_rate, tail_masses, validate

settings.register_profile("qsched", max_examples=40, deadline=None)
settings.load_profile("qsched")


@st.composite
def configs(draw, kmax=8):
    M = draw(st.integers(1, 3))
    W = draw(st.integers(1, 3))
    weights = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=M, max_size=M)))
    p = weights / weights.sum()
    rho = draw(st.floats(0.05, 0.9))
    s = rho / (p @ np.arange(1, M + 1))
    theta = np.r_[1.0 - s, s * p]
    eta = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=W, max_size=W)))
    steps = draw(st.lists(st.floats(0.1, 3.0), min_size=W, max_size=W))
    K = draw(st.integers(M, kmax))
    return validate(theta / theta.sum(), eta / eta.sum(), np.cumsum(steps), K)


@st.composite
def config_and_policy(draw):
    cfg = draw(configs())
    seed = draw(st.integers(0, 2**32 - 1))
    f = np.random.default_rng(seed).uniform(size=(cfg.K + 1, cfg.W))
    return cfg, Policy(f)


@given(configs())
def test_tail_masses_sum_to_rate(cfg):
    r = tail_masses(cfg.arrival)
    assert np.all(np.diff(r) <= 1e-15) and r[-1] > 0
    assert r.sum() == pytest.approx(cfg.abar, abs=1e-12)


@given(st.integers(0, 5))
def test_point_mass_rate(m):
    from qsched.model import ArrivalSpec
    theta = np.zeros(m + 1)
    theta[m] = 1.0
    assert mean_rate(ArrivalSpec(tuple(theta))) == m


@given(config_and_policy())
def test_stationary_is_fixed_point(cp):
    cfg, pol = cp
    tau = build_transition(cfg, pol)
    pi = stationary(tau)
    assert pi.min() >= 0 and pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(pi @ tau - pi)) < 1e-10


@given(config_and_policy())
def test_reconstruction(cp):
    cfg, pol = cp
    pi = evaluate_policy(cfg, pol, warn_overflow=False).pi
    y = substitute_y(cfg, pol, pi)
    assert np.max(np.abs(pi_from_y(build_G(cfg), y) - pi)) < 1e-8


@given(config_and_policy(), st.integers(1, 8), st.integers(0, 2), st.floats(0.01, 0.5))
def test_more_service_never_lengthens_queue(cp, q, w, bump):
    cfg, pol = cp
    q = min(q, cfg.K)
    w = min(w, cfg.W - 1)
    f = pol.f.copy()
    f[q, w] = min(1.0, f[q, w] + bump)
    before = evaluate_policy(cfg, pol, warn_overflow=False).delay
    after = evaluate_policy(cfg, Policy(f), warn_overflow=False).delay
    assert after <= before + 1e-9


@settings(max_examples=25)
@given(config_and_policy())
def test_lp_beats_any_policy_at_its_power(cp):
    cfg, pol = cp
    ev = evaluate_policy(cfg, pol, warn_overflow=False)
    sol = solve_lp(build_lp(cfg, ev.power))
    assert sol.optimal
    assert sol.delay <= ev.delay + 1e-9


@settings(max_examples=20)
@given(configs(kmax=6), st.floats(0.0, 1.0))
def test_lp_curve_nonincreasing(cfg, frac):
    g = build_G(cfg)
    top = greedy_power(cfg)
    lo = solve_lp(build_lp(cfg, frac * top, g)).delay
    hi = solve_lp(build_lp(cfg, min(top, frac * top + 0.1), g)).delay
    assert hi <= lo + 1e-9
