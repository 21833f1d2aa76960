import numpy as np
import pytest

from qsched.markov import Policy, evaluate_policy
from qsched.model import validate
from qsched.sim import SimConfig, TooFewBatches, batch_seeds, confidence, simulate, simulate_batches

from conftest import ETA, POWER_1E3


@pytest.fixture
def m1_cfg():
    return validate([0.7, 0.3], ETA, POWER_1E3, 10)


def test_greedy_power(m1_cfg):
    res = simulate(m1_cfg, Policy.constant(m1_cfg, 1.0), SimConfig(200_000, seed=1))
    assert res.empirical_power == pytest.approx(1.217208, rel=0.02)
    assert res.empirical_delay == 0.0
    assert res.loss_rate == 0.0


def test_no_service(small_cfg):
    res = simulate(small_cfg, Policy.constant(small_cfg, 0.0), SimConfig(20_000, seed=2, warmup=1_000))
    assert res.empirical_power == 0.0
    assert res.mean_queue == small_cfg.K
    assert res.loss_rate == 1.0
    assert res.departures == 0
    assert res.final_queue == small_cfg.K


def test_conservation(small_cfg):
    rng = np.random.default_rng(0)
    pol = Policy(rng.uniform(size=(small_cfg.K + 1, small_cfg.W)))
    res = simulate(small_cfg, pol, SimConfig(50_000, seed=3))
    assert res.accepted == res.departures + res.final_queue


def test_reproducible(small_cfg):
    pol = Policy.constant(small_cfg, 0.7)
    sc = SimConfig(30_000, seed=42)
    assert repr(simulate(small_cfg, pol, sc)) == repr(simulate(small_cfg, pol, sc))
    assert simulate(small_cfg, pol, SimConfig(30_000, seed=43)) != simulate(small_cfg, pol, sc)


def test_agrees_with_chain(table_cfg):
    pol = Policy.constant(table_cfg, 0.5)
    ev = evaluate_policy(table_cfg, pol)
    res = simulate(table_cfg, pol, SimConfig(300_000, seed=7))
    assert res.empirical_delay == pytest.approx(ev.delay, rel=0.03)
    assert res.empirical_power == pytest.approx(ev.power, rel=0.03)


def test_sojourn_matches_little(table_cfg):
    pol = Policy.constant(table_cfg, 0.5)
    res = simulate(table_cfg, pol, SimConfig(200_000, seed=8, sojourn=True))
    assert res.sojourn_delay == pytest.approx(res.empirical_delay, rel=0.02)


def test_simconfig_checks():
    with pytest.raises(ValueError):
        SimConfig(100, warmup=100)
    with pytest.raises(ValueError):
        SimConfig(100, warmup=-1)


def test_batch_seeds_distinct():
    s = batch_seeds(0, 10)
    assert len(set(s)) == 10
    assert s == batch_seeds(0, 10)


def test_confidence(m1_cfg):
    assert confidence([1.5] * 10) == (1.5, 0.0)
    with pytest.raises(TooFewBatches):
        confidence([1.0] * 9)
    runs = simulate_batches(m1_cfg, Policy.constant(m1_cfg, 1.0), SimConfig(200_000, seed=5), 10)
    mean, half = confidence(runs, "empirical_power")
    assert abs(mean - 1.217208) <= half
