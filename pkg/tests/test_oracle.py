import numpy as np
import pytest

from qsched.lp import build_G, build_lp, greedy_power, solve_lp
from qsched.model import validate
from qsched.oracle import (Empty, TooLarge, delay_boundary_term, enumerate_deterministic,
                           enumerate_pure, lower_hull, verify_transformations)

from conftest import random_config


def test_atlas_count():
    cfg = validate([0.6, 0.4], [0.5, 0.5], [1.0, 2.0], 4)
    atlas = enumerate_pure(cfg)
    assert len(atlas) == 25
    assert atlas.policy(0).thresholds == (1, 1)


def test_atlas_guard():
    cfg = validate([0.6, 0.4], [0.2] * 5, [1, 2, 3, 4, 5], 40)
    with pytest.raises(TooLarge):
        enumerate_pure(cfg)
    with pytest.raises(TooLarge):
        enumerate_deterministic(cfg)


def test_hull_two_points():
    h = lower_hull(points=[[0.0, 4.0], [2.0, 1.0]])
    assert h(1.0) == pytest.approx(2.5)
    assert h(-0.1) == np.inf


def test_hull_collinear_dropped():
    h = lower_hull(points=[[0, 3], [1, 2], [2, 1], [1, 5]])
    np.testing.assert_allclose(h.power, [0, 2])


def test_hull_stops_at_min_delay():
    h = lower_hull(points=[[0, 3], [1, 1], [2, 2]])
    np.testing.assert_allclose(h.power, [0, 1])
    assert h(5.0) == pytest.approx(1.0)


def test_hull_empty():
    with pytest.raises(Empty):
        lower_hull(points=np.zeros((0, 2)))
    with pytest.raises(Empty):
        lower_hull()


def test_m1_threshold_hull_equals_lp():
    # single arrivals: the threshold family spans the whole tradeoff curve
    rng = np.random.default_rng(11)
    for _ in range(3):
        cfg = random_config(rng, 6, M=1, W=2)
        hull = lower_hull(enumerate_pure(cfg))
        g = build_G(cfg)
        for b in np.linspace(0, greedy_power(cfg), 9):
            assert solve_lp(build_lp(cfg, b, g)).delay == pytest.approx(hull(b), abs=1e-8)


def test_lp_equals_deterministic_hull():
    rng = np.random.default_rng(12)
    for _ in range(3):
        cfg = random_config(rng, 4, M=2, W=2)
        p, d = enumerate_deterministic(cfg)
        hull = lower_hull(points=np.column_stack([p, d]))
        g = build_G(cfg)
        for b in np.linspace(0, greedy_power(cfg), 9):
            assert solve_lp(build_lp(cfg, b, g)).delay == pytest.approx(hull(b), abs=1e-8)


def test_identities_lossless():
    cfg = validate([0.85, 0.1, 0.05], [0.5, 0.5], [1.0, 2.0], 80)
    rep = verify_transformations(cfg, 40, seed=1)
    assert rep.max_overflow < 1e-12
    for name in ("cut_balance", "throughput_lossless", "bounds", "reconstruction", "normalization",
                 "delay_lossless"):
        assert getattr(rep, name) < 1e-8, name
    assert rep.power < 1e-10
    assert rep.affine_slope == pytest.approx(1.0, abs=1e-6)
    assert rep.affine_intercept == pytest.approx(0.0, abs=1e-6)


def test_identities_with_overflow(small_cfg):
    rep = verify_transformations(small_cfg, 50, seed=2)
    assert rep.max_overflow > 0.01
    assert rep.throughput_with_loss < 1e-10
    assert rep.delay_with_boundary < 1e-9
    # the lossless forms break once the buffer fills
    assert rep.delay_lossless > 1e-3
    assert rep.notes


def test_boundary_term_vanishes_without_overflow():
    cfg = validate([0.85, 0.1, 0.05], [0.5, 0.5], [1.0, 2.0], 10)
    pi = np.zeros(11)
    pi[:3] = [0.5, 0.3, 0.2]
    # only the top M-1 levels contribute
    assert delay_boundary_term(cfg, pi) == pytest.approx(0.0, abs=1e-14)


def test_tampered_G_is_caught(small_cfg):
    g = build_G(small_cfg)
    bad = type(g)(g.matrix * 1.01, g.offset)
    rep = verify_transformations(small_cfg, 10, seed=0, g=bad)
    assert rep.reconstruction > 1e-4
