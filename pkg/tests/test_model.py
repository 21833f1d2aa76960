import numpy as np
import pytest

from qsched.model import (ArrivalSpec, BufferTooSmall, NonIncreasingPower, NonNormalized,
                          IndexOutOfRange, Unstable, mean_rate, revalidate, tail_mass,
                          tail_masses, validate, xi_constant)

from conftest import ETA, POWER_1E3


def test_table_row_is_valid():
    cfg = validate([0.80, 0.15, 0.05], ETA, POWER_1E3, 40)
    assert cfg.M == 2 and cfg.W == 4 and cfg.K == 40
    assert cfg.abar == pytest.approx(0.25)


def test_trailing_zero_trimmed():
    cfg = validate([0.5, 0.5, 0.0], [1.0], [1.0], 4)
    assert cfg.M == 1
    assert cfg.arrival.theta == (0.5, 0.5)


def test_not_normalized():
    with pytest.raises(NonNormalized):
        validate([0.2, 0.9], [1.0], [1.0])


def test_small_roundoff_is_renormalized():
    cfg = validate([0.7, 0.3 + 5e-10], [1.0], [1.0])
    assert sum(cfg.arrival.theta) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("power", [[1.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
def test_power_must_increase(power):
    with pytest.raises(NonIncreasingPower):
        validate([0.5, 0.5], [0.5, 0.5], power)


def test_unstable():
    with pytest.raises(Unstable):
        validate([0.0, 0.5, 0.5], [1.0], [1.0])
    with pytest.raises(Unstable):
        validate([1.0], [1.0], [1.0])


def test_buffer_too_small():
    with pytest.raises(BufferTooSmall):
        validate([0.7, 0.1, 0.1, 0.1], [1.0], [1.0], K=2)
    with pytest.raises(BufferTooSmall):
        validate([0.5, 0.5], [1.0], [1.0], K=0)


def test_mean_rate():
    assert mean_rate(ArrivalSpec((0.80, 0.15, 0.05))) == pytest.approx(0.25)
    assert mean_rate(ArrivalSpec((0.78, 0.14, 0.08))) == pytest.approx(0.30)
    assert mean_rate(ArrivalSpec((1.0,))) == 0.0


def test_xi():
    assert xi_constant(ArrivalSpec((0.6, 0.4))) == 0.0
    assert xi_constant(ArrivalSpec((0.80, 0.15, 0.05))) == pytest.approx(0.05)
    assert xi_constant(ArrivalSpec((0.7, 0.1, 0.1, 0.1))) == pytest.approx(0.4)


def test_tail_mass():
    a = ArrivalSpec((0.78, 0.14, 0.08))
    assert tail_mass(a, 0) == pytest.approx(0.22)
    assert tail_mass(a, 1) == pytest.approx(0.08)
    with pytest.raises(IndexOutOfRange):
        tail_mass(a, 2)
    with pytest.raises(IndexOutOfRange):
        tail_mass(a, -1)
    np.testing.assert_allclose(tail_masses(a), [0.22, 0.08])


def test_idempotent(table_cfg):
    assert revalidate(table_cfg) == table_cfg
    assert validate(**{k: v for k, v in table_cfg.to_dict().items()}) == table_cfg
