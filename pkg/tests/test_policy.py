import math

import numpy as np
import pytest

from transient_impact import policy as P
from transient_impact.model import ConstantModel, FrictionSpec, OUModel
from transient_impact.riccati import solve

OU = OUModel(1.0, 1.0, 1.0, 1.0, 1.0)
Y = np.array([0.0, 1.0])


def test_asymptotic_rate_one_asset():
    fr = FrictionSpec(1.0, 1.0, 1.0, eps=0.5)
    p = P.asymptotic(OU, fr)
    qd = math.sqrt(6) - 2
    D, h = 0.2, 1.4  # physical distortion; M(y) = 1
    rate = P.trading_rate(p, OU, fr, [D], [h], Y)
    assert rate[0] == pytest.approx(-(qd * D / 0.25 + 1.0 * (h - 1.0) / 0.5))


def test_rate_scaling_in_eps():
    # with d = D / eps held fixed the rate scales like 1 / eps
    fr1, fr2 = FrictionSpec(1.0, 1.0, 1.0, 0.2), FrictionSpec(1.0, 1.0, 1.0, 0.1)
    d, dev = 0.7, -0.3
    r1 = P.trading_rate(P.asymptotic(OU, fr1), OU, fr1, [0.2 * d], [1 + dev], Y)
    r2 = P.trading_rate(P.asymptotic(OU, fr2), OU, fr2, [0.1 * d], [1 + dev], Y)
    assert r2[0] == pytest.approx(2 * r1[0])


def test_temporary_only_ignores_distortion():
    fr = FrictionSpec(1.0, 1.0, 1.0, 0.3)
    p = P.temporary_only(OU, fr)
    a = P.trading_rate(p, OU, fr, [0.0], [1.5], Y)
    b = P.trading_rate(p, OU, fr, [5.0], [1.5], Y)
    assert a[0] == b[0]


def test_zero_policy():
    fr = FrictionSpec(1.0, 1.0, 1.0, 0.3)
    assert np.all(P.trading_rate(P.zero(), OU, fr, [1.0], [3.0], Y) == 0)


def test_rate_vanishes_on_target():
    fr = FrictionSpec(1.0, 1.0, 1.0, 0.3)
    assert P.trading_rate(P.asymptotic(OU, fr), OU, fr, [0.0], [1.0], Y)[0] == 0.0


def test_rejects_nonpositive_eps():
    fr = FrictionSpec(1.0, 1.0, 1.0, 0.3)
    object.__setattr__(fr, "eps", 0.0)
    with pytest.raises(ValueError):
        P.trading_rate(P.zero(), OU, fr, [0.0], [1.0], Y)


def test_constant_coeff_gains_and_admissibility():
    fr = FrictionSpec(1.0, 2.0, 1.0, 0.5)
    p = P.constant_coeff(0.7, fr)
    k_d, k_h = p.gains(fr)
    assert k_d[0, 0] == pytest.approx(0.7 * 2.0 / 0.25)
    assert k_h[0, 0] == pytest.approx(0.7 / 0.5)
    with pytest.raises(ValueError):
        P.constant_coeff(-1.0, fr)
    N = P.constant_coeff_block(np.array([[0.7]]), fr)
    np.testing.assert_allclose(N, [[1.0 + 0.7 * 4.0, 1.4], [1.4, 0.7]])


def test_policy_spec_validation():
    with pytest.raises(ValueError):
        P.PolicySpec("bogus")
    with pytest.raises(ValueError):
        P.PolicySpec("asymptotic")
    with pytest.raises(ValueError):
        P.PolicySpec("constant_coeff")


def test_state_dependent_source():
    sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
    p = P.PolicySpec("asymptotic", riccati=lambda y: sol)
    assert p.state_dependent
    fr = FrictionSpec(1.0, 1.0, 1.0, 0.5)
    np.testing.assert_allclose(p.gains(fr, Y)[0], P.asymptotic(OU, fr).gains(fr, Y)[0])


def two_asset(Sigma):
    m = ConstantModel(np.zeros(2), Sigma, 1.0, 1.0)
    fr = FrictionSpec(Sigma / 2, 2 * Sigma, 0.5, 1.0)
    return m, fr, P.asymptotic(m, fr)


def test_vector_field_one_asset():
    fr = FrictionSpec(1.0, 1.0, 1.0, 1.0)
    p = P.asymptotic(OU, fr)
    grid = P.Grid.linspace((-1, 1), (0, 2), 5, 4)
    table = P.policy_vector_field(p, OU, fr, grid, Y)
    assert table.columns == ("x1", "x2", "rate1")
    assert table.data.shape == (20, 3)
    for D, h, r in table.data:
        assert r == pytest.approx(P.trading_rate(p, OU, fr, [D], [h], Y)[0])


def test_vector_field_two_asset_decoupled():
    m, fr, p = two_asset(np.diag([1.0, 2.0]))
    grid = P.Grid.linspace((-1, 1), (-1, 1), 7, 7)
    y = np.zeros(2)
    f0 = P.policy_vector_field(p, m, fr, grid, y)
    f1 = P.policy_vector_field(p, m, fr, grid, y, [0.5, 0.0])
    assert np.max(np.abs(f1.column("rate2") - f0.column("rate2"))) == 0.0
    assert np.all(f1.column("rate1") < f0.column("rate1"))


def test_correlated_rest_point_moves_up():
    Sigma = np.array([[1.0, 0.8 * math.sqrt(2)], [0.8 * math.sqrt(2), 2.0]])
    m, fr, p = two_asset(Sigma)
    rest = P.rest_point(p, m, fr, [0.5, 0.0], np.zeros(2))
    assert rest[0] < 0 < rest[1]
    rate = P.trading_rate(p, m, fr, [0.5, 0.0], rest, np.zeros(2))
    np.testing.assert_allclose(rate, 0.0, atol=1e-12)


def test_grid_validation():
    fr = FrictionSpec(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        P.policy_vector_field(P.zero(), OU, fr, P.Grid(np.array([0.0]), np.array([0.0, 1.0])), Y)
    fr3 = FrictionSpec(np.eye(3), np.eye(3), 1.0)
    m3 = ConstantModel(np.zeros(3), np.eye(3), 1.0, 1.0)
    with pytest.raises(ValueError):
        P.policy_vector_field(P.zero(), m3, fr3, P.Grid.linspace((0, 1), (0, 1), 2, 2), np.zeros(3))
