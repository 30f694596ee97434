import math

import numpy as np
import pytest

from oracles import discounted_ou_functional, exact_linear_objective
from transient_impact.expansion import assemble_vhat, corrector_u, expansion_target, source_a
from transient_impact.model import ConstantModel, FrictionSpec, MonteCarlo, OUModel, tanh_signal
from transient_impact.riccati import solve

ONES = FrictionSpec(1.0, 1.0, 1.0)
# A2 eta^2 b^2 / (2 rho gamma^2 sigma^4) with A2 = 1 + (sqrt 6 - 2), all other parameters 1
U_ONES = (math.sqrt(6) - 1) / 2


def test_corrector_closed_form_value():
    m = OUModel(1.0, 1.0, 1.0, 1.0, 1.0)
    u = corrector_u(m, ONES, [0.0, 1.0])
    assert u.value == pytest.approx(0.72474, abs=5e-6)
    assert u.value == pytest.approx(U_ONES, abs=1e-12)
    assert u.std_error == 0.0


def test_corrector_closed_form_scales():
    # a = c_M A2 / 2 is constant, so u = a / rho
    m = OUModel(0.5, 2.0, 1.5, 0.7, 0.3)
    sol = solve(0.7, 1.5**2, 1.0, 1.0, 1.0)
    c_m = (2.0 / (0.7 * 1.5**2)) ** 2
    u = corrector_u(m, ONES, [0.0, -0.4])
    assert u.value == pytest.approx(0.5 * c_m * sol.A2[0, 0] / 0.3, rel=1e-12)


def test_source_batched():
    m = OUModel(1.0, 1.0, 1.0, 1.0, 1.0, tanh_signal())
    sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
    y = np.array([[0.0, -1.0], [0.0, 0.0], [0.0, 2.0]])
    a = source_a(m, sol, y)
    ref = 0.5 * sol.A2[0, 0] * (1.0 / np.cosh(y[:, 1]) ** 2) ** 2
    np.testing.assert_allclose(a, ref, rtol=1e-12)
    # callable Riccati source gives the same answer
    np.testing.assert_allclose(source_a(m, lambda yy: sol, y), ref, rtol=1e-12)


def test_corrector_monte_carlo_linear():
    m = OUModel(1.0, 1.0, 1.0, 1.0, 1.0)
    est = corrector_u(m, ONES, [0.0, 1.0], MonteCarlo(paths=2048, dt=0.02, seed=11))
    # the source is constant for the linear signal, so the estimator has no noise
    assert est.value == pytest.approx(U_ONES, abs=1e-4)


def test_corrector_monte_carlo_tanh_vs_quadrature():
    m = OUModel(1.0, 1.0, 1.0, 1.0, 1.0, tanh_signal())
    a2 = solve(1.0, 1.0, 1.0, 1.0, 1.0).A2[0, 0]
    ref = discounted_ou_functional(lambda x: 0.5 * a2 * (1.0 / np.cosh(x) ** 2) ** 2, 0.3, 1.0, 1.0, 1.0)
    est = corrector_u(m, ONES, [0.0, 0.3], MonteCarlo(paths=4000, dt=0.01, seed=2))
    assert abs(est.value - ref) <= 3 * est.std_error + 1e-3


def test_corrector_closed_form_requires_linear():
    m = OUModel(1.0, 1.0, 1.0, 1.0, 1.0, tanh_signal())
    with pytest.raises(ValueError):
        corrector_u(m, ONES, [0.0, 1.0])


def test_corrector_zero_for_constant_market():
    m = ConstantModel([0.2], [[1.0]], 1.0, 1.0)
    est = corrector_u(m, ONES, [0.0], MonteCarlo(paths=64, dt=0.05))
    assert est.value == 0.0


def test_half_factor_from_exact_objective():
    """The scaled loss of the asymptotic policy tends to u with the 1/2 in the
    source; without it the limit would be twice as large."""
    sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4):
        J, V0 = exact_linear_objective(eps, sol.Qd[0, 0] / eps**2, sol.Qh[0, 0] / eps,
                                       include_frictionless=True)
        gaps.append((V0 - J) / eps)
    assert abs(gaps[-1] - U_ONES) < 2e-3
    assert abs(gaps[-1] - 2 * U_ONES) > 0.5
    assert abs(gaps[2] - U_ONES) < abs(gaps[1] - U_ONES) < abs(gaps[0] - U_ONES)


def test_expansion_target_at_nonzero_state():
    sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
    d, dev = 0.3, -0.25
    target = expansion_target(sol, np.eye(1), U_ONES, [d], [1.0 + dev], [1.0])
    eps = 1e-4
    J, V0 = exact_linear_objective(eps, sol.Qd[0, 0] / eps**2, sol.Qh[0, 0] / eps, D0=eps * d,
                                   h0=1.0 + dev, include_frictionless=True)
    assert (V0 - J) / eps == pytest.approx(target, abs=2e-3)


def test_target_reduces_to_u_at_merton():
    sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
    assert expansion_target(sol, np.eye(1), 0.5, [0.0], [1.0], [1.0]) == pytest.approx(0.5)


def test_assemble_vhat():
    m = OUModel(1.0, 1.0, 1.0, 1.0, 1.0)
    fr = ONES.with_eps(0.1)
    sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
    terms = assemble_vhat(m, fr, sol, U_ONES, [0.0], [1.0], [0.0, 1.0], 1.0 / 3.0)
    assert terms.vhat == pytest.approx(1.0 / 3.0 - 0.1 * U_ONES)
    assert terms.varpi == 0.0 and terms.initial_term == 0.0
    d, h = 0.4, 1.3
    terms = assemble_vhat(m, fr, sol, (U_ONES, 0.01), [d], [h], [0.0, 1.0], 1.0 / 3.0)
    xi = np.array([d, h - 1.0])
    quad = 0.5 * xi @ sol.A @ xi
    assert terms.initial_term == pytest.approx(h * d - d * d / 2)
    assert terms.varpi_term == pytest.approx(0.1 * quad)
    assert terms.varpi == pytest.approx(quad / 0.1)
    assert terms.vhat == pytest.approx(1.0 / 3.0 - 0.1 * (U_ONES + h * d - d * d / 2) - 0.1 * quad)
    assert terms.u_std_error == 0.01
