"""First-order value expansion: corrector source, corrector and assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CLOSED_FORM,
    FrictionSpec,
    MarketModel,
    MonteCarlo,
    OUModel,
    discounted_factor_integral,
    merton_qv,
)
from .riccati import RiccatiSolution, build_problem, solve_maximal
from .streams import Estimate


@dataclass(frozen=True)
class ExpansionTerms:
    v0: float
    u: float
    u_std_error: float
    initial_term: float
    varpi: float
    varpi_term: float
    vhat: float
    eps: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _solver_for(model: MarketModel, frictions: FrictionSpec, riccati=None):
    if isinstance(riccati, RiccatiSolution):
        return lambda y: riccati
    if riccati is not None:
        return riccati
    if model.constant_covariance:
        sol = solve_maximal(build_problem(model, frictions, np.zeros(model.dim)))
        return lambda y: sol
    return lambda y: solve_maximal(build_problem(model, frictions, y))


def source_a(model: MarketModel, riccati, y) -> float | np.ndarray:
    """``a(y) = Tr(c_M(y) A2(y)) / 2``.

    ``riccati`` is a :class:`RiccatiSolution` or a callable ``y -> solution``.
    ``y`` may be batched; a solution that does not depend on ``y`` is then
    applied to all rows at once.
    """
    y = np.asarray(y, dtype=float)
    c = merton_qv(model, y)
    if isinstance(riccati, RiccatiSolution):
        return 0.5 * np.einsum("...ij,ji->...", c, riccati.A2)
    if y.ndim == 1:
        return 0.5 * float(np.trace(c @ riccati(y).A2))
    flat_y = y.reshape(-1, y.shape[-1])
    flat_c = c.reshape(-1, c.shape[-2], c.shape[-1])
    out = np.array([0.5 * np.trace(ci @ riccati(yi).A2) for yi, ci in zip(flat_y, flat_c)])
    return out.reshape(y.shape[:-1])


def corrector_u(model: MarketModel, frictions: FrictionSpec, y, estimator=CLOSED_FORM,
                riccati=None) -> Estimate:
    """Corrector ``u(y) = E int_0^inf e^{-rho t} a(Y_t) dt``.

    The closed form (OU model, linear signal ``nu(x) = b x``) is
    ``A2 eta^2 b^2 / (2 rho gamma^2 sigma^4)``.
    """
    solver = _solver_for(model, frictions, riccati)
    y = np.asarray(y, dtype=float)
    if isinstance(estimator, MonteCarlo):
        if model.constant_covariance:
            sol = solver(y)
            integrand = lambda yy: source_a(model, sol, yy)  # noqa: E731
        else:
            integrand = lambda yy: source_a(model, solver, yy)  # noqa: E731
        est, _ = discounted_factor_integral(model, y, integrand, estimator)
        return est
    if estimator != CLOSED_FORM:
        raise ValueError(f"unknown estimator {estimator!r}")
    if not isinstance(model, OUModel) or not model.signal.is_linear:
        raise ValueError("closed form requires an OU model with linear signal")
    a2 = float(solver(y).A2[0, 0])
    b = model.signal.slope
    value = a2 * model.eta**2 * b**2 / (2.0 * model.rho * model.gamma**2 * model.sigma**4)
    return Estimate(value, 0.0)


def expansion_target(solution: RiccatiSolution, C0, u: float, d, h, M) -> float:
    """Predicted ``(V0 - V_eps) / eps``: ``u + h.d - d.C^{-1}d/2 + xi.A.xi/2`` with
    ``xi = (d, h - M)`` and ``d`` on the rescaled scale (D / eps)."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    xi = np.concatenate([d, h - np.atleast_1d(M)])
    init = float(h @ d - 0.5 * d @ np.linalg.solve(np.atleast_2d(C0), d))
    return u + init + solution.varpi(xi)


def assemble_vhat(model: MarketModel, frictions: FrictionSpec, riccati: RiccatiSolution,
                  u_value, d, h, y, v0: float) -> ExpansionTerms:
    """Approximate value at ``(eps d, h, y)``:
    ``V0 - eps (u + h.d - d.C^{-1}d/2) - eps xi.A.xi/2``.

    ``d`` is the rescaled distortion (physical ``D = eps d``). The
    returned ``varpi`` is the quadratic form at ``xi / sqrt(eps)`` and
    ``varpi_term`` its contribution ``eps^2 varpi`` to ``vhat``.
    """
    eps = frictions.eps
    if isinstance(u_value, tuple):
        u, u_se = float(u_value[0]), float(u_value[1])
    else:
        u, u_se = float(u_value), 0.0
    y = np.asarray(y, dtype=float)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    M = model.merton(y)
    init = float(h @ d - 0.5 * d @ np.linalg.solve(frictions.C0, d))
    quad = riccati.varpi(np.concatenate([d, h - M]))
    # eps^2 varpi(xi / sqrt(eps)) == eps * xi.A.xi / 2
    varpi_term = eps * quad
    vhat = float(v0) - eps * (u + init) - varpi_term
    return ExpansionTerms(float(v0), u, u_se, init, quad / eps, varpi_term, vhat, eps)
