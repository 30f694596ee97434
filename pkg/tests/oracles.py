"""Independent reference computations used by the tests.

Nothing here imports the package's solvers, so the tests compare against
values derived along a different route.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.integrate as si
import scipy.linalg as sl


def care_oracle(gamma, Sigma, Lambda, C, R):
    """Maximal Riccati solution via scipy's continuous-time ARE solver.

    The equation ``-Psi - Gamma A - A Gamma + A Chat Lambda^{-1} Chat' A = 0``
    is scipy's ``a'X + Xa - X b r^{-1} b'X + q = 0`` with ``a = Gamma``,
    ``b = Chat``, ``r = Lambda`` and ``q = Psi``.
    """
    Sigma, Lambda, C = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (Sigma, Lambda, C))
    n = Sigma.shape[0]
    Gamma = np.block([[-R * np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), np.zeros((n, n))]])
    Psi = np.block([[2 * R * np.linalg.inv(C), np.zeros((n, n))], [np.zeros((n, n)), gamma * Sigma]])
    Chat = np.vstack([C, np.eye(n)])
    return sl.solve_continuous_are(Gamma, Chat, Psi, Lambda)


def closed_form_1d(gamma, Sigma, Lambda, C, R):
    """Scalar gains and blocks written out by hand."""
    g = gamma * Sigma
    qh = math.sqrt(Lambda * g)
    qd = (math.sqrt(Lambda * (g + R * (2 * C + R * Lambda + 2 * math.sqrt(g * Lambda))))
          - R * Lambda - math.sqrt(g * Lambda)) / C
    a1 = qd / (R * C) * (math.sqrt(g / Lambda) + R)
    a12 = -qd / R * math.sqrt(g / Lambda)
    a2 = math.sqrt(Lambda * g) * (1 + C * qd / (R * Lambda))
    return dict(Qh=qh, Qd=qd, A1=a1, A12=a12, A2=a2)


def exact_linear_objective(eps, k_d, k_h, *, lam=1.0, eta=1.0, sigma=1.0, gamma=1.0, rho=1.0,
                           Lambda=1.0, C=1.0, R=1.0, b=1.0, x0=1.0, D0=0.0, h0=None,
                           horizon=None, include_frictionless=False):
    """Exact continuous-time objective of ``Hdot = -(k_d D + k_h (H - M))``.

    One asset, drift ``b X`` with ``dX = -lam X dt + eta dW`` and Merton
    portfolio ``M = b X / (gamma sigma^2)``. The state ``Z = (X, D, H)`` is
    linear Gaussian, so ``W = int e^{-rho t} E[Z Z'] dt`` solves a Lyapunov
    equation and the objective is ``Tr(Q W)``. ``k_d`` acts on physical
    ``D``. ``lam = eta = 0`` gives a constant-coefficient market.
    With ``horizon`` the integral is truncated (through the matrix
    exponential of the moment dynamics).
    """
    Le, Ce, Re = eps**2 * Lambda, eps * C, R / eps
    m = b / (gamma * sigma**2)
    if h0 is None:
        h0 = m * x0
    a = np.array([k_h * m, -k_d, -k_h])  # rate = a . Z
    F = np.array([[-lam, 0.0, 0.0], [0.0, -Re, 0.0], [0.0, 0.0, 0.0]])
    F[1] += Ce * a
    F[2] += a
    GG = np.zeros((3, 3))
    GG[0, 0] = eta**2
    Z0 = np.array([x0, D0, h0], dtype=float)
    P0 = np.outer(Z0, Z0)
    eH = np.array([0.0, 0.0, 1.0])
    drift = np.array([b, -Re, 0.0]) + Ce * a
    Q = np.outer(eH, drift) - 0.5 * gamma * sigma**2 * np.outer(eH, eH) - 0.5 * Le * np.outer(a, a)
    Q = 0.5 * (Q + Q.T)
    if horizon is None:
        A = F - 0.5 * rho * np.eye(3)
        W = sl.solve_continuous_lyapunov(A, -(P0 + GG / rho))
    else:
        # moments E[Z Z'](t) by vectorized linear ODE, integrated against e^{-rho t}
        def rhs(t, w):
            P = w[:9].reshape(3, 3)
            dP = F @ P + P @ F.T + GG
            return np.concatenate([dP.ravel(), [math.exp(-rho * t) * float(np.sum(Q * P))]])
        sol = si.solve_ivp(rhs, (0.0, horizon), np.concatenate([P0.ravel(), [0.0]]),
                           rtol=1e-11, atol=1e-13, method="DOP853")
        val = float(sol.y[-1, -1])
        return val
    val = float(np.sum(Q * W))
    if include_frictionless:
        # frictionless value for comparison
        e = np.array([1.0, 0.0, 0.0])
        val0 = 0.5 * b * m * float(e @ W @ e)
        return val, val0
    return val


def ou_moments(x0, lam, eta, t):
    mean = x0 * math.exp(-lam * t)
    var = eta**2 * (1.0 - math.exp(-2.0 * lam * t)) / (2.0 * lam)
    return mean, var


def discounted_ou_functional(f, x0, lam, eta, rho, nodes=60, t_max=None):
    """``int_0^inf e^{-rho t} E f(X_t) dt`` for an OU factor started at x0.

    Gauss-Hermite in space, adaptive quadrature in time.
    """
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)

    def inner(t):
        m, v = ou_moments(x0, lam, eta, t)
        return math.exp(-rho * t) * float(np.sum(w * f(m + math.sqrt(v) * z)))

    upper = t_max if t_max is not None else 60.0 / rho
    val, _ = si.quad(inner, 0.0, upper, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val
