"""Maximal solution of the distortion/position Riccati equation.

For base impact parameters ``(Lambda, C, R)`` and covariance ``Sigma`` the
equation reads

    -Psi - Gamma A - A Gamma + A Chat Lambda^{-1} Chat^T A = 0

with ``Gamma = diag(-R I, 0)``, ``Psi = diag(2 R C^{-1}, gamma Sigma)`` and
``Chat = (C; I)``. It is a standard continuous algebraic Riccati equation
with state matrix ``Gamma``, cost ``Psi``, input map ``Chat`` and input
weight ``Lambda``. We select the stabilizing solution through an ordered
real Schur form of the Hamiltonian and polish it by Newton-Kleinman.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import NotPositiveDefiniteError, RiccatiError
from .model import FrictionSpec, MarketModel, as_matrix, check_spd

RESIDUAL_RTOL = 1e-10
SPECTRUM_TOL = 1e-8
MAX_DIM = 32


@dataclass(frozen=True)
class RiccatiProblem:
    Gamma: np.ndarray
    Psi: np.ndarray
    Chat: np.ndarray
    Lambda: np.ndarray

    @property
    def n(self) -> int:
        return self.Lambda.shape[0]

    @property
    def R(self) -> float:
        return -float(self.Gamma[0, 0])

    @property
    def C(self) -> np.ndarray:
        return self.Chat[: self.n]

    @property
    def gamma_sigma(self) -> np.ndarray:
        n = self.n
        return self.Psi[n:, n:]

    def gain_matrix(self) -> np.ndarray:
        """``Chat Lambda^{-1} Chat^T``."""
        return self.Chat @ np.linalg.solve(self.Lambda, self.Chat.T)

    def residual(self, A: np.ndarray) -> np.ndarray:
        G = self.gain_matrix()
        return -self.Psi - self.Gamma @ A - A @ self.Gamma + A @ G @ A


@dataclass(frozen=True)
class RiccatiSolution:
    A: np.ndarray
    Qd: np.ndarray
    Qh: np.ndarray
    residual_norm: float
    closed_loop_spectrum: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.Qd.shape[0]

    @property
    def A1(self) -> np.ndarray:
        return self.A[: self.n, : self.n]

    @property
    def A12(self) -> np.ndarray:
        return self.A[: self.n, self.n:]

    @property
    def A2(self) -> np.ndarray:
        return self.A[self.n:, self.n:]

    def varpi(self, xi) -> float:
        """Quadratic form ``xi^T A xi / 2``."""
        xi = np.asarray(xi, dtype=float)
        return 0.5 * float(xi @ self.A @ xi)

    def to_dict(self) -> dict:
        spec = self.closed_loop_spectrum
        return {
            "A1": self.A1.tolist(), "A12": self.A12.tolist(), "A2": self.A2.tolist(),
            "Qd": self.Qd.tolist(), "Qh": self.Qh.tolist(),
            "residual_norm": self.residual_norm,
            "closed_loop_spectrum": [[float(z.real), float(z.imag)] for z in spec],
        }


def problem_from_parameters(gamma, Sigma, Lambda, C, R) -> RiccatiProblem:
    Sigma = check_spd(as_matrix(Sigma, name="Sigma"), "Sigma")
    n = Sigma.shape[0]
    Lambda = check_spd(as_matrix(Lambda, n, "Lambda"), "Lambda")
    C = check_spd(as_matrix(C, n, "C"), "C")
    if not (gamma > 0 and R > 0):
        raise NotPositiveDefiniteError("gamma and R must be positive")
    zero = np.zeros((n, n))
    eye = np.eye(n)
    Gamma = np.block([[-R * eye, zero], [zero, zero]])
    Psi = np.block([[2.0 * R * np.linalg.inv(C), zero], [zero, gamma * Sigma]])
    Psi = 0.5 * (Psi + Psi.T)
    Chat = np.vstack([C, eye])
    return RiccatiProblem(Gamma, Psi, Chat, Lambda)


def build_problem(model: MarketModel, frictions: FrictionSpec, y) -> RiccatiProblem:
    """Assemble ``(Gamma, Psi(y), Chat, Lambda)`` from the base (eps-free) frictions."""
    sig = model.covariance(np.asarray(y, dtype=float))
    return problem_from_parameters(model.gamma, sig, frictions.Lambda0, frictions.C0, frictions.R0)


def _gains(problem: RiccatiProblem, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = problem.n
    C = problem.C
    A1, A12, A2 = A[:n, :n], A[:n, n:], A[n:, n:]
    Qd = (C @ A1 + A12.T).T
    Qh = (C @ A12 + A2).T
    return Qd, Qh


def _finish(problem: RiccatiProblem, A: np.ndarray) -> RiccatiSolution:
    A = 0.5 * (A + A.T)
    Qd, Qh = _gains(problem, A)
    res = float(np.linalg.norm(problem.residual(A), "fro"))
    spec = np.linalg.eigvals(problem.Gamma - problem.gain_matrix() @ A)
    spec = spec[np.lexsort((spec.imag, spec.real))]
    return RiccatiSolution(A, Qd, Qh, res, spec)


def _residual_tol(A: np.ndarray) -> float:
    return RESIDUAL_RTOL * (1.0 + np.linalg.norm(A, "fro") ** 2)


def newton_kleinman_step(problem: RiccatiProblem, A: np.ndarray) -> np.ndarray:
    """One Newton step: solve ``F^T X + X F + Psi + A G A = 0`` with
    ``F = Gamma - G A`` the current closed loop."""
    G = problem.gain_matrix()
    F = problem.Gamma - G @ A
    rhs = -(problem.Psi + A @ G @ A)
    X = linalg.solve_continuous_lyapunov(F.T, rhs)
    return 0.5 * (X + X.T)


def solve_maximal(problem: RiccatiProblem, max_refine: int = 4) -> RiccatiSolution:
    """Stabilizing (maximal) solution via the ordered Schur form of the
    Hamiltonian ``[[Gamma, -G], [-Psi, -Gamma]]``, ``G = Chat Lambda^{-1} Chat^T``.

    Raises :class:`RiccatiError` if no ``2n``-dimensional stable invariant
    subspace exists, or if the residual stays above
    ``1e-10 (1 + |A|^2)`` after refinement.
    """
    n2 = 2 * problem.n
    if problem.n > MAX_DIM:
        raise ValueError(f"dense solver supports n <= {MAX_DIM}")
    G = problem.gain_matrix()
    H = np.block([[problem.Gamma, -G], [-problem.Psi, -problem.Gamma.T]])
    # scale for a better conditioned Schur decomposition
    s = max(1.0, float(np.linalg.norm(H, 1)))
    _, Z, sdim = linalg.schur(H / s, output="real", sort="lhp")
    if sdim != n2:
        raise RiccatiError(
            f"stable invariant subspace has dimension {sdim}, expected {n2}",
            invariant="stable_subspace")
    U1, U2 = Z[:n2, :n2], Z[n2:, :n2]
    try:
        A = np.linalg.solve(U1.T, U2.T).T
    except np.linalg.LinAlgError:
        raise RiccatiError("stable subspace is not a graph", invariant="stable_subspace") from None
    A = 0.5 * (A + A.T)

    res = np.linalg.norm(problem.residual(A), "fro")
    for _ in range(max_refine):
        cand = newton_kleinman_step(problem, A)
        cres = np.linalg.norm(problem.residual(cand), "fro")
        if not cres < res:
            break
        A, res = cand, cres
        if res <= 0.01 * _residual_tol(A):
            break

    sol = _finish(problem, A)
    if not sol.residual_norm <= _residual_tol(sol.A):
        raise RiccatiError(f"Riccati residual {sol.residual_norm:.3e} above tolerance")
    if np.max(sol.closed_loop_spectrum.real) > SPECTRUM_TOL:
        raise RiccatiError("closed loop is not stable", invariant="closed_loop_spectrum")
    return sol


def solve(gamma, Sigma, Lambda, C, R) -> RiccatiSolution:
    return solve_maximal(problem_from_parameters(gamma, Sigma, Lambda, C, R))


def solve_1d_closed_form(gamma: float, Sigma: float, Lambda: float, C: float, R: float) -> RiccatiSolution:
    """Explicit one-asset solution: ``Qh = sqrt(Lambda gamma Sigma)`` and ``Qd``
    the positive root of the scalar quadratic."""
    for name, v in (("gamma", gamma), ("Sigma", Sigma), ("Lambda", Lambda), ("C", C), ("R", R)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    gs = gamma * Sigma
    root = math.sqrt(gs * Lambda)
    qh = root
    qd = (math.sqrt(Lambda * (gs + R * (2 * C + R * Lambda + 2 * root))) - R * Lambda - root) / C
    ratio = math.sqrt(gs / Lambda)
    a1 = qd / (R * C) * (ratio + R)
    a12 = -qd / R * ratio
    a2 = root * (1 + C * qd / (R * Lambda))
    A = np.array([[a1, a12], [a12, a2]])
    return _finish(problem_from_parameters(gamma, Sigma, Lambda, C, R), A)


def sqrtm_psd(S: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Symmetric square root; eigenvalues in ``[-tol, 0)`` are clipped to 0."""
    S = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
    w, V = np.linalg.eigh(S)
    if np.any(w < -tol):
        raise NotPositiveDefiniteError("matrix has a negative eigenvalue")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def high_resilience_limits(gamma, Sigma, Lambda, C) -> tuple[np.ndarray, np.ndarray]:
    """Limits of ``Lambda^{-1} Qd^T`` and ``Lambda^{-1} Qh^T`` as ``R -> inf``.

    The distortion weight tends to ``Lambda^{-1}``; the tracking speed to
    ``Lambda^{-1/2} (Lambda^{-1/2} gamma Sigma Lambda^{-1/2})^{1/2} Lambda^{1/2}``.
    Neither depends on ``C``, which is only validated.
    """
    Sigma = check_spd(as_matrix(Sigma, name="Sigma"), "Sigma")
    n = Sigma.shape[0]
    Lambda = check_spd(as_matrix(Lambda, n, "Lambda"), "Lambda")
    check_spd(as_matrix(C, n, "C"), "C")
    lam_half = sqrtm_psd(Lambda)
    lam_ihalf = np.linalg.inv(lam_half)
    inner = sqrtm_psd(lam_ihalf @ (gamma * Sigma) @ lam_ihalf)
    return np.linalg.inv(Lambda), lam_ihalf @ inner @ lam_half


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CertificateReport:
    contractivity_min_eig: float
    contractivity_ok: bool
    concavity_lhs: float | None
    concavity_rhs: float | None
    concavity_ok: bool | None
    concavity_matrix_max_eig: float | None
    delta0: float
    generator_condition: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def closed_loop_matrix(solution: RiccatiSolution, problem: RiccatiProblem) -> np.ndarray:
    """``N = Chat Lambda^{-1} Chat^T A - Gamma``; the rescaled state
    ``X = (D/eps, H - M)`` follows ``dX = -N X dt / eps + noise``."""
    return problem.gain_matrix() @ solution.A - problem.Gamma


def certify(solution: RiccatiSolution, problem: RiccatiProblem, model: MarketModel | None = None,
            frictions: FrictionSpec | None = None, rho: float | None = None) -> CertificateReport:
    """Diagnostics for a solved instance.

    * smallest eigenvalue of ``A N + N^T A - Psi`` (should be >= -1e-8);
    * the concavity condition ``(2R + rho) gamma / rho^2 > |Sigma^{-1/2} C Sigma^{-1/2}|``
      on the effective (eps-scaled) ``R`` and ``C``, when frictions and ``rho`` are given;
    * ``delta0 = lambda_min(A) / 2``, the lower-bound constant of the quadratic form;
    * the factor-generator condition, trivially satisfied for constant-covariance models.
    """
    A = solution.A
    N = closed_loop_matrix(solution, problem)
    K = A @ N + N.T @ A - problem.Psi
    kmin = float(np.min(np.linalg.eigvalsh(0.5 * (K + K.T))))
    delta0 = 0.5 * float(np.min(np.linalg.eigvalsh(A)))

    if rho is None and model is not None:
        rho = model.rho
    lhs = rhs = ok = mat_eig = None
    if frictions is not None and rho is not None:
        n = problem.n
        gamma_sigma = problem.gamma_sigma
        gamma = model.gamma if model is not None else 1.0
        sigma = gamma_sigma / gamma
        R_eff = frictions.R
        C_eff = frictions.C
        s_ih = np.linalg.inv(sqrtm_psd(sigma))
        lhs = (2.0 * R_eff + rho) * gamma / rho**2
        rhs = float(np.linalg.norm(s_ih @ C_eff @ s_ih, 2))
        ok = bool(lhs > rhs)
        S = np.block([[-(2.0 * R_eff + rho) * np.linalg.inv(C_eff), rho * np.eye(n)],
                      [rho * np.eye(n), -gamma * sigma]])
        mat_eig = float(np.max(np.linalg.eigvalsh(0.5 * (S + S.T))))

    if model is None:
        gen = "unknown"
    elif model.constant_covariance:
        gen = "holds: A is constant in y"
    else:
        gen = "not checked: A depends on y"
    return CertificateReport(kmin, bool(kmin >= -SPECTRUM_TOL), lhs, rhs, ok, mat_eig, delta0, gen)
