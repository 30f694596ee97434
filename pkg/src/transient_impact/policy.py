"""Feedback trading-rate policies in effective (eps-scaled) units.

Every policy is affine in the state:

    Hdot = -(K_d D + K_h (h - M(y)))

with ``D`` the physical price distortion. The rescaled distortion is
``d = D / eps``; gains below absorb that conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .model import FrictionSpec, MarketModel, as_matrix
from .riccati import RiccatiSolution, build_problem, solve_maximal

KINDS = ("asymptotic", "constant_coeff", "temporary_only", "zero")

RiccatiSource = Union[RiccatiSolution, Callable[[np.ndarray], RiccatiSolution], None]


@dataclass(frozen=True)
class PolicySpec:
    """A feedback rule. ``riccati`` is a solved instance (for models with
    state-independent covariance) or a callable ``y -> RiccatiSolution``."""

    kind: str
    alpha: np.ndarray | None = None
    riccati: RiccatiSource = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind in ("asymptotic", "temporary_only") and self.riccati is None:
            raise ValueError(f"{self.kind} policy needs a Riccati solution")
        if self.kind == "constant_coeff" and self.alpha is None:
            raise ValueError("constant_coeff policy needs alpha")

    @property
    def state_dependent(self) -> bool:
        return callable(self.riccati) and not isinstance(self.riccati, RiccatiSolution)

    def solution_at(self, y) -> RiccatiSolution:
        if self.riccati is None:
            raise ValueError(f"{self.kind} policy has no Riccati solution")
        if isinstance(self.riccati, RiccatiSolution):
            return self.riccati
        return self.riccati(np.asarray(y, dtype=float))

    def gains(self, frictions: FrictionSpec, y=None) -> tuple[np.ndarray, np.ndarray]:
        """``(K_d, K_h)`` acting on physical ``D`` and on ``h - M``."""
        n, eps = frictions.n, frictions.eps
        if self.kind == "zero":
            z = np.zeros((n, n))
            return z, z
        if self.kind == "constant_coeff":
            a = self.alpha
            return a @ frictions.C0 / eps**2, a / eps
        sol = self.solution_at(y)
        lam_inv = np.linalg.inv(frictions.Lambda0)
        k_h = lam_inv @ sol.Qh.T / eps
        if self.kind == "temporary_only":
            return np.zeros((n, n)), k_h
        return lam_inv @ sol.Qd.T / eps**2, k_h

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.alpha is not None:
            out["alpha"] = np.asarray(self.alpha).tolist()
        return out


def _riccati_source(model: MarketModel, frictions: FrictionSpec, y=None) -> RiccatiSource:
    if model.constant_covariance:
        y0 = np.zeros(model.dim) if y is None else np.asarray(y, dtype=float)
        return solve_maximal(build_problem(model, frictions, y0))
    return lambda yy: solve_maximal(build_problem(model, frictions, yy))


def asymptotic(model: MarketModel, frictions: FrictionSpec, y=None) -> PolicySpec:
    return PolicySpec("asymptotic", riccati=_riccati_source(model, frictions, y))


def temporary_only(model: MarketModel, frictions: FrictionSpec, y=None) -> PolicySpec:
    return PolicySpec("temporary_only", riccati=_riccati_source(model, frictions, y))


def zero() -> PolicySpec:
    return PolicySpec("zero")


def constant_coeff_block(alpha: np.ndarray, frictions: FrictionSpec) -> np.ndarray:
    """Rescaled closed-loop matrix ``[[R I + C alpha C, C alpha], [alpha C, alpha]]``."""
    n = frictions.n
    C, R = frictions.C0, frictions.R0
    return np.block([[R * np.eye(n) + C @ alpha @ C, C @ alpha], [alpha @ C, alpha]])


def constant_coeff(alpha, frictions: FrictionSpec) -> PolicySpec:
    """``Hdot = -(alpha/eps)(h - M) - (alpha C/eps) d`` with admissibility pre-check:
    the closed-loop block matrix must have a positive-definite symmetric part."""
    a = as_matrix(alpha, frictions.n, "alpha")
    N = constant_coeff_block(a, frictions)
    if np.min(np.linalg.eigvalsh(N + N.T)) <= 0:
        raise ValueError("alpha fails the admissibility check (N + N^T not positive definite)")
    return PolicySpec("constant_coeff", alpha=a)


def trading_rate(policy: PolicySpec, model: MarketModel, frictions: FrictionSpec, d, h, y) -> np.ndarray:
    """Trading rate at physical distortion ``d`` (= ``D``), position ``h``, state ``y``."""
    if frictions.eps <= 0:
        raise ValueError("eps must be positive")
    y = np.asarray(y, dtype=float)
    D = np.atleast_1d(np.asarray(d, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if policy.kind == "zero":
        return np.zeros(frictions.n)
    k_d, k_h = policy.gains(frictions, y)
    dev = h - model.merton(y)
    return -(k_d @ D + k_h @ dev)


@dataclass(frozen=True)
class Grid:
    """Rectangle of evaluation points; ``x1`` and ``x2`` are 1-D axes."""

    x1: np.ndarray
    x2: np.ndarray

    @classmethod
    def linspace(cls, x1_range, x2_range, num1=21, num2=21):
        return cls(np.linspace(*x1_range, num1), np.linspace(*x2_range, num2))


@dataclass(frozen=True)
class FieldTable:
    columns: tuple[str, ...]
    data: np.ndarray

    def column(self, name) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def policy_vector_field(policy: PolicySpec, model: MarketModel, frictions: FrictionSpec,
                        grid: Grid, y, distortion=None) -> FieldTable:
    """Evaluate the rate on a grid.

    For one asset the axes are ``(D, h)``; for two assets they are
    ``(h1, h2)`` with the distortion held at ``distortion`` (default 0).
    Columns are ``x1, x2, rate1[, rate2]``.
    """
    n = frictions.n
    x1 = np.asarray(grid.x1, dtype=float)
    x2 = np.asarray(grid.x2, dtype=float)
    if x1.size < 2 or x2.size < 2:
        raise ValueError("grid needs at least 2 points per axis")
    if n not in (1, 2):
        raise ValueError("vector fields are available for n in {1, 2}")
    y = np.asarray(y, dtype=float)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    X1, X2 = X1.ravel(), X2.ravel()
    if policy.kind == "zero":
        rates = np.zeros((X1.size, n))
    else:
        k_d, k_h = policy.gains(frictions, y)
        M = model.merton(y)
        if n == 1:
            rates = -(X1[:, None] * k_d[0, 0] + (X2[:, None] - M) * k_h[0, 0])
        else:
            D = np.zeros(2) if distortion is None else np.asarray(distortion, dtype=float)
            H = np.stack([X1, X2], axis=1)
            rates = -(D @ k_d.T + (H - M) @ k_h.T)
    cols = ("x1", "x2") + tuple(f"rate{i + 1}" for i in range(n))
    return FieldTable(cols, np.column_stack([X1, X2, rates]))


def rest_point(policy: PolicySpec, model: MarketModel, frictions: FrictionSpec, distortion, y) -> np.ndarray:
    """Position at which the rate vanishes for a fixed distortion."""
    k_d, k_h = policy.gains(frictions, y)
    return model.merton(np.asarray(y, dtype=float)) - np.linalg.solve(k_h, k_d @ np.asarray(distortion, dtype=float))
