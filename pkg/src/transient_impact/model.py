"""Market models, preferences, friction parameters and frictionless quantities.

State vectors ``y`` live in R^(n+m); the first ``n`` components are the
risky asset prices. Every model callable is vectorized over leading axes:
``y`` of shape ``(..., n+m)`` maps to ``(..., n+m)`` drifts,
``(..., n+m, q)`` factor volatilities, ``(..., n)`` price drifts and
``(..., n, q)`` price volatilities.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import (
    HorizonError,
    NotPositiveDefiniteError,
    SingularCovarianceError,
)
from .streams import Estimate, block_generator, estimate, run_blocks

COND_MAX = 1e12
SYM_TOL = 1e-12


def as_matrix(a, n=None, name="matrix") -> np.ndarray:
    """Coerce a scalar or nested list to a 2-D float array."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if n is not None and m.shape[0] != n:
        raise ValueError(f"{name} must be {n}x{n}, got {m.shape}")
    return m


def check_spd(a: np.ndarray, name: str = "matrix", sym_tol: float = SYM_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(0.5 * (a + a.T))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from None
    return a


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------


class MarketModel:
    """Markovian factor model ``dY = mu_Y dt + sigma_Y dW`` with prices as
    the first ``n`` components of ``Y``, plus mean-variance preferences.

    Parameters
    ----------
    n, m : int
        Number of risky assets and of extra factor dimensions.
    q : int
        Dimension of the driving Brownian motion.
    drift_Y, vol_Y, price_drift, price_vol : callable
        Vectorized coefficient maps (see module docstring).
    gamma, rho : float
        Risk aversion and discount rate.
    constant_covariance : bool
        Declare that ``price_vol`` does not depend on ``y``. Enables caching
        of the Riccati solution across states.
    """

    def __init__(
        self,
        n: int,
        m: int,
        q: int,
        drift_Y: Callable,
        vol_Y: Callable,
        price_drift: Callable,
        price_vol: Callable,
        gamma: float,
        rho: float,
        constant_covariance: bool = False,
    ):
        if n < 1 or m < 0 or q < 1:
            raise ValueError("need n >= 1, m >= 0, q >= 1")
        if not gamma > 0 or not rho > 0:
            raise ValueError("gamma and rho must be positive")
        self.n, self.m, self.q = int(n), int(m), int(q)
        self.drift_Y = drift_Y
        self.vol_Y = vol_Y
        self.price_drift = price_drift
        self.price_vol = price_vol
        self.gamma = float(gamma)
        self.rho = float(rho)
        self.constant_covariance = bool(constant_covariance)

    @property
    def dim(self) -> int:
        return self.n + self.m

    def covariance(self, y) -> np.ndarray:
        s = self.price_vol(np.asarray(y, dtype=float))
        return s @ np.swapaxes(s, -1, -2)

    def merton(self, y) -> np.ndarray:
        """Unchecked Merton portfolio, batched; see :func:`merton_portfolio`."""
        y = np.asarray(y, dtype=float)
        sig = self.covariance(y)
        mu = self.price_drift(y)
        return np.linalg.solve(self.gamma * sig, mu[..., None])[..., 0]

    def merton_jacobian(self, y) -> np.ndarray:
        """d M / d y, shape ``(..., n, n+m)``, by central differences."""
        y = np.asarray(y, dtype=float)
        jac = np.empty(y.shape[:-1] + (self.n, self.dim))
        h = 1e-5 * (1.0 + np.linalg.norm(y, axis=-1))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            step = h[..., None] * e
            jac[..., :, k] = (self.merton(y + step) - self.merton(y - step)) / (2.0 * h[..., None])
        return jac

    def step_factor(self, y: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
        """Advance the factor by one Euler-Maruyama step. ``dW ~ N(0, dt I)``."""
        return y + self.drift_Y(y) * dt + (self.vol_Y(y) @ dW[..., None])[..., 0]

    def describe(self) -> dict:
        return {"kind": "generic", "n": self.n, "m": self.m, "q": self.q,
                "gamma": self.gamma, "rho": self.rho}


@dataclass(frozen=True)
class Signal:
    """Signal-to-drift map with its first three derivatives."""

    name: str
    f: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    params: tuple = ()

    @property
    def is_linear(self) -> bool:
        return self.name == "linear"

    @property
    def slope(self) -> float:
        if not self.is_linear:
            raise ValueError("slope is only defined for the linear signal")
        return float(self.params[0])


def linear_signal(slope: float = 1.0) -> Signal:
    b = float(slope)
    return Signal(
        "linear",
        lambda x: b * np.asarray(x, dtype=float),
        lambda x: np.full_like(np.asarray(x, dtype=float), b),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        (b,),
    )


def tanh_signal(amplitude: float = 1.0, scale: float = 1.0) -> Signal:
    """``nu(x) = amplitude * tanh(scale * x)``; bounded derivatives of all orders."""
    a, k = float(amplitude), float(scale)

    def d1(x):
        s = 1.0 / np.cosh(k * np.asarray(x, dtype=float)) ** 2
        return a * k * s

    def d2(x):
        t = np.tanh(k * np.asarray(x, dtype=float))
        return -2.0 * a * k * k * t * (1.0 - t * t)

    def d3(x):
        t = np.tanh(k * np.asarray(x, dtype=float))
        s = 1.0 - t * t
        return -2.0 * a * k**3 * s * (1.0 - 3.0 * t * t)

    return Signal("tanh", lambda x: a * np.tanh(k * np.asarray(x, dtype=float)), d1, d2, d3, (a, k))


SIGNALS = {"linear": linear_signal, "tanh": tanh_signal}


class OUModel(MarketModel):
    """One risky asset driven by an autonomous Ornstein-Uhlenbeck signal.

    State ``y = (S, X)``: ``dX = -lam X dt + eta dW2`` and
    ``dS = nu(X) dt + sigma dW1``.
    """

    def __init__(self, lam: float, eta: float, sigma: float, gamma: float, rho: float,
                 signal: Signal | None = None):
        if not (lam > 0 and eta > 0 and sigma > 0):
            raise ValueError("lam, eta, sigma must be positive")
        self.lam, self.eta, self.sigma = float(lam), float(eta), float(sigma)
        self.signal = signal if signal is not None else linear_signal(1.0)
        super().__init__(
            n=1, m=1, q=2,
            drift_Y=self._drift_Y, vol_Y=self._vol_Y,
            price_drift=self._price_drift, price_vol=self._price_vol,
            gamma=gamma, rho=rho, constant_covariance=True,
        )

    def _drift_Y(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack([self.signal.f(y[..., 1]), -self.lam * y[..., 1]], axis=-1)

    def _vol_Y(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 0] = self.sigma
        out[..., 1, 1] = self.eta
        return out

    def _price_drift(self, y):
        y = np.asarray(y, dtype=float)
        return self.signal.f(y[..., 1])[..., None]

    def _price_vol(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (1, 2))
        out[..., 0, 0] = self.sigma
        return out

    def merton(self, y):
        y = np.asarray(y, dtype=float)
        return (self.signal.f(y[..., 1]) / (self.gamma * self.sigma**2))[..., None]

    def merton_jacobian(self, y):
        y = np.asarray(y, dtype=float)
        jac = np.zeros(y.shape[:-1] + (1, 2))
        jac[..., 0, 1] = self.signal.d1(y[..., 1]) / (self.gamma * self.sigma**2)
        return jac

    def step_factor(self, y, dt, dW):
        # exact OU transition for the signal, Euler for the price
        x = y[..., 1]
        decay = math.exp(-self.lam * dt)
        sd = self.eta * math.sqrt((1.0 - math.exp(-2.0 * self.lam * dt)) / (2.0 * self.lam))
        z = dW[..., 1] / math.sqrt(dt)
        out = np.empty_like(y)
        out[..., 0] = y[..., 0] + self.signal.f(x) * dt + self.sigma * dW[..., 0]
        out[..., 1] = x * decay + sd * z
        return out

    def describe(self):
        return {"kind": "ou", "lambda": self.lam, "eta": self.eta, "sigma": self.sigma,
                "gamma": self.gamma, "rho": self.rho,
                "signal": self.signal.name, "signal_params": list(self.signal.params)}


class ConstantModel(MarketModel):
    """Arithmetic Brownian prices with constant drift ``mu`` and covariance."""

    def __init__(self, mu, Sigma, gamma: float, rho: float):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        n = self.mu.size
        self.Sigma = check_spd(as_matrix(Sigma, n, "Sigma"), "Sigma")
        self.chol = np.linalg.cholesky(self.Sigma)
        super().__init__(
            n=n, m=0, q=n,
            drift_Y=lambda y: np.broadcast_to(self.mu, np.shape(y)).copy(),
            vol_Y=lambda y: np.broadcast_to(self.chol, np.shape(y)[:-1] + (n, n)).copy(),
            price_drift=lambda y: np.broadcast_to(self.mu, np.shape(y)).copy(),
            price_vol=lambda y: np.broadcast_to(self.chol, np.shape(y)[:-1] + (n, n)).copy(),
            gamma=gamma, rho=rho, constant_covariance=True,
        )
        self._merton = np.linalg.solve(self.gamma * self.Sigma, self.mu)

    def merton(self, y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self._merton, y.shape[:-1] + (self.n,)).copy()

    def merton_jacobian(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape[:-1] + (self.n, self.n))

    def step_factor(self, y, dt, dW):
        return y + self.mu * dt + dW @ self.chol.T

    def describe(self):
        return {"kind": "matrix_constant", "mu": self.mu.tolist(), "Sigma": self.Sigma.tolist(),
                "gamma": self.gamma, "rho": self.rho}


# --------------------------------------------------------------------------
# frictions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FrictionSpec:
    """Base impact parameters and the asymptotic parameter ``eps``.

    Effective (critical-regime) parameters are ``Lambda = eps^2 Lambda0``,
    ``C = eps C0`` and ``R = R0 / eps``.
    """

    Lambda0: np.ndarray
    C0: np.ndarray
    R0: float
    eps: float = 1.0

    def __post_init__(self):
        lam = as_matrix(self.Lambda0, name="Lambda0")
        c = as_matrix(self.C0, lam.shape[0], "C0")
        check_spd(lam, "Lambda0")
        check_spd(c, "C0")
        if not self.R0 > 0:
            raise ValueError("R0 must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "Lambda0", lam)
        object.__setattr__(self, "C0", c)
        object.__setattr__(self, "R0", float(self.R0))
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def n(self) -> int:
        return self.Lambda0.shape[0]

    @property
    def Lambda(self) -> np.ndarray:
        return self.eps**2 * self.Lambda0

    @property
    def C(self) -> np.ndarray:
        return self.eps * self.C0

    @property
    def R(self) -> float:
        return self.R0 / self.eps

    def with_eps(self, eps: float) -> "FrictionSpec":
        return dataclasses.replace(self, eps=eps)

    def describe(self) -> dict:
        return {"Lambda0": self.Lambda0.tolist(), "C0": self.C0.tolist(),
                "R0": self.R0, "eps": self.eps}


# --------------------------------------------------------------------------
# frictionless quantities
# --------------------------------------------------------------------------


def _check_conditioning(sig: np.ndarray) -> None:
    cond = np.linalg.cond(sig)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_MAX):
        raise SingularCovarianceError(
            f"covariance condition number {np.max(cond):.3e} exceeds {COND_MAX:.0e}")


def merton_portfolio(model: MarketModel, y) -> np.ndarray:
    """Myopic Merton portfolio ``Sigma(y)^{-1} mu(y) / gamma``.

    Raises :class:`SingularCovarianceError` if ``Sigma(y)`` has condition
    number above ``1e12``.
    """
    y = np.asarray(y, dtype=float)
    _check_conditioning(model.covariance(y))
    return model.merton(y)


def merton_qv(model: MarketModel, y) -> np.ndarray:
    """Infinitesimal quadratic variation of the Merton portfolio,
    ``(dM/dy) sigma_Y sigma_Y^T (dM/dy)^T``."""
    y = np.asarray(y, dtype=float)
    _check_conditioning(model.covariance(y))
    jac = model.merton_jacobian(y)
    g = jac @ model.vol_Y(y)
    c = g @ np.swapaxes(g, -1, -2)
    return 0.5 * (c + np.swapaxes(c, -1, -2))


# --------------------------------------------------------------------------
# discounted factor functionals
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarlo:
    """Monte Carlo estimator settings for discounted infinite-horizon integrals.

    ``horizon=None`` picks ``T`` with ``exp(-rho T) < 1e-6``.
    """

    paths: int = 10_000
    horizon: float | None = None
    dt: float = 0.01
    seed: int = 0
    tail_tol: float = 1e-4
    workers: int | None = None


CLOSED_FORM = "closed_form_ou_linear"


def default_horizon(rho: float, tail: float = 1e-6) -> float:
    return -math.log(tail) / rho


def discounted_factor_integral(model: MarketModel, y0, integrand: Callable, mc: MonteCarlo,
                               rho: float | None = None) -> tuple[Estimate, float]:
    """Estimate ``E int_0^T e^{-rho t} f(Y_t) dt`` along simulated factor paths.

    The time integral uses the trapezoid rule on the simulation grid.
    Returns the estimate and an analytic tail bound
    ``e^{-rho T} E[f(Y_T)] / rho`` for the truncated part.
    """
    rho = model.rho if rho is None else rho
    horizon = mc.horizon if mc.horizon is not None else default_horizon(rho)
    nsteps = max(1, int(math.ceil(horizon / mc.dt - 1e-9)))
    dt = horizon / nsteps
    y0 = np.asarray(y0, dtype=float)

    def block(b, start, stop):
        rng = block_generator(mc.seed, b)
        npaths = stop - start
        y = np.broadcast_to(y0, (npaths, model.dim)).copy()
        f = integrand(y)
        acc = 0.5 * f * dt
        for k in range(1, nsteps + 1):
            dW = rng.standard_normal((npaths, model.q)) * math.sqrt(dt)
            y = model.step_factor(y, dt, dW)
            f = integrand(y)
            w = math.exp(-rho * k * dt) * dt
            acc = acc + (0.5 * w if k == nsteps else w) * f
        return {"integral": acc, "terminal": f}

    out = run_blocks(block, mc.paths, mc.workers)
    est = estimate(out["integral"])
    tail = math.exp(-rho * horizon) * abs(float(np.mean(out["terminal"]))) / rho
    if tail > mc.tail_tol:
        raise HorizonError(
            f"tail bound {tail:.3e} exceeds tolerance {mc.tail_tol:.1e}; increase the horizon")
    return est, tail


def _ou_linear_second_moment_integral(x0, lam, eta, rho, horizon=None):
    """``int_0^T e^{-rho t} E[X_t^2] dt`` for a centered OU started at x0."""
    stat = eta**2 / (2.0 * lam)
    a = x0**2 - stat
    if horizon is None:
        return a / (rho + 2 * lam) + stat / rho
    return (a * (1 - math.exp(-(rho + 2 * lam) * horizon)) / (rho + 2 * lam)
            + stat * (1 - math.exp(-rho * horizon)) / rho)


def frictionless_value(model: MarketModel, y, estimator=CLOSED_FORM,
                       horizon: float | None = None) -> Estimate:
    """Frictionless value ``V0(y) = E int e^{-rho t} mu' Sigma^{-1} mu / (2 gamma) dt``.

    ``estimator`` is ``"closed_form_ou_linear"`` (OU model with linear
    signal; ``horizon`` optionally truncates the integral) or a
    :class:`MonteCarlo` instance.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(estimator, MonteCarlo):
        def integrand(yy):
            return 0.5 * np.sum(model.price_drift(yy) * model.merton(yy), axis=-1)
        est, _ = discounted_factor_integral(model, y, integrand, estimator)
        return est
    if estimator != CLOSED_FORM:
        raise ValueError(f"unknown estimator {estimator!r}")
    if not isinstance(model, OUModel) or not model.signal.is_linear:
        raise ValueError("closed form requires an OU model with linear signal")
    b = model.signal.slope
    m2 = _ou_linear_second_moment_integral(float(y[1]), model.lam, model.eta, model.rho, horizon)
    return Estimate(b * b * m2 / (2.0 * model.gamma * model.sigma**2), 0.0)
