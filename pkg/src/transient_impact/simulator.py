"""Monte Carlo simulation of the controlled state ``(Y, D, H)``.

All policies passed to :func:`simulate` run on the same noise (common
random numbers). Positions are updated with the rate frozen over each
step, the distortion by the exact exponential update, and the factor by
``model.step_factor`` (exact for the OU signal). Running integrands are
evaluated at the left endpoint of each step and weighted by the exact
discount mass ``int_{t_k}^{t_k+dt} e^{-rho s} ds``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import HorizonError, NonFiniteStateError, StiffnessError
from .model import FrictionSpec, MarketModel, OUModel
from .policy import PolicySpec
from .streams import BLOCK_SIZE, Estimate, block_generator, estimate, run_blocks

TAIL_MAX = 1e-4
TRANSVERSALITY_RTOL = 1e-3


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float | None = None
    paths: int = 10_000
    seed: int = 0
    stiffness_guard: bool = True
    allow_short_horizon: bool = False
    workers: int | None = None
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.paths < 1:
            raise ValueError("paths must be positive")

    def resolved_horizon(self, model: MarketModel) -> float:
        if self.horizon is not None:
            return float(self.horizon)
        return default_sim_horizon(model)

    def describe(self) -> dict:
        return {"dt": self.dt, "horizon": self.horizon, "paths": self.paths, "seed": self.seed,
                "stiffness_guard": self.stiffness_guard,
                "allow_short_horizon": self.allow_short_horizon, "block_size": self.block_size}


def default_sim_horizon(model: MarketModel) -> float:
    T = -math.log(TAIL_MAX) / model.rho
    if isinstance(model, OUModel):
        T = max(T, 10.0 / model.lam)
    return T


@dataclass(frozen=True)
class InitialState:
    """Physical distortion ``D0``, position ``h0`` (``None``: Merton) and factor ``y0``."""

    D0: np.ndarray
    h0: np.ndarray | None
    y0: np.ndarray

    def resolve(self, model: MarketModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        y0 = np.asarray(self.y0, dtype=float)
        D0 = np.atleast_1d(np.asarray(self.D0, dtype=float))
        h0 = model.merton(y0) if self.h0 is None else np.atleast_1d(np.asarray(self.h0, dtype=float))
        return D0, h0, y0


@dataclass(frozen=True)
class PathState:
    t: float
    Y: np.ndarray
    D: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        for name in ("Y", "D", "H"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteStateError(f"non-finite {name} at t={self.t}")


def _distortion_coeffs(R: float, dt: float) -> tuple[float, float]:
    decay = math.exp(-R * dt)
    # (1 - e^{-R dt}) / R, stable for tiny R
    gain = -math.expm1(-R * dt) / R if R * dt > 1e-12 else dt
    return decay, gain


def step(state: PathState, policy: PolicySpec, model: MarketModel, frictions: FrictionSpec,
         dt: float, noise) -> PathState:
    """Advance one path by ``dt``; ``noise`` is the Brownian increment ``~ N(0, dt I)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k_d, k_h = policy.gains(frictions, state.Y)
    rate = -(k_d @ state.D + k_h @ (state.H - model.merton(state.Y)))
    decay, gain = _distortion_coeffs(frictions.R, dt)
    D = decay * state.D + gain * (frictions.C @ rate)
    H = state.H + rate * dt
    Y = model.step_factor(state.Y[None, :], dt, np.asarray(noise, dtype=float)[None, :])[0]
    return PathState(state.t + dt, Y, D, H)


@dataclass
class PolicyRun:
    """Per-path outputs for one policy."""

    policy: PolicySpec
    objective: np.ndarray
    decomposition: np.ndarray
    terminal: np.ndarray
    distortion_proxy: np.ndarray
    deviation_proxy: np.ndarray
    trace: dict | None = field(default=None, repr=False)

    @property
    def J(self) -> Estimate:
        return estimate(self.objective)


@dataclass
class SimResult:
    runs: list[PolicyRun]
    frictionless: np.ndarray
    horizon: float
    nsteps: int
    dt: float
    eps: float

    def direct_gap(self, i: int = 0) -> np.ndarray:
        """Per-path ``J - V0`` against the frictionless reference on the same noise."""
        return self.runs[i].objective - self.frictionless


def _check_config(model, frictions, cfg, horizon):
    if cfg.stiffness_guard and cfg.dt * frictions.R > 0.25 + 1e-12:
        raise StiffnessError(
            f"dt * R_eff = {cfg.dt * frictions.R:.3g} exceeds 1/4; reduce dt below eps/(4R)")
    # the default horizon sits exactly on the bound, hence the rounding slack
    if not cfg.allow_short_horizon and math.exp(-model.rho * horizon) > TAIL_MAX * (1 + 1e-12):
        raise HorizonError(f"exp(-rho T) = {math.exp(-model.rho * horizon):.3g} exceeds {TAIL_MAX}")


def simulate(policies, model: MarketModel, frictions: FrictionSpec, init: InitialState,
             cfg: SimConfig, trace: int = 0) -> SimResult:
    """Simulate every policy in ``policies`` on common noise.

    Returns per-path discounted objectives, the exact decomposition
    of ``J - V0``, a frictionless reference integral on the same factor
    paths, terminal transversality diagnostics and state-convergence
    proxies. ``trace > 0`` keeps full trajectories of the first ``trace``
    paths.
    """
    if isinstance(policies, PolicySpec):
        policies = [policies]
    policies = list(policies)
    horizon = cfg.resolved_horizon(model)
    nsteps = max(1, int(math.ceil(horizon / cfg.dt - 1e-9)))
    dt = horizon / nsteps
    _check_config(model, frictions, cfg, horizon)
    D0, h0, y0 = init.resolve(model)
    n = frictions.n
    if D0.size != n or h0.size != n:
        raise ValueError("initial D0 and h0 must have length n")

    eps, rho, gamma = frictions.eps, model.rho, model.gamma
    C_eff, L_eff, R_eff = frictions.C, frictions.Lambda, frictions.R
    C_inv = np.linalg.inv(C_eff)
    decay, dgain = _distortion_coeffs(R_eff, dt)
    sqdt = math.sqrt(dt)
    wfac = -math.expm1(-rho * dt) / rho
    const_sigma = model.constant_covariance
    gsig_const = gamma * model.covariance(y0) if const_sigma else None
    fixed = [not p.state_dependent for p in policies]
    fixed_gains = [p.gains(frictions, y0) if f else None for p, f in zip(policies, fixed)]
    dec0 = float(-h0 @ D0 + 0.5 * D0 @ C_inv @ D0)
    dd_mat = 0.5 * (2.0 * R_eff + rho) * C_inv
    trace = int(trace)

    def block(b, start, stop):
        # overflow is reported through NonFiniteStateError below; numpy's
        # error state is per thread, so it is set inside the kernel
        with np.errstate(over="ignore", invalid="ignore"):
            return kernel(b, start, stop)

    def kernel(b, start, stop):
        rng = block_generator(cfg.seed, b)
        P = stop - start
        ntr = max(0, min(trace, stop) - start)
        y = np.broadcast_to(y0, (P, model.dim)).copy()
        npol = len(policies)
        D = [np.broadcast_to(D0, (P, n)).copy() for _ in range(npol)]
        H = [np.broadcast_to(h0, (P, n)).copy() for _ in range(npol)]
        obj = [np.zeros(P) for _ in range(npol)]
        dec_hd = [np.zeros(P) for _ in range(npol)]
        dec_neg = [np.zeros(P) for _ in range(npol)]
        dprox = [np.zeros(P) for _ in range(npol)]
        hprox = [np.zeros(P) for _ in range(npol)]
        fric = np.zeros(P)
        tr = None
        if ntr:
            tr = [{"Y": np.empty((ntr, nsteps + 1, model.dim)), "D": np.empty((ntr, nsteps + 1, n)),
                   "H": np.empty((ntr, nsteps + 1, n)), "Hdot": np.full((ntr, nsteps + 1, n), np.nan)}
                  for _ in range(npol)]
        for k in range(nsteps):
            w = math.exp(-rho * k * dt) * wfac
            mu = model.price_drift(y)
            M = model.merton(y)
            gsig = gsig_const if const_sigma else gamma * model.covariance(y)
            fric += w * 0.5 * np.sum(mu * M, axis=-1)
            for i, pol in enumerate(policies):
                Di, Hi = D[i], H[i]
                dev = Hi - M
                if fixed[i]:
                    k_d, k_h = fixed_gains[i]
                    rate = -(Di @ k_d.T + dev @ k_h.T)
                else:
                    rate = np.empty((P, n))
                    for p in range(P):
                        k_d, k_h = pol.gains(frictions, y[p])
                        rate[p] = -(k_d @ Di[p] + k_h @ dev[p])
                crate = rate @ C_eff.T
                if const_sigma:
                    h_sig = Hi @ gsig
                    d_sig = dev @ gsig
                else:
                    h_sig = np.einsum("pi,pij->pj", Hi, gsig)
                    d_sig = np.einsum("pi,pij->pj", dev, gsig)
                cost = np.sum((rate @ L_eff) * rate, axis=-1)
                obj[i] += w * (np.sum(Hi * (mu - R_eff * Di + crate), axis=-1)
                               - 0.5 * np.sum(h_sig * Hi, axis=-1) - 0.5 * cost)
                hd = np.sum(Hi * Di, axis=-1)
                dsq = np.sum(Di * Di, axis=-1)
                devsq = np.sum(dev * dev, axis=-1)
                dec_hd[i] += w * hd
                dec_neg[i] += w * (np.sum((Di @ dd_mat) * Di, axis=-1)
                                   + 0.5 * np.sum(d_sig * dev, axis=-1) + 0.5 * cost)
                dprox[i] += w * dsq
                hprox[i] += w * devsq
                if tr is not None:
                    tr[i]["Y"][:, k] = y[:ntr]
                    tr[i]["D"][:, k] = Di[:ntr]
                    tr[i]["H"][:, k] = Hi[:ntr]
                    tr[i]["Hdot"][:, k] = rate[:ntr]
                Hi += rate * dt
                Di *= decay
                Di += dgain * crate
            dW = rng.standard_normal((P, model.q)) * sqdt
            y = model.step_factor(y, dt, dW)
            if (k + 1) % 512 == 0 or k + 1 == nsteps:
                bad = ~np.isfinite(y).all(axis=1)
                for i in range(npol):
                    bad |= ~np.isfinite(D[i]).all(axis=1) | ~np.isfinite(H[i]).all(axis=1)
                if bad.any():
                    p = int(np.argmax(bad)) + start
                    raise NonFiniteStateError(f"path {p} became non-finite at step {k + 1}")
        disc_T = math.exp(-rho * horizon)
        out = {"frictionless": fric}
        for i in range(npol):
            out[f"obj{i}"] = obj[i]
            out[f"dec{i}"] = dec0 + rho * dec_hd[i] - dec_neg[i]
            out[f"term{i}"] = disc_T * (np.sum(H[i] ** 2, axis=-1) + np.sum(D[i] ** 2, axis=-1))
            out[f"dprox{i}"] = dprox[i] / eps**2
            out[f"hprox{i}"] = hprox[i]
            if ntr:
                tr[i]["Y"][:, nsteps] = y[:ntr]
                tr[i]["D"][:, nsteps] = D[i][:ntr]
                tr[i]["H"][:, nsteps] = H[i][:ntr]
                for key, arr in tr[i].items():
                    out[f"trace{i}_{key}"] = arr
        return out

    raw = _run_traced(block, cfg, trace, len(policies))
    runs = []
    for i, pol in enumerate(policies):
        tr = None
        if trace:
            tr = {key: raw[f"trace{i}_{key}"] for key in ("Y", "D", "H", "Hdot")}
            tr["t"] = np.arange(nsteps + 1) * dt
        runs.append(PolicyRun(pol, raw[f"obj{i}"], raw[f"dec{i}"], raw[f"term{i}"],
                              raw[f"dprox{i}"], raw[f"hprox{i}"], tr))
    return SimResult(runs, raw["frictionless"], horizon, nsteps, dt, eps)


def _run_traced(block, cfg: SimConfig, trace: int, npol: int) -> dict:
    """Run blocks; trace arrays only exist for blocks holding the first paths."""
    if not trace:
        return run_blocks(block, cfg.paths, cfg.workers, cfg.block_size)
    trace_keys = [f"trace{i}_{key}" for i in range(npol) for key in ("Y", "D", "H", "Hdot")]
    traced = {}

    def wrapped(b, start, stop):
        out = block(b, start, stop)
        part = {k: out.pop(k) for k in trace_keys if k in out}
        if part:
            traced[b] = part
        return out

    res = run_blocks(wrapped, cfg.paths, cfg.workers, cfg.block_size)
    for key in trace_keys:
        res[key] = np.concatenate([traced[b][key] for b in sorted(traced)], axis=0)
    return res


def evaluate_objective(policy: PolicySpec, model: MarketModel, frictions: FrictionSpec,
                       init: InitialState, cfg: SimConfig) -> Estimate:
    """Monte Carlo estimate of the discounted frictional objective ``J``."""
    return simulate([policy], model, frictions, init, cfg).runs[0].J


def evaluate_via_decomposition(policy: PolicySpec, model: MarketModel, frictions: FrictionSpec,
                               init: InitialState, cfg: SimConfig) -> Estimate:
    """Estimate ``J - V0`` through the exact decomposition:

    ``-h.D0 + D0.C^{-1}D0/2 + rho E int e^{-rho t} H.D
    - E int e^{-rho t} D.((2R + rho) C^{-1}/2) D
    - E int e^{-rho t}/2 [(H-M).gamma Sigma.(H-M) + Hdot.Lambda.Hdot]``
    with effective parameters, on the same noise as :func:`evaluate_objective`.
    """
    return estimate(simulate([policy], model, frictions, init, cfg).runs[0].decomposition)


def transversality_flag(run: PolicyRun) -> bool:
    """True if the mean terminal diagnostic exceeds ``1e-3 |J|``."""
    return bool(np.mean(run.terminal) > TRANSVERSALITY_RTOL * abs(run.J.value))
