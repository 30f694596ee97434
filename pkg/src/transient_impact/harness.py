"""Epsilon sweeps and figure reproduction.

The sweep measures ``gap_eps = (V0 - J_eps) / eps`` along a decreasing
grid of ``eps`` and compares it with the first-order prediction
``u + h.d - d.C^{-1}d/2 + xi.A.xi/2``, which is computed from the Riccati
solution and the corrector alone (no simulator input). The rescaled
distortion ``d`` is held fixed, so the physical ``D0 = eps d`` shrinks.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import policy as pol
from .expansion import corrector_u, expansion_target
from .model import (
    CLOSED_FORM,
    ConstantModel,
    FrictionSpec,
    MarketModel,
    MonteCarlo,
    OUModel,
    frictionless_value,
)
from .riccati import build_problem, certify, solve_maximal
from .simulator import InitialState, SimConfig, simulate, transversality_flag
from .streams import BLOCK_SIZE, Estimate, estimate

MODES = ("expansion", "ranking", "field")
#: share of the leading term accepted as the o(eps) remainder at the smallest eps
LEADING_SHARE = 0.1


@dataclass(frozen=True)
class PolicyChoice:
    kind: str
    alpha: float | list | None = None

    def build(self, model: MarketModel, frictions: FrictionSpec, y0) -> pol.PolicySpec:
        if self.kind == "asymptotic":
            return pol.asymptotic(model, frictions, y0)
        if self.kind == "temporary_only":
            return pol.temporary_only(model, frictions, y0)
        if self.kind == "zero":
            return pol.zero()
        if self.kind == "constant_coeff":
            return pol.constant_coeff(self.alpha, frictions)
        raise ValueError(f"unknown policy kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "constant_coeff":
            return f"constant_coeff[{self.alpha}]"
        return self.kind


@dataclass(frozen=True)
class SweepPlan:
    """Grid and Monte Carlo settings for an epsilon sweep.

    ``d`` is the rescaled distortion, ``h0=None`` starts at the Merton
    portfolio. The time step is ``dt_over_eps * eps`` at every grid point.
    """

    eps_grid: tuple
    y0: tuple
    d: tuple | None = None
    h0: tuple | None = None
    policies: tuple = (PolicyChoice("asymptotic"), PolicyChoice("temporary_only"))
    dt_over_eps: float = 0.01
    paths: int = 50_000
    seed: int = 0
    horizon: float | None = None
    mode: str = "expansion"
    block_size: int = BLOCK_SIZE
    workers: int | None = None

    def __post_init__(self):
        grid = [float(e) for e in self.eps_grid]
        if not grid or any(e <= 0 for e in grid):
            raise ValueError("eps_grid must hold positive values")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ValueError("eps_grid must be strictly decreasing")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.dt_over_eps > 0:
            raise ValueError("dt_over_eps must be positive")
        if not any(p.kind == "asymptotic" for p in self.policies):
            raise ValueError("the plan needs the asymptotic policy")

    def describe(self) -> dict:
        out = asdict(self)
        out["eps_grid"] = [float(e) for e in self.eps_grid]
        out.pop("workers")
        return out


@dataclass
class SweepRow:
    eps: float
    dt: float
    horizon: float
    J: dict
    J_se: dict
    gap: float
    gap_se: float
    gap_v0: float
    gap_v0_se: float
    target: float
    deviation: float
    deviation_v0: float
    ranking: dict
    ranking_se: dict
    distortion_proxy: dict
    deviation_proxy: dict
    terminal: dict
    transversality_flag: dict
    concavity_ok: bool


@dataclass
class SweepReport:
    plan: dict
    model: dict
    frictions: dict
    v0: float
    v0_se: float
    u: float
    u_se: float
    target: float
    rows: list = field(default_factory=list)
    convergence_order: float | None = None
    deviation_decreasing: bool | None = None
    within_band: bool | None = None
    band: float | None = None
    ranking_nonnegative: bool | None = None
    ranking_trend_nondecreasing: bool | None = None
    corrector_convention: str = "a = Tr(c_M A2) / 2"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rows"] = [asdict(r) for r in self.rows]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=json_default)

    def table(self) -> tuple[list[str], list[list]]:
        """Flat per-eps table for CSV output."""
        labels = list(self.rows[0].J) if self.rows else []
        head = ["eps", "dt", "gap", "gap_se", "gap_v0", "gap_v0_se", "target", "deviation", "deviation_v0"]
        head += [f"J[{k}]" for k in labels] + [f"J_se[{k}]" for k in labels]
        rk = list(self.rows[0].ranking) if self.rows else []
        head += [f"ranking[{k}]" for k in rk] + [f"ranking_se[{k}]" for k in rk]
        body = []
        for r in self.rows:
            body.append([r.eps, r.dt, r.gap, r.gap_se, r.gap_v0, r.gap_v0_se, r.target, r.deviation,
                         r.deviation_v0]
                        + [r.J[k] for k in labels] + [r.J_se[k] for k in labels]
                        + [r.ranking[k] for k in rk] + [r.ranking_se[k] for k in rk])
        return head, body


def json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def reference_frictionless(model: MarketModel, y0, mc: MonteCarlo):
    if isinstance(model, OUModel) and model.signal.is_linear:
        return frictionless_value(model, y0)
    if isinstance(model, ConstantModel):
        # constant coefficients: the integrand mu.M / 2 never changes
        return Estimate(float(model.price_drift(y0) @ model.merton(y0)) / (2.0 * model.rho), 0.0)
    return frictionless_value(model, y0, estimator=mc)


def reference_corrector(model: MarketModel, frictions: FrictionSpec, y0, mc: MonteCarlo):
    if isinstance(model, OUModel) and model.signal.is_linear:
        return corrector_u(model, frictions, y0, CLOSED_FORM)
    if isinstance(model, ConstantModel):
        return Estimate(0.0, 0.0)  # the Merton portfolio does not move
    return corrector_u(model, frictions, y0, mc)


def _order(eps, dev) -> float | None:
    eps, dev = np.asarray(eps), np.abs(np.asarray(dev))
    ok = dev > 0
    if ok.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(eps[ok]), np.log(dev[ok]), 1)
    return float(slope)


def run_expansion_sweep(plan: SweepPlan, model: MarketModel, frictions_base: FrictionSpec) -> SweepReport:
    """Simulate every policy of ``plan`` at every ``eps`` on common noise.

    For each ``eps`` the report holds ``J`` per policy and two versions of
    the gap of the asymptotic policy. ``gap`` pairs each path's objective
    with the frictionless integral along the same factor path, which
    removes the factor noise shared by both; ``gap_v0`` uses the exact (or
    reference) frictionless value and carries the full sampling error of
    ``J``. Rows also give the first-order target, the deviations, and the
    paired difference of the asymptotic policy to every other policy,
    divided by ``eps``.
    """
    y0 = np.asarray(plan.y0, dtype=float)
    n = frictions_base.n
    d = np.zeros(n) if plan.d is None else np.asarray(plan.d, dtype=float)
    M = model.merton(y0)
    h0 = M if plan.h0 is None else np.asarray(plan.h0, dtype=float)
    mc = MonteCarlo(paths=plan.paths, seed=plan.seed, workers=plan.workers)

    base = frictions_base.with_eps(1.0)
    sol = solve_maximal(build_problem(model, base, y0))
    u = reference_corrector(model, base, y0, mc)
    v0 = reference_frictionless(model, y0, mc)
    target = expansion_target(sol, base.C0, u.value, d, h0, M)

    report = SweepReport(plan.describe(), model.describe(), base.describe(), v0.value, v0.std_error,
                         u.value, u.std_error, float(target))
    labels = [p.label for p in plan.policies]
    ia = labels.index("asymptotic")
    for eps in plan.eps_grid:
        eps = float(eps)
        fr = frictions_base.with_eps(eps)
        policies = [p.build(model, fr, y0) for p in plan.policies]
        cfg = SimConfig(dt=plan.dt_over_eps * eps, horizon=plan.horizon, paths=plan.paths,
                        seed=plan.seed, workers=plan.workers, block_size=plan.block_size)
        res = simulate(policies, model, fr, InitialState(eps * d, h0, y0), cfg)
        runs = res.runs
        J = {lab: r.J for lab, r in zip(labels, runs)}
        Ja = runs[ia].objective
        gap_v0 = (v0.value - J["asymptotic"].value) / eps
        gap_v0_se = math.hypot(J["asymptotic"].std_error, v0.std_error) / eps
        paired = estimate((res.frictionless - Ja) / eps)
        ranking, ranking_se = {}, {}
        for lab, r in zip(labels, runs):
            if lab == "asymptotic":
                continue
            diff = estimate((Ja - r.objective) / eps)
            ranking[lab], ranking_se[lab] = diff.value, diff.std_error
        cert = certify(sol, build_problem(model, fr, y0), model, fr)
        report.rows.append(SweepRow(
            eps=eps, dt=res.dt, horizon=res.horizon,
            J={k: v.value for k, v in J.items()}, J_se={k: v.std_error for k, v in J.items()},
            gap=paired.value, gap_se=paired.std_error, gap_v0=gap_v0, gap_v0_se=gap_v0_se,
            target=float(target), deviation=abs(paired.value - target),
            deviation_v0=abs(gap_v0 - target),
            ranking=ranking, ranking_se=ranking_se,
            distortion_proxy={lab: float(np.mean(r.distortion_proxy)) for lab, r in zip(labels, runs)},
            deviation_proxy={lab: float(np.mean(r.deviation_proxy)) for lab, r in zip(labels, runs)},
            terminal={lab: float(np.mean(r.terminal)) for lab, r in zip(labels, runs)},
            transversality_flag={lab: transversality_flag(r) for lab, r in zip(labels, runs)},
            concavity_ok=cert.concavity_ok,
        ))

    devs = [r.deviation for r in report.rows]
    last = report.rows[-1]
    report.convergence_order = _order([r.eps for r in report.rows], devs)
    report.deviation_decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    report.band = max(3.0 * last.gap_se, LEADING_SHARE * abs(target))
    report.within_band = last.deviation <= report.band
    if "temporary_only" in labels:
        diffs = [r.ranking["temporary_only"] for r in report.rows]
        ses = [r.ranking_se["temporary_only"] for r in report.rows]
        report.ranking_nonnegative = all(x >= -3.0 * s for x, s in zip(diffs, ses))
        report.ranking_trend_nondecreasing = all(b >= a for a, b in zip(diffs, diffs[1:]))
    return report


def write_sweep(report: SweepReport, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    jpath = os.path.join(out_dir, "sweep.json")
    with open(jpath, "w") as fh:
        fh.write(report.to_json())
    cpath = os.path.join(out_dir, "sweep.csv")
    head, body = report.table()
    write_csv(cpath, head, body)
    return [jpath, cpath]


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(x), ".17g") if isinstance(x, (float, np.floating)) else x
                        for x in row])


# --------------------------------------------------------------------- figures

FIG2_SIGMA = np.diag([1.0, 2.0])
#: correlation used for the positively correlated variant (no value is given for the source picture)
FIG3_CORRELATION = 0.8


def fig2_frictions(Sigma=FIG2_SIGMA) -> FrictionSpec:
    return FrictionSpec(Sigma / 2.0, 2.0 * Sigma, 0.5, 1.0)


def fig3_sigma(corr: float = FIG3_CORRELATION) -> np.ndarray:
    s1, s2 = 1.0, math.sqrt(2.0)
    return np.array([[s1 * s1, corr * s1 * s2], [corr * s1 * s2, s2 * s2]])


@dataclass
class FigureChecks:
    asset2_rate_change_max: float
    asset1_rate_at_merton: float
    corr_asset2_crossing_shift: float
    corr_asset2_rest_shift: float
    diag_decoupled: bool
    asset1_reduced: bool
    corr_asset2_increased: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _two_asset(Sigma):
    model = ConstantModel(np.zeros(2), Sigma, gamma=1.0, rho=1.0)
    fr = fig2_frictions(Sigma)
    return model, fr, pol.asymptotic(model, fr)


def figure_checks(distortion: float = 0.5) -> FigureChecks:
    """The three sign patterns of the two-asset pictures."""
    y = np.zeros(0)
    grid = pol.Grid.linspace((-1.0, 1.0), (-1.0, 1.0), 21, 21)
    D1 = np.array([distortion, 0.0])

    model, fr, p = _two_asset(FIG2_SIGMA)
    f0 = pol.policy_vector_field(p, model, fr, grid, y, np.zeros(2))
    f1 = pol.policy_vector_field(p, model, fr, grid, y, D1)
    change2 = float(np.max(np.abs(f1.column("rate2") - f0.column("rate2"))))
    rate1 = float(pol.trading_rate(p, model, fr, D1, model.merton(y), y)[0])

    cmodel, cfr, cp = _two_asset(fig3_sigma())
    k_d, k_h = cp.gains(cfr, y)
    # zero crossing of rate2 along h2 with h1 held at its Merton value
    crossing_shift = float(-(k_d @ D1)[1] / k_h[1, 1])
    rest_shift = float((pol.rest_point(cp, cmodel, cfr, D1, y) - cmodel.merton(y))[1])
    return FigureChecks(change2, rate1, crossing_shift, rest_shift,
                        change2 <= 1e-12, rate1 < 0.0, crossing_shift > 0.0 and rest_shift > 0.0)


def reproduce_figures(out_dir: str, distortion: float = 0.5, num: int = 21) -> dict:
    """Write the one-asset rate lines and the two-asset vector fields as CSV.

    Returns a dict with the list of written files and the sign checks.
    The risk aversion of the two-asset pictures is not stated; ``gamma = 1``
    is assumed and recorded in the sidecar JSON.
    """
    os.makedirs(out_dir, exist_ok=True)
    files = []
    y = np.zeros(0)

    # one asset, all parameters one, rate against h - M for three distortions
    m1 = ConstantModel(np.zeros(1), np.eye(1), gamma=1.0, rho=1.0)
    f1 = FrictionSpec(1.0, 1.0, 1.0, 1.0)
    p1 = pol.asymptotic(m1, f1)
    devs = np.linspace(-1.0, 1.0, num)
    rows = []
    for D in (-distortion, 0.0, distortion):
        for x in devs:
            rows.append([D, x, float(pol.trading_rate(p1, m1, f1, [D], [x], y)[0])])
    path = os.path.join(out_dir, "fig1_rates.csv")
    write_csv(path, ["distortion", "deviation", "rate"], rows)
    files.append(path)

    grid = pol.Grid.linspace((-1.0, 1.0), (-1.0, 1.0), num, num)
    for tag, Sigma in (("fig2", FIG2_SIGMA), ("fig3", fig3_sigma())):
        model, fr, p = _two_asset(Sigma)
        for panel, D in (("zero", np.zeros(2)), ("positive", np.array([distortion, 0.0]))):
            table = pol.policy_vector_field(p, model, fr, grid, y, D)
            path = os.path.join(out_dir, f"{tag}_{panel}.csv")
            write_csv(path, ["h1", "h2", "rate1", "rate2"], table.data.tolist())
            files.append(path)

    checks = figure_checks(distortion)
    meta = {
        "assumptions": {"gamma": 1.0, "gamma_assumed": True, "mu": [0.0, 0.0],
                        "fig3_correlation": FIG3_CORRELATION, "distortion": distortion},
        "parameters": {"Sigma": FIG2_SIGMA.tolist(), "Lambda": "Sigma/2", "C": "2 Sigma", "R": 0.5,
                       "fig3_Sigma": fig3_sigma().tolist()},
        "checks": checks.to_dict(),
        "files": [os.path.basename(f) for f in files],
    }
    path = os.path.join(out_dir, "figures.json")
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=json_default)
    files.append(path)
    return {"files": files, "checks": checks}
