"""Command-line entry point ``til``.

Exit codes: 0 on success, 2 for usage or configuration errors, 1 when a
numerical invariant fails (the invariant is named on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__
from .config import RunConfig
from .exceptions import ConfigError, NumericalError
from .expansion import assemble_vhat, corrector_u, expansion_target
from .harness import (
    json_default,
    reproduce_figures,
    run_expansion_sweep,
    write_csv,
    write_sweep,
    reference_corrector,
    reference_frictionless,
)
from .model import MonteCarlo
from .policy import policy_vector_field
from .riccati import build_problem, certify, solve_maximal
from .simulator import simulate, transversality_flag

SUBCOMMANDS = ("riccati", "field", "expand", "simulate", "sweep", "figures")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="til", description="Small-friction asymptotics with transient price impact.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config or a run manifest (JSON)")
    common.add_argument("--out", default=None, help="output directory (default: ./til-<command>)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--paths", type=int, default=None)
    common.add_argument("--dt", type=float, default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--trace", type=int, default=0, help="dump trajectories of the first k paths")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "sweep":
            p.add_argument("--plan", help="alias of --config for sweep plans")
    return parser


def git_describe() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _dump(path: str, obj) -> str:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=json_default)
        fh.write("\n")
    return path


def _load(args) -> RunConfig:
    path = getattr(args, "plan", None) or args.config
    if path is None:
        raise ConfigError("--config is required", field="--config")
    return RunConfig.from_file(path)


# --------------------------------------------------------------------- commands

def cmd_riccati(cfg: RunConfig, args, out: str) -> tuple[dict, list]:
    model = cfg.model()
    fr = cfg.frictions()
    y = cfg.factor_state(model)
    problem = build_problem(model, fr, y)
    sol = solve_maximal(problem)
    cert = certify(sol, problem, model, fr)
    lam_inv = np.linalg.inv(fr.Lambda0)
    result = dict(sol.to_dict())
    result["Lambda_inv_Qd"] = lam_inv @ sol.Qd
    result["Lambda_inv_Qh"] = lam_inv @ sol.Qh
    result["certificate"] = cert.to_dict()
    files = []
    if args.format == "csv":
        path = os.path.join(out, "riccati.csv")
        mats = {"A": sol.A, "Qd": sol.Qd, "Qh": sol.Qh}
        rows = [[k, i, j, float(v)] for k, mat in mats.items() for (i, j), v in np.ndenumerate(mat)]
        write_csv(path, ["name", "row", "col", "value"], rows)
        files.append(path)
    else:
        files.append(_dump(os.path.join(out, "riccati.json"), result))
    return result, files


def cmd_field(cfg: RunConfig, args, out: str) -> tuple[dict, list]:
    model = cfg.model()
    fr = cfg.frictions()
    y = cfg.factor_state(model)
    p = cfg.single_policy().build(model, fr, y)
    dist = cfg.get("field", "distortion", None)
    dist = None if dist is None else cfg.vector("field", "distortion", fr.n)
    table = policy_vector_field(p, model, fr, cfg.grid(), y, dist)
    if args.format == "csv":
        path = os.path.join(out, "field.csv")
        write_csv(path, list(table.columns), table.data.tolist())
    else:
        path = _dump(os.path.join(out, "field.json"),
                     {"columns": list(table.columns), "data": table.data})
    return {"rows": int(table.data.shape[0]), "columns": list(table.columns)}, [path]


def cmd_expand(cfg: RunConfig, args, out: str) -> tuple[dict, list]:
    model = cfg.model()
    fr = cfg.frictions()
    y = cfg.factor_state(model)
    base = fr.with_eps(1.0)
    sol = solve_maximal(build_problem(model, base, y))
    estimator = cfg.get("expand", "estimator", "auto")
    mc = MonteCarlo(paths=cfg.number("expand", "paths", 10_000, positive=True, integer=True),
                    dt=cfg.number("expand", "dt", 0.01, positive=True),
                    seed=cfg.number("expand", "seed", 0, integer=True))
    if estimator == "monte_carlo":
        from .model import frictionless_value
        u = corrector_u(model, base, y, mc, riccati=sol)
        v0 = frictionless_value(model, y, mc)
    elif estimator in ("auto", "closed_form"):
        u = reference_corrector(model, base, y, mc)
        v0 = reference_frictionless(model, y, mc)
    else:
        raise cfg.error("estimator must be auto, closed_form or monte_carlo", "expand", "estimator")
    d = cfg.scaled_distortion(fr)
    init = cfg.initial_state(model, fr)
    _, h0, _ = init.resolve(model)
    terms = assemble_vhat(model, fr, sol, (u.value, u.std_error), d, h0, y, v0.value)
    result = terms.to_dict()
    result["v0_std_error"] = v0.std_error
    result["target"] = expansion_target(sol, base.C0, u.value, d, h0, model.merton(y))
    files = [_dump(os.path.join(out, "expand.json"), result)]
    return result, files


def cmd_simulate(cfg: RunConfig, args, out: str) -> tuple[dict, list]:
    model = cfg.model()
    fr = cfg.frictions()
    init = cfg.initial_state(model, fr)
    choices = cfg.policies("simulation", fr)
    y0 = np.asarray(init.y0, dtype=float)
    policies = [c.build(model, fr, y0) for c in choices]
    sim = cfg.sim_config(fr)
    trace = args.trace or cfg.number("simulation", "trace", 0, integer=True)
    res = simulate(policies, model, fr, init, sim, trace=trace)
    labels = [c.label for c in choices]
    files = []
    path = os.path.join(out, "paths.csv")
    head = ["path", "frictionless"]
    cols = [np.arange(sim.paths), res.frictionless]
    for lab, r in zip(labels, res.runs):
        head += [f"J[{lab}]", f"decomposition[{lab}]", f"terminal[{lab}]"]
        cols += [r.objective, r.decomposition, r.terminal]
    write_csv(path, head, [[int(row[0])] + [float(v) for v in row[1:]] for row in zip(*cols)])
    files.append(path)
    if trace:
        path = os.path.join(out, "trace.csv")
        rows = []
        for lab, r in zip(labels, res.runs):
            tr = r.trace
            for p in range(tr["D"].shape[0]):
                for k, t in enumerate(tr["t"]):
                    rows.append([lab, p, float(t)] + [float(v) for v in tr["Y"][p, k]]
                                + [float(v) for v in tr["D"][p, k]] + [float(v) for v in tr["H"][p, k]]
                                + [float(v) for v in tr["Hdot"][p, k]])
        n = fr.n
        head = (["policy", "path", "t"] + [f"Y{i}" for i in range(model.dim)] + [f"D{i}" for i in range(n)]
                + [f"H{i}" for i in range(n)] + [f"Hdot{i}" for i in range(n)])
        write_csv(path, head, rows)
        files.append(path)
    summary = {"horizon": res.horizon, "nsteps": res.nsteps, "dt": res.dt, "eps": res.eps,
               "transversality_note": "finite-horizon diagnostic e^{-rho T}(|H_T|^2+|D_T|^2); "
                                      "the admissibility condition itself is asymptotic",
               "policies": {}}
    for lab, r in zip(labels, res.runs):
        J = r.J
        gap = np.mean(r.objective - res.frictionless)
        summary["policies"][lab] = {
            "J": J.value, "J_se": J.std_error,
            "decomposition": float(np.mean(r.decomposition)),
            "direct_minus_frictionless": float(gap),
            "terminal_mean": float(np.mean(r.terminal)),
            "transversality_flag": transversality_flag(r),
        }
    files.append(_dump(os.path.join(out, "simulate.json"), summary))
    return summary, files


def cmd_sweep(cfg: RunConfig, args, out: str) -> tuple[dict, list]:
    model = cfg.model()
    base = cfg.frictions(1.0)
    plan = cfg.sweep_plan()
    report = run_expansion_sweep(plan, model, base)
    return report.to_dict(), write_sweep(report, out)


def cmd_figures(cfg, args, out: str) -> tuple[dict, list]:
    res = reproduce_figures(out)
    return {"checks": res["checks"].to_dict()}, res["files"]


COMMANDS = {"riccati": cmd_riccati, "field": cmd_field, "expand": cmd_expand,
            "simulate": cmd_simulate, "sweep": cmd_sweep, "figures": cmd_figures}


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    section = {"simulate": "simulation", "sweep": "sweep", "expand": "expand"}.get(args.command)
    if section is None:
        return cfg
    values = {"seed": args.seed, "paths": args.paths}
    if args.dt is not None:
        if section == "sweep":
            raise ConfigError("sweep takes dt through sweep.dt_over_eps, not --dt", field="--dt")
        values["dt"] = args.dt
    return cfg.with_overrides(section, **values)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"til: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        cfg = None
        if args.command != "figures" or args.config:
            cfg = _apply_overrides(_load(args), args)
        out = args.out or os.path.join(os.getcwd(), f"til-{args.command}")
        os.makedirs(out, exist_ok=True)
        result, files = COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"til: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"til: numerical failure [{exc.invariant}]: {exc}", file=sys.stderr)
        return 1
    manifest_path = os.path.join(out, "manifest.json")
    manifest = {
        "command": args.command,
        "config": cfg.data if cfg is not None else None,
        "seed": _seed_of(cfg, args.command),
        "version": __version__,
        "git_describe": git_describe(),
        "wall_time_s": time.perf_counter() - start,
        "artifacts": [os.path.basename(f) for f in files] + ["manifest.json"],
    }
    _dump(manifest_path, manifest)
    if args.command == "riccati":
        print(json.dumps(result, sort_keys=True, default=json_default))
    else:
        print(json.dumps({"manifest": manifest_path, "artifacts": manifest["artifacts"]}))
    return 0


def _seed_of(cfg, command):
    if cfg is None:
        return None
    section = {"simulate": "simulation", "sweep": "sweep", "expand": "expand"}.get(command)
    return None if section is None else cfg.get(section, "seed", 0)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
