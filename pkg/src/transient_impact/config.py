"""Declarative run configuration.

One TOML dialect serves every subcommand. Sections:

``[model]``
    ``kind`` is ``ou_linear``, ``ou_custom`` or ``matrix_constant``.
    OU models take ``lam, eta, sigma, gamma, rho``; ``ou_custom`` adds
    ``signal = "tanh"`` with ``amplitude`` and ``scale`` (or ``"linear"``
    with ``slope``). ``matrix_constant`` takes ``mu``, ``Sigma``, ``gamma``
    and ``rho``.
``[frictions]``
    ``Lambda``, ``C`` (scalars, row-major flat lists or nested lists),
    ``R`` and ``eps``.
``[state]``
    ``y`` (factor state), ``d`` (rescaled distortion) or ``D``
    (physical), ``h`` (position or ``"merton"``).
``[simulation]``, ``[policy]``, ``[field]``, ``[sweep]``, ``[expand]``
    Subcommand settings, see :data:`SCHEMA`.

A run manifest (JSON with a ``config`` entry) is accepted in place of a
TOML file, which makes every run reproducible from its manifest.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass

import numpy as np
import tomli

from .exceptions import ConfigError
from .harness import PolicyChoice, SweepPlan
from .model import SIGNALS, ConstantModel, FrictionSpec, MarketModel, OUModel
from .policy import Grid
from .simulator import InitialState, SimConfig

NUM = (int, float)

#: allowed keys per section with their expected Python types
SCHEMA = {
    "model": {"kind": str, "lam": NUM, "eta": NUM, "sigma": NUM, "gamma": NUM, "rho": NUM,
              "signal": str, "slope": NUM, "amplitude": NUM, "scale": NUM, "mu": (list,) + NUM,
              "Sigma": (list,) + NUM},
    "frictions": {"Lambda": (list,) + NUM, "C": (list,) + NUM, "R": NUM, "eps": NUM},
    "state": {"y": (list,) + NUM, "d": (list,) + NUM, "D": (list,) + NUM, "h": (list, str) + NUM},
    "simulation": {"dt": NUM, "horizon": NUM, "paths": int, "seed": int, "policies": list,
                   "alpha": (list,) + NUM, "block_size": int, "trace": int},
    "policy": {"kind": str, "alpha": (list,) + NUM},
    "field": {"x1": list, "x2": list, "distortion": (list,) + NUM},
    "sweep": {"eps_grid": list, "dt_over_eps": NUM, "paths": int, "seed": int, "horizon": NUM,
              "mode": str, "policies": list, "alpha": (list,) + NUM, "block_size": int},
    "expand": {"estimator": str, "paths": int, "dt": NUM, "seed": int},
}
MODEL_KINDS = ("ou_linear", "ou_custom", "matrix_constant")


def _locate(text: str | None, section: str, key: str | None = None) -> int | None:
    """Line number (1-based) of ``key`` inside ``[section]`` in TOML ``text``."""
    if not text:
        return None
    current = None
    sec_line = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", stripped)
        if m:
            current = m.group(1)
            if current == section:
                sec_line = i
                if key is None:
                    return i
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return i
    return sec_line


@dataclass
class RunConfig:
    """Parsed configuration. ``data`` is the plain dict echoed into manifests."""

    data: dict
    text: str | None = None
    path: str | None = None

    # ------------------------------------------------------------ loading
    @classmethod
    def from_text(cls, text: str, path: str | None = None) -> "RunConfig":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            line = getattr(exc, "lineno", None)
            if line is None:
                m = re.search(r"line (\d+)", str(exc))
                line = int(m.group(1)) if m else None
            raise ConfigError(f"TOML syntax error: {exc}", line=line) from None
        cfg = cls(data, text, path)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        text = raw.decode("utf-8")
        if path.endswith(".json"):
            try:
                manifest = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"JSON syntax error: {exc.msg}", line=exc.lineno) from None
            if not isinstance(manifest, dict) or "config" not in manifest:
                raise ConfigError("manifest has no 'config' entry", field="config")
            cfg = cls(manifest["config"], None, path)
            cfg.validate()
            return cfg
        return cls.from_text(text, path)

    # ------------------------------------------------------------ helpers
    def error(self, message: str, section: str, key: str | None = None) -> ConfigError:
        where = section if key is None else f"{section}.{key}"
        return ConfigError(message, field=where, line=_locate(self.text, section, key))

    def section(self, name: str, required: bool = False) -> dict:
        sec = self.data.get(name)
        if sec is None:
            if required:
                raise self.error(f"missing section [{name}]", name)
            return {}
        return sec

    def get(self, section: str, key: str, default=None, required: bool = False):
        sec = self.section(section)
        if key not in sec:
            if required:
                raise self.error(f"missing required key '{key}'", section, key)
            return default
        return sec[key]

    def number(self, section, key, default=None, required=False, positive=False, integer=False):
        v = self.get(section, key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, NUM):
            raise self.error(f"expected a number, got {v!r}", section, key)
        if integer and not float(v).is_integer():
            raise self.error(f"expected an integer, got {v!r}", section, key)
        if not math.isfinite(v):
            raise self.error("value must be finite", section, key)
        if positive and not v > 0:
            raise self.error(f"must be positive, got {v!r}", section, key)
        return int(v) if integer else float(v)

    def vector(self, section, key, n, default=None, required=False):
        v = self.get(section, key, default, required)
        if v is None:
            return None
        arr = np.atleast_1d(np.asarray(v, dtype=float)) if _numeric(v) else None
        if arr is None or arr.ndim != 1:
            raise self.error(f"expected a number or a flat list, got {v!r}", section, key)
        if n is not None and arr.size == 1 and n > 1:
            arr = np.full(n, arr[0])
        if n is not None and arr.size != n:
            raise self.error(f"expected length {n}, got {arr.size}", section, key)
        return arr

    def matrix(self, section, key, n, required=True):
        """Scalar (times identity), row-major flat list, or nested list."""
        v = self.get(section, key, None, required)
        if v is None:
            return None
        if not _numeric(v):
            raise self.error(f"expected numbers, got {v!r}", section, key)
        arr = np.asarray(v, dtype=float)
        if arr.ndim == 0:
            return float(arr) * np.eye(n)
        if arr.ndim == 1:
            if arr.size != n * n:
                raise self.error(f"flat matrix needs {n * n} entries, got {arr.size}", section, key)
            return arr.reshape(n, n)
        if arr.shape != (n, n):
            raise self.error(f"expected shape ({n}, {n}), got {arr.shape}", section, key)
        return arr

    # ------------------------------------------------------------ validation
    def validate(self) -> None:
        if not isinstance(self.data, dict):
            raise ConfigError("config must be a table")
        for name, sec in self.data.items():
            if name not in SCHEMA:
                raise self.error(f"unknown section [{name}]", name)
            if not isinstance(sec, dict):
                raise self.error("expected a table", name)
            allowed = SCHEMA[name]
            for key, val in sec.items():
                if key not in allowed:
                    raise self.error(f"unknown key '{key}'", name, key)
                if isinstance(val, bool) or not isinstance(val, allowed[key]):
                    raise self.error(f"bad type {type(val).__name__}", name, key)
        self.section("model", required=True)
        kind = self.get("model", "kind", required=True)
        if kind not in MODEL_KINDS:
            raise self.error(f"kind must be one of {MODEL_KINDS}, got {kind!r}", "model", "kind")

    # ------------------------------------------------------------ builders
    def n_assets(self) -> int:
        if self.get("model", "kind") == "matrix_constant":
            mu = self.get("model", "mu", required=True)
            return int(np.atleast_1d(np.asarray(mu, dtype=float)).size)
        return 1

    def model(self) -> MarketModel:
        kind = self.get("model", "kind")
        gamma = self.number("model", "gamma", 1.0, positive=True)
        rho = self.number("model", "rho", 1.0, positive=True)
        try:
            if kind == "matrix_constant":
                n = self.n_assets()
                mu = self.vector("model", "mu", n, required=True)
                Sigma = self.matrix("model", "Sigma", n)
                return ConstantModel(mu, Sigma, gamma, rho)
            lam = self.number("model", "lam", 1.0, positive=True)
            eta = self.number("model", "eta", 1.0, positive=True)
            sigma = self.number("model", "sigma", 1.0, positive=True)
            name = self.get("model", "signal", "linear")
            if kind == "ou_linear" and name != "linear":
                raise self.error("ou_linear requires signal = 'linear'", "model", "signal")
            if name not in SIGNALS:
                raise self.error(f"signal must be one of {tuple(SIGNALS)}", "model", "signal")
            if name == "linear":
                signal = SIGNALS["linear"](self.number("model", "slope", 1.0))
            else:
                signal = SIGNALS[name](self.number("model", "amplitude", 1.0),
                                       self.number("model", "scale", 1.0, positive=True))
            return OUModel(lam, eta, sigma, gamma, rho, signal)
        except ConfigError:
            raise
        except ValueError as exc:
            raise self.error(str(exc), "model") from None

    def frictions(self, eps: float | None = None) -> FrictionSpec:
        n = self.n_assets()
        self.section("frictions", required=True)
        L = self.matrix("frictions", "Lambda", n)
        C = self.matrix("frictions", "C", n)
        R = self.number("frictions", "R", required=True, positive=True)
        e = self.number("frictions", "eps", 1.0, positive=True) if eps is None else eps
        try:
            return FrictionSpec(L, C, R, e)
        except ValueError as exc:
            raise self.error(str(exc), "frictions") from None

    def factor_state(self, model: MarketModel) -> np.ndarray:
        # OU state is (price, signal); constant models only carry prices,
        # which no coefficient depends on
        default = [0.0, 1.0] if isinstance(model, OUModel) else [0.0] * model.dim
        return self.vector("state", "y", model.dim, default=default)

    def initial_state(self, model: MarketModel, frictions: FrictionSpec) -> InitialState:
        n = frictions.n
        y = self.factor_state(model)
        if "d" in self.section("state") and "D" in self.section("state"):
            raise self.error("give either d (rescaled) or D (physical), not both", "state", "D")
        if "D" in self.section("state"):
            D = self.vector("state", "D", n)
        else:
            D = frictions.eps * self.vector("state", "d", n, default=[0.0] * n)
        h = self.get("state", "h", "merton")
        h0 = None if h == "merton" else self.vector("state", "h", n)
        if isinstance(h, str) and h != "merton":
            raise self.error("h must be numbers or 'merton'", "state", "h")
        return InitialState(D, h0, y)

    def scaled_distortion(self, frictions: FrictionSpec) -> np.ndarray:
        n = frictions.n
        if "D" in self.section("state"):
            return self.vector("state", "D", n) / frictions.eps
        return self.vector("state", "d", n, default=[0.0] * n)

    def policies(self, section: str, frictions: FrictionSpec | None = None) -> list[PolicyChoice]:
        kinds = self.get(section, "policies", ["asymptotic"])
        alpha = self.get(section, "alpha", None)
        out = []
        for k in kinds:
            if not isinstance(k, str):
                raise self.error(f"policy names must be strings, got {k!r}", section, "policies")
            if k == "constant_coeff":
                if alpha is None:
                    raise self.error("constant_coeff needs alpha", section, "alpha")
                out.append(PolicyChoice(k, alpha))
            elif k in ("asymptotic", "temporary_only", "zero"):
                out.append(PolicyChoice(k))
            else:
                raise self.error(f"unknown policy {k!r}", section, "policies")
        return out

    def single_policy(self) -> PolicyChoice:
        kind = self.get("policy", "kind", "asymptotic")
        if kind == "constant_coeff":
            alpha = self.get("policy", "alpha", None)
            if alpha is None:
                raise self.error("constant_coeff needs alpha", "policy", "alpha")
            return PolicyChoice(kind, alpha)
        if kind not in ("asymptotic", "temporary_only", "zero"):
            raise self.error(f"unknown policy {kind!r}", "policy", "kind")
        return PolicyChoice(kind)

    def sim_config(self, frictions: FrictionSpec, workers=None) -> SimConfig:
        eps = frictions.eps
        dt = self.number("simulation", "dt", eps / 100.0, positive=True)
        try:
            return SimConfig(
                dt=dt,
                horizon=self.number("simulation", "horizon", None, positive=True),
                paths=self.number("simulation", "paths", 10_000, positive=True, integer=True),
                seed=self.number("simulation", "seed", 0, integer=True),
                workers=workers,
                block_size=self.number("simulation", "block_size", 2048, positive=True, integer=True),
            )
        except ValueError as exc:
            raise self.error(str(exc), "simulation") from None

    def grid(self) -> Grid:
        def axis(key):
            v = self.get("field", key, [-1.0, 1.0, 21])
            if not (isinstance(v, list) and len(v) == 3 and _numeric(v)):
                raise self.error("axis must be [lo, hi, num]", "field", key)
            lo, hi, num = v
            if not float(num).is_integer() or num < 2 or not hi > lo:
                raise self.error("axis needs hi > lo and an integer num >= 2", "field", key)
            return np.linspace(float(lo), float(hi), int(num))
        return Grid(axis("x1"), axis("x2"))

    def sweep_plan(self, workers=None) -> SweepPlan:
        self.section("sweep", required=True)
        grid = self.get("sweep", "eps_grid", required=True)
        if not _numeric(grid) or np.asarray(grid).ndim != 1:
            raise self.error("eps_grid must be a list of numbers", "sweep", "eps_grid")
        model = self.model()
        fr = self.frictions(1.0)
        y = self.factor_state(model)
        h = self.get("state", "h", "merton")
        try:
            return SweepPlan(
                eps_grid=tuple(float(e) for e in grid),
                y0=tuple(float(v) for v in y),
                d=tuple(float(v) for v in self.scaled_distortion(fr)),
                h0=None if h == "merton" else tuple(float(v) for v in self.vector("state", "h", fr.n)),
                policies=tuple(self.policies("sweep", fr)),
                dt_over_eps=self.number("sweep", "dt_over_eps", 0.01, positive=True),
                paths=self.number("sweep", "paths", 50_000, positive=True, integer=True),
                seed=self.number("sweep", "seed", 0, integer=True),
                horizon=self.number("sweep", "horizon", None, positive=True),
                mode=self.get("sweep", "mode", "expansion"),
                block_size=self.number("sweep", "block_size", 2048, positive=True, integer=True),
                workers=workers,
            )
        except ValueError as exc:
            raise self.error(str(exc), "sweep") from None

    def with_overrides(self, section: str, **values) -> "RunConfig":
        """Copy with ``section.key = value`` for every non-None value."""
        data = copy.deepcopy(self.data)
        for k, v in values.items():
            if v is not None:
                data.setdefault(section, {})[k] = v
        out = RunConfig(data, self.text, self.path)
        out.validate()
        return out


def _numeric(v) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, NUM):
        return True
    if isinstance(v, list):
        return all(_numeric(x) for x in v)
    return False
