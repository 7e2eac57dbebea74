"""Experiment specifications: parameter template, grid axes and run settings.

A spec is a nested mapping (YAML or JSON on disk)::

    kind: fidelity_sweep
    params: {epsilon: 0.3, beta: 10, eta: 1.0, Gamma_phi: 0.0}
    grid: {epsilon: {start: 0.1, stop: 0.7, num: 7}}
    backends: [exact, fma]
    trunc: {n_trunc: 10}
    solver: {abs_tol: 1.0e-9}
    output: {path: out/sweep, format: csv}

Grid axes may be given as a list, as ``{start, stop, num}`` or as
``{values: [...]}``.  Rates are in units of the mean qubit decay rate
``gamma`` (default 1), so ``tau`` and ``T`` are really ``gamma tau`` and
``gamma T``.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..network import NetworkParams, TruncationConfig
from ..quantum_core import SolverConfig

KINDS = ("fidelity_sweep", "contour", "delay_study", "pulsed_rate", "truncation_study",
         "optimize_fidelity", "optimize_rate", "spectra_dump")
BACKENDS = ("exact", "fma", "markov")
FORMATS = ("csv", "json")

# physical knobs of the template; everything is dimensionless in units of gamma
PARAM_DEFAULTS = {
    "epsilon": 0.3,
    "beta": 10.0,
    "eta": 1.0,
    "Gamma_phi": 0.0,
    "gamma": 1.0,
    "delta1": 0.0,
    "delta2": 0.0,
    "tau": 0.0,
}
# grid axes that are not network parameters
EXTRA_AXES = {
    "fidelity_sweep": (),
    "contour": ("r_eff", "mu_eff"),
    "delay_study": (),
    "pulsed_rate": ("T",),
    "truncation_study": ("n_trunc",),
    "optimize_fidelity": (),
    "optimize_rate": (),
    "spectra_dump": ("omega",),
}

# exact-ME runs are restricted to the regime where truncation converges
EXACT_EPSILON_CAP = 0.8
EXACT_BETA_CAP = 1e3


class SpecError(ValueError):
    """Invalid experiment specification (CLI exit code 2)."""


def expand_axis(name, value) -> list:
    """Turn one axis description into a list of floats (ints for ``n_trunc``)."""
    if isinstance(value, dict):
        if "values" in value:
            vals = list(value["values"])
        elif {"start", "stop"} <= value.keys():
            num = int(value.get("num", 2))
            if num < 1:
                raise SpecError(f"axis {name}: num must be >= 1")
            vals = np.linspace(float(value["start"]), float(value["stop"]), num).tolist()
        else:
            raise SpecError(f"axis {name}: expected 'values' or 'start'/'stop'/'num'")
    elif isinstance(value, (list, tuple)):
        vals = list(value)
    else:
        vals = [value]
    if not vals:
        raise SpecError(f"axis {name} is empty")
    try:
        if name == "n_trunc":
            out = [int(v) for v in vals]
            if any(o != float(v) for o, v in zip(out, vals)):
                raise SpecError("n_trunc values must be integers")
            return out
        return [float(v) for v in vals]
    except (TypeError, ValueError) as exc:
        raise SpecError(f"axis {name}: non-numeric value ({exc})") from exc


@dataclass
class ExperimentSpec:
    kind: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    backends: list = field(default_factory=lambda: ["fma"])
    trunc: dict = field(default_factory=lambda: {"n_trunc": 10})
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"path": None, "format": "csv"})
    options: dict = field(default_factory=dict)
    limits: dict = field(default_factory=lambda: {"max_sector_rows": 90_000})
    threads: int = 1

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = copy.deepcopy(data or {})
        unknown = set(data) - {"kind", "params", "grid", "backends", "trunc", "solver",
                               "output", "options", "limits", "threads"}
        if unknown:
            raise SpecError(f"unknown spec keys {sorted(unknown)}")
        if "kind" not in data:
            raise SpecError("spec needs a 'kind'")
        base = cls(kind=data["kind"])
        for key in ("params", "grid", "trunc", "solver", "output", "options", "limits"):
            merged = dict(getattr(base, key))
            merged.update(data.get(key) or {})
            setattr(base, key, merged)
        if "backends" in data:
            b = data["backends"]
            base.backends = [b] if isinstance(b, str) else list(b)
        if "threads" in data:
            base.threads = data["threads"]
        base.validate()
        return base

    @classmethod
    def load(cls, path) -> dict:
        """Read a YAML or JSON config file into a plain mapping."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return json.loads(text)
        import yaml

        return yaml.safe_load(text) or {}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "params": dict(self.params), "grid": copy.deepcopy(self.grid),
            "backends": list(self.backends), "trunc": dict(self.trunc),
            "solver": dict(self.solver), "output": dict(self.output),
            "options": copy.deepcopy(self.options), "limits": dict(self.limits),
            "threads": self.threads,
        }

    def digest(self) -> str:
        """Hash of everything that determines the numbers (not threads or output path)."""
        d = self.to_dict()
        d.pop("threads")
        d["output"] = {"format": d["output"].get("format")}
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- validation ---------------------------------------------------------

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}; choose from {', '.join(KINDS)}")
        bad = [b for b in self.backends if b not in BACKENDS]
        if bad or not self.backends:
            raise SpecError(f"backends must be a non-empty subset of {BACKENDS}, got {self.backends}")
        unknown = set(self.params) - set(PARAM_DEFAULTS)
        if unknown:
            raise SpecError(f"unknown parameters {sorted(unknown)}")
        allowed = set(PARAM_DEFAULTS) | set(EXTRA_AXES[self.kind])
        for name in self.grid:
            if name not in allowed:
                raise SpecError(f"grid axis {name!r} is not valid for {self.kind}")
        axes = self.axes()
        if any(len(v) == 0 for v in axes.values()):
            raise SpecError("grid size must be > 0")
        fmt = self.output.get("format", "csv")
        if fmt not in FORMATS:
            raise SpecError(f"format must be one of {FORMATS}")
        try:
            self.threads = int(self.threads)
        except (TypeError, ValueError) as exc:
            raise SpecError("threads must be an integer") from exc
        if self.threads < 1:
            raise SpecError("threads must be >= 1")
        try:
            self.trunc_config()
            self.solver_config()
        except (TypeError, ValueError) as exc:
            raise SpecError(str(exc)) from exc
        # every grid point must give valid physics
        for point in self.points():
            try:
                make_params({**self.template(), **point})
            except ValueError as exc:
                raise SpecError(f"grid point {point}: {exc}") from exc

    # -- accessors ----------------------------------------------------------

    def template(self) -> dict:
        out = dict(PARAM_DEFAULTS)
        out.update({k: float(v) for k, v in self.params.items()})
        return out

    def axes(self) -> dict:
        return {name: expand_axis(name, spec) for name, spec in self.grid.items()}

    def points(self) -> list[dict]:
        """Grid points in deterministic order (last axis fastest)."""
        axes = self.axes()
        if not axes:
            return [{}]
        names = list(axes)
        mesh = np.meshgrid(*[np.arange(len(axes[n])) for n in names], indexing="ij")
        idx = np.stack([m.ravel() for m in mesh], axis=1)
        return [{n: axes[n][i] for n, i in zip(names, row)} for row in idx]

    def trunc_config(self) -> TruncationConfig:
        return TruncationConfig(int(self.trunc.get("n_trunc", 10)))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    @property
    def max_sector_rows(self) -> int:
        return int(self.limits.get("max_sector_rows", 90_000))


def make_params(values: dict) -> NetworkParams:
    """Network parameters from dimensionless knobs (``beta``, ``Gamma_phi``, ``gamma``)."""
    g = float(values.get("gamma", 1.0))
    if not g > 0:
        raise ValueError("gamma must be positive")
    beta = float(values["beta"])
    if not beta > 0:
        raise ValueError("beta must be positive")
    return NetworkParams(
        kappa1=beta * g, kappa2=beta * g, gamma1=g, gamma2=g,
        gamma_phi=float(values.get("Gamma_phi", 0.0)) * g,
        delta1=float(values.get("delta1", 0.0)), delta2=float(values.get("delta2", 0.0)),
        epsilon=float(values["epsilon"]), eta=float(values.get("eta", 1.0)),
        tau1=0.0, tau2=float(values.get("tau", 0.0)) / g)
