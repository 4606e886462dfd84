"""Run configurations: parsing, validation and the canonical examples.

A configuration is a YAML (or JSON) document with ``problem``, ``grid``,
``solver`` and pipeline-specific sections. Every formula name must resolve
to a registered built-in; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .hamiltonians import HAMILTONIAN_FAMILIES, POTENTIALS, HamiltonianSpec, make_hamiltonian
from .problem import DENSITY_FORMULAS, SUPPLY_FORMULAS, TERMINAL_FORMULAS, ProblemData, make_problem

__all__ = [
    "PIPELINES",
    "RunConfig",
    "BUILTIN_CONFIGS",
    "load_config",
    "parse_config",
]

PIPELINES = ("validate", "solve", "lp", "duality", "commutation", "sweep")

_DEFAULTS: dict[str, Any] = {
    "pipeline": "duality",
    "output": "out",
    "seed": 0,
    "problem": {
        "T": 1.0,
        "gamma": 2.0,
        "hamiltonian": {"family": "quadratic", "potential": "zero"},
        "supply": {"name": "constant", "q": 1.0},
        "terminal": {"name": "zero"},
        "density": {"name": "bump"},
    },
    "grid": {"Nt": 64, "Nx": 64, "Nv": 32, "R": 3.0, "Vmax": 2.0, "levels": [16, 32, 64]},
    "solver": {
        "epsilon": 0.0,
        "eps_schedule": [0.1, 0.05, 0.025, 0.0125],
        "damping": 0.5,
        "tol": 1e-8,
        "max_iter": 200,
        "lp_tol": 1e-6,
        "lp_max_iter": 200000,
        "warm_dual": True,
    },
    "lp": {"nu_mode": "free", "nu_T": None},
    "commutation": {"alphas": [0.2, 0.1, 0.05, 0.025], "Nt": 160, "Nx": 240, "R": 1.5},
}


def _merge(base: dict[str, Any], over: dict[str, Any], path: str = "") -> dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}", known=sorted(base))
        if isinstance(base[k], dict) and k in ("supply", "terminal", "density", "hamiltonian"):
            if not isinstance(v, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[k] = copy.deepcopy(v)         # formula blocks replace, they do not merge
        elif isinstance(base[k], dict) and base[k]:
            if not isinstance(v, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the fully merged document."""

    raw: dict[str, Any]
    source: str = "<dict>"
    _spec: HamiltonianSpec | None = field(default=None, init=False, repr=False)
    _data: ProblemData | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.validate()

    # sections
    @property
    def pipeline(self) -> str:
        return self.raw["pipeline"]

    @property
    def problem(self) -> dict[str, Any]:
        return self.raw["problem"]

    @property
    def grid(self) -> dict[str, Any]:
        return self.raw["grid"]

    @property
    def solver(self) -> dict[str, Any]:
        return self.raw["solver"]

    @property
    def lp(self) -> dict[str, Any]:
        return self.raw["lp"]

    @property
    def commutation(self) -> dict[str, Any]:
        return self.raw["commutation"]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output(self) -> str:
        return str(self.raw["output"])

    def validate(self) -> None:
        """Check names, positivity and the viscosity schedule.

        Raises
        ------
        ConfigError
            On the first violated rule.
        """
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}", known=list(PIPELINES))
        p = self.problem
        ham = p["hamiltonian"]
        if ham.get("family") not in HAMILTONIAN_FAMILIES:
            raise ConfigError(f"unknown Hamiltonian family {ham.get('family')!r}",
                              known=sorted(HAMILTONIAN_FAMILIES))
        if ham.get("potential", "zero") not in POTENTIALS:
            raise ConfigError(f"unknown potential {ham.get('potential')!r}", known=sorted(POTENTIALS))
        for key, reg in (("supply", SUPPLY_FORMULAS), ("terminal", TERMINAL_FORMULAS),
                         ("density", DENSITY_FORMULAS)):
            name = p[key].get("name")
            if name not in reg:
                raise ConfigError(f"unknown {key} formula {name!r}", known=sorted(reg))
        if not float(p["T"]) > 0:
            raise ConfigError("T must be positive", T=p["T"])
        g = self.grid
        for k in ("Nt", "Nx", "Nv"):
            if int(g[k]) < 2:
                raise ConfigError(f"grid.{k} must be at least 2", value=g[k])
        for k in ("R", "Vmax"):
            if not float(g[k]) > 0:
                raise ConfigError(f"grid.{k} must be positive", value=g[k])
        s = self.solver
        for k in ("tol", "lp_tol", "damping"):
            if not float(s[k]) > 0:
                raise ConfigError(f"solver.{k} must be positive", value=s[k])
        if float(s["epsilon"]) < 0:
            raise ConfigError("solver.epsilon must be nonnegative", value=s["epsilon"])
        sched = [float(e) for e in s["eps_schedule"]]
        if any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("solver.eps_schedule must be positive and strictly decreasing",
                              schedule=sched)
        if self.lp["nu_mode"] not in ("free", "fixed"):
            raise ConfigError("lp.nu_mode must be 'free' or 'fixed'", value=self.lp["nu_mode"])
        if self.lp["nu_mode"] == "fixed" and not isinstance(self.lp["nu_T"], dict):
            raise ConfigError("lp.nu_T must be a mapping in fixed mode")
        if len(self.commutation["alphas"]) < 3:
            raise ConfigError("commutation.alphas needs at least three radii")

    def hamiltonian(self) -> HamiltonianSpec:
        if self._spec is None:
            ham = dict(self.problem["hamiltonian"])
            family = ham.pop("family")
            potential = ham.pop("potential", "zero")
            pot_params = ham.pop("potential_params", None)
            self._spec = make_hamiltonian(family, potential, pot_params, **ham)
        return self._spec

    def problem_data(self) -> ProblemData:
        if self._data is None:
            p = self.problem
            data = make_problem(p["T"], p["supply"], p["terminal"], p["density"],
                                p["gamma"], name=self.raw.get("name", self.source))
            self._data = dataclasses.replace(data, config=copy.deepcopy(p))
        return self._data

    def with_pipeline(self, pipeline: str) -> RunConfig:
        raw = copy.deepcopy(self.raw)
        raw["pipeline"] = pipeline
        return RunConfig(raw, self.source)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False)


def parse_config(doc: dict[str, Any], source: str = "<dict>") -> RunConfig:
    """Merge ``doc`` over the defaults and validate."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping", source=source)
    doc = dict(doc)
    name = doc.pop("name", None)
    raw = _merge(_DEFAULTS, doc)
    raw["name"] = name or Path(source).stem
    return RunConfig(raw, source)


def load_config(path_or_name: str) -> RunConfig:
    """Load a YAML/JSON file, or a built-in configuration by name.

    Raises
    ------
    ConfigError
        If the file cannot be read or parsed, or fails validation.
    """
    if path_or_name in BUILTIN_CONFIGS:
        return parse_config(copy.deepcopy(BUILTIN_CONFIGS[path_or_name]), path_or_name)
    path = Path(path_or_name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path),
                          builtins=sorted(BUILTIN_CONFIGS)) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}", path=str(path)) from None
    return parse_config(doc or {}, str(path))


BUILTIN_CONFIGS: dict[str, dict[str, Any]] = {
    "lq0": {
        "name": "lq0",
        "problem": {"supply": {"name": "constant", "q": 1.0}, "terminal": {"name": "zero"}},
    },
    "lqlin": {
        "name": "lqlin",
        "problem": {"supply": {"name": "constant", "q": 1.0},
                    "terminal": {"name": "linear", "slope": 1.0}},
    },
    "cosQ": {
        "name": "cosQ",
        "problem": {"supply": {"name": "cos", "amplitude": 1.0, "frequency": 1.0}},
    },
    "potential": {
        "name": "potential",
        "pipeline": "sweep",
        "problem": {
            "hamiltonian": {"family": "quadratic", "potential": "smooth_abs",
                            "potential_params": {"strength": 0.5, "width": 1.0}},
            "supply": {"name": "sin"},
        },
        "grid": {"levels": [16, 32]},
    },
    "lq0_infeasible": {
        "name": "lq0_infeasible",
        "pipeline": "lp",
        "grid": {"Nt": 16, "Nx": 16, "Nv": 8},
        "lp": {"nu_mode": "fixed", "nu_T": {"kind": "translate", "shift": 0.5}},
    },
}
