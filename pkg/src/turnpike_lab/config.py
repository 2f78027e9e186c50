"""Experiment configuration: JSON schema, defaults and conversion to solver inputs."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .exceptions import ConfigError
from .grid_coeff import (
    CoefficientRecipe,
    Grid,
    build_grid,
    constant,
    homogenized_constant,
    make_window,
    sample_coefficients,
)
from .ocp import OCPConfig
from .pde_solvers import TimeGrid

_RECIPE = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"type": "string"},
        "params": {"type": "object"},
        "epsilon": {"type": ["number", "null"], "exclusiveMinimum": 0},
    },
}
_WINDOW = {
    "type": "object",
    "required": ["x_lo", "x_hi"],
    "properties": {"x_lo": {"type": "number"}, "x_hi": {"type": "number"}},
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["grid", "time", "coefficients", "window", "y0", "y_d", "turnpike"],
    "properties": {
        "grid": {"type": "object", "required": ["n_cells"],
                 "properties": {"n_cells": {"type": "integer", "minimum": 4}}},
        "time": {"type": "object", "required": ["T", "n_steps"],
                 "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                                "n_steps": {"type": "integer", "minimum": 2}}},
        "coefficients": {"type": "object", "required": ["a"],
                         "properties": {"a": _RECIPE, "b": _RECIPE, "p": _RECIPE}},
        "epsilon_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "window": _WINDOW,
        "y0": _RECIPE,
        "y_d": _RECIPE,
        "turnpike": {"type": "object", "required": ["C", "mu"],
                     "properties": {"C": {"type": "number", "exclusiveMinimum": 0},
                                    "mu": {"type": "number", "exclusiveMinimum": 0}}},
        "solver": {"type": "object", "properties": {
            "cg_tol": {"type": "number", "exclusiveMinimum": 0},
            "cg_max_iter": {"type": "integer", "minimum": 1},
            "deviation": {"enum": ["riccati", "cg"]},
            "riccati_max_dim": {"type": "integer", "minimum": 1}}},
        "riccati_study": {"type": "object", "properties": {
            "n_cells": {"type": "integer", "minimum": 4},
            "cross_check_n_cells": {"type": "integer", "minimum": 4},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "n_steps": {"type": "integer", "minimum": 2},
            "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}}},
        "hum": {"type": "object", "properties": {
            "n_cells": {"type": "integer", "minimum": 4},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "n_steps": {"type": "integer", "minimum": 2},
            "window": _WINDOW,
            "delta": {"type": "number", "exclusiveMinimum": 0},
            "delta_ladder": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            "cg_tol": {"type": "number", "exclusiveMinimum": 0}}},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}

DEFAULTS: dict[str, Any] = {
    "epsilon_list": [],
    "coefficients": {"b": {"kind": "constant", "params": {"value": 0.0}},
                     "p": {"kind": "constant", "params": {"value": 0.0}}},
    "solver": {"cg_tol": 1e-8, "cg_max_iter": 500, "deviation": "riccati", "riccati_max_dim": 401},
    "riccati_study": {"n_cells": 201, "cross_check_n_cells": 201, "T": 4.0, "n_steps": 400,
                      "epsilons": [1.0, 0.1, 0.01]},
    "hum": {"n_cells": 200, "T": 1.0, "n_steps": 100, "window": {"x_lo": 0.3, "x_hi": 0.7},
            "delta": 1e-6, "delta_ladder": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            "epsilons": [1.0, 0.1, 0.01], "cg_tol": 1e-10},
    "output_dir": "results",
    "seed": 0,
}

# Reference setup, checked in as configs/paper.json.
PAPER_CONFIG: dict[str, Any] = {
    "grid": {"n_cells": 421},
    "time": {"T": 50.0, "n_steps": 168},
    "coefficients": {
        "a": {"kind": "periodic_sin2", "params": {"offset": 0.5, "amplitude": 1.0}, "epsilon": 1.0},
        "b": {"kind": "constant", "params": {"value": 0.0}, "epsilon": None},
        "p": {"kind": "constant", "params": {"value": 0.0}, "epsilon": None},
    },
    "epsilon_list": [1.0, 0.5, 0.1, 0.05, 0.01, 0.005],
    "window": {"x_lo": 0.0, "x_hi": 1.0},
    "y0": {"kind": "polynomial", "params": {"coeffs": [0.0, -1.0, 1.0]}},
    "y_d": {"kind": "constant", "params": {"value": 1.0}},
    "turnpike": {"C": 10.0, "mu": 4.0},
    "solver": {"cg_tol": 1e-8, "cg_max_iter": 500, "deviation": "riccati", "riccati_max_dim": 421},
    "riccati_study": {"n_cells": 201, "cross_check_n_cells": 201, "T": 4.0, "n_steps": 400,
                      "epsilons": [1.0, 0.1, 0.01]},
    "hum": {"n_cells": 200, "T": 1.0, "n_steps": 100, "window": {"x_lo": 0.3, "x_hi": 0.7},
            "delta": 1e-6, "delta_ladder": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            "epsilons": [1.0, 0.1, 0.01], "cg_tol": 1e-10},
    "output_dir": "results/paper",
    "seed": 0,
}


def evaluate_field(recipe: dict, x: np.ndarray) -> np.ndarray:
    """Evaluate an initial-state / target recipe at the nodes ``x``.

    Kinds: ``constant`` (value), ``polynomial`` (coeffs, ascending powers),
    ``sine`` (mode, amplitude), ``tabulated`` (x, values).
    """
    kind = recipe.get("kind")
    p = recipe.get("params", {})
    try:
        if kind == "constant":
            return np.full_like(x, float(p["value"]))
        if kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, np.asarray(p["coeffs"], dtype=float))
        if kind == "sine":
            return float(p.get("amplitude", 1.0)) * np.sin(int(p.get("mode", 1)) * np.pi * x)
        if kind == "tabulated":
            return np.interp(x, np.asarray(p["x"], float), np.asarray(p["values"], float))
    except KeyError as exc:
        raise ConfigError(f"field recipe of kind {kind!r} is missing params.{exc.args[0]}") from None
    raise ConfigError(f"unknown field recipe kind {kind!r}")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> dict:
    """Schema check; raises ``ConfigError`` naming the offending field."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path)
        if exc.validator == "required":
            missing = exc.message.split("'")[1]
            field = f"{path}.{missing}" if path else missing
            raise ConfigError(f"missing config field '{field}'") from None
        raise ConfigError(f"invalid config field '{path or '<root>'}': {exc.message}") from None
    return raw


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validate(raw)
        cfg = cls(_merge(DEFAULTS, raw))
        cfg.a_recipe  # recipe-level validation
        cfg.b_recipe
        cfg.p_recipe
        w = cfg.raw["window"]
        if not 0 <= w["x_lo"] < w["x_hi"] <= 1:
            raise ConfigError("invalid config field 'window': need 0 <= x_lo < x_hi <= 1")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        if "config" in data and "config_sha256" in data:
            # a run manifest: re-run its embedded configuration
            data = data["config"]
        return cls.from_dict(data)

    @classmethod
    def paper(cls) -> "ExperimentConfig":
        return cls.from_dict(copy.deepcopy(PAPER_CONFIG))

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)

    @property
    def sha256(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def grid(self) -> Grid:
        return build_grid(self.raw["grid"]["n_cells"])

    @property
    def timegrid(self) -> TimeGrid:
        return TimeGrid(float(self.raw["time"]["T"]), int(self.raw["time"]["n_steps"]))

    @property
    def a_recipe(self) -> CoefficientRecipe:
        return CoefficientRecipe.from_dict(self.raw["coefficients"]["a"])

    @property
    def b_recipe(self) -> CoefficientRecipe:
        return CoefficientRecipe.from_dict(self.raw["coefficients"]["b"])

    @property
    def p_recipe(self) -> CoefficientRecipe:
        return CoefficientRecipe.from_dict(self.raw["coefficients"]["p"])

    @property
    def epsilons(self) -> list[float]:
        return [float(e) for e in self.raw["epsilon_list"]]

    @property
    def C(self) -> float:
        return float(self.raw["turnpike"]["C"])

    @property
    def mu(self) -> float:
        return float(self.raw["turnpike"]["mu"])

    @property
    def solver(self) -> dict:
        return self.raw["solver"]

    def ocp_config(self, epsilon: float | None = None, n_cells: int | None = None,
                   homogenized: bool = False, timegrid: TimeGrid | None = None) -> OCPConfig:
        """Solver input for one epsilon (or for the homogenised coefficient)."""
        grid = build_grid(n_cells) if n_cells else self.grid
        a = self.a_recipe
        if homogenized:
            a, epsilon = constant(homogenized_constant(a)), None
        cf = sample_coefficients(a, grid, self.b_recipe, self.p_recipe, epsilon=epsilon)
        x = grid.interior
        w = self.raw["window"]
        s = self.solver
        return OCPConfig(grid, timegrid or self.timegrid, cf, make_window(grid, w["x_lo"], w["x_hi"]),
                         evaluate_field(self.raw["y0"], x), evaluate_field(self.raw["y_d"], x),
                         cg_tol=float(s["cg_tol"]), cg_max_iter=int(s["cg_max_iter"]))
