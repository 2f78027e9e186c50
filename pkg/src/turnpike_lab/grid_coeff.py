"""Uniform 1-D grids, coefficient recipes and harmonic cell averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import integrate

from .exceptions import ConfigError, EllipticityError, ResolutionError

KINDS = ("constant", "periodic_sin2", "piecewise_periodic", "tabulated")
PERIODIC_KINDS = ("periodic_sin2", "piecewise_periodic")

# Gauss-Legendre rule used on every quadrature panel.
_GL_ORDER = 4
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)
MIN_POINTS_PER_PERIOD = 16


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of (0, 1) with homogeneous Dirichlet endpoints."""

    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ConfigError(f"n_cells must be an integer >= 4, got {self.n_cells!r}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) / self.n_cells

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def n_interior(self) -> int:
        return self.n_cells - 1


def build_grid(n_cells: int) -> Grid:
    return Grid(int(n_cells) if isinstance(n_cells, (int, np.integer)) else n_cells)


@dataclass(frozen=True)
class CoefficientRecipe:
    """Analytic description of a coefficient on (0, 1).

    ``constant``            params: value
    ``periodic_sin2``       params: offset, amplitude; a(x) = amplitude*sin^2(pi*x/eps) + offset
    ``piecewise_periodic``  params: values, breakpoints (in the unit period, starting at 0)
    ``tabulated``           params: x, values (piecewise linear, not periodic)
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown coefficient kind {self.kind!r}; expected one of {KINDS}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive or null, got {self.epsilon!r}")
        p = self.params
        if self.kind == "constant" and "value" not in p:
            raise ConfigError("constant recipe needs params.value")
        if self.kind == "piecewise_periodic":
            vals, bps = p.get("values"), p.get("breakpoints")
            if vals is None or bps is None or len(vals) != len(bps):
                raise ConfigError("piecewise_periodic needs equal-length values and breakpoints")
            if bps[0] != 0 or any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])) or bps[-1] >= 1:
                raise ConfigError("breakpoints must start at 0, increase strictly and stay below 1")
        if self.kind == "tabulated":
            xs, vals = p.get("x"), p.get("values")
            if xs is None or vals is None or len(xs) != len(vals) or len(xs) < 2:
                raise ConfigError("tabulated recipe needs matching x and values (>= 2 points)")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | float | int) -> "CoefficientRecipe":
        if isinstance(d, (int, float)):
            return cls("constant", {"value": float(d)})
        if "kind" not in d:
            raise ConfigError("coefficient recipe is missing field 'kind'")
        return cls(d["kind"], dict(d.get("params", {})), d.get("epsilon"))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "epsilon": self.epsilon}

    @property
    def is_periodic(self) -> bool:
        return self.kind in PERIODIC_KINDS or self.kind == "constant"

    def with_epsilon(self, epsilon: float | None) -> "CoefficientRecipe":
        return CoefficientRecipe(self.kind, self.params, epsilon)

    @property
    def period(self) -> float | None:
        if self.kind in PERIODIC_KINDS:
            return 1.0 if self.epsilon is None else float(self.epsilon)
        return None

    def cell_function(self, s):
        """Evaluate the unit-period profile a(s), s in [0, 1)."""
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(s, float(p["value"]))
        if self.kind == "periodic_sin2":
            return float(p.get("amplitude", 1.0)) * np.sin(np.pi * s) ** 2 + float(p.get("offset", 0.5))
        if self.kind == "piecewise_periodic":
            frac = np.mod(s, 1.0)
            idx = np.searchsorted(np.asarray(p["breakpoints"], dtype=float), frac, side="right") - 1
            return np.asarray(p["values"], dtype=float)[idx]
        raise ConfigError("tabulated recipes have no periodic cell profile")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "tabulated":
            return np.interp(x, np.asarray(self.params["x"], float), np.asarray(self.params["values"], float))
        if self.kind == "constant":
            return self.cell_function(x)
        return self.cell_function(x / self.period)

    def breakpoints_in(self, lo: float, hi: float) -> np.ndarray:
        """Points of discontinuity (or kinks) of the recipe strictly inside (lo, hi)."""
        if self.kind == "piecewise_periodic":
            eps = self.period
            bps = np.asarray(self.params["breakpoints"], float)
            k0, k1 = math.floor(lo / eps) - 1, math.ceil(hi / eps) + 1
            pts = (np.arange(k0, k1 + 1)[:, None] + bps[None, :]).ravel() * eps
        elif self.kind == "tabulated":
            pts = np.asarray(self.params["x"], float)
        else:
            return np.empty(0)
        pts = np.unique(pts)
        return pts[(pts > lo) & (pts < hi)]


def constant(value: float) -> CoefficientRecipe:
    return CoefficientRecipe("constant", {"value": float(value)})


def sin2_recipe(epsilon: float | None = 1.0, offset: float = 0.5, amplitude: float = 1.0) -> CoefficientRecipe:
    return CoefficientRecipe("periodic_sin2", {"offset": offset, "amplitude": amplitude}, epsilon)


@dataclass(frozen=True)
class ControlWindow:
    x_lo: float
    x_hi: float
    mask: np.ndarray = field(repr=False, compare=False)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def is_full(self) -> bool:
        return bool(self.mask.all())


def make_window(grid: Grid, x_lo: float = 0.0, x_hi: float = 1.0) -> ControlWindow:
    if not (0.0 <= x_lo < x_hi <= 1.0):
        raise ConfigError(f"control window needs 0 <= x_lo < x_hi <= 1, got ({x_lo}, {x_hi})")
    x = grid.interior
    # A tolerance of dx*1e-9 keeps nodes that sit on the window edge up to rounding.
    tol = 1e-9 * grid.dx
    mask = ((x >= x_lo - tol) & (x <= x_hi + tol)).astype(float)
    if not mask.any():
        raise ConfigError(f"control window ({x_lo}, {x_hi}) contains no interior node")
    mask.setflags(write=False)
    return ControlWindow(float(x_lo), float(x_hi), mask)


@dataclass(frozen=True)
class CoefficientField:
    a_interface: np.ndarray
    b_node: np.ndarray
    p_node: np.ndarray
    a0: float
    epsilon: float | None
    grid: Grid


def ellipticity_floor(recipe: CoefficientRecipe, epsilon: float | None = None) -> float:
    """Minimum of ``recipe`` over [0, 1] from 1e4*max(1, 1/eps) uniform samples."""
    eps = epsilon if epsilon is not None else recipe.period
    n = int(1e4 * max(1.0, 1.0 / eps)) if eps else 10_000
    xs = np.linspace(0.0, 1.0, n + 1)
    vals = recipe(xs)
    bps = recipe.breakpoints_in(-1.0, 2.0)
    if bps.size:
        bps = bps[(bps >= 0) & (bps <= 1)]
        vals = np.concatenate([vals, recipe(bps), recipe(np.clip(bps - 1e-12, 0, 1))])
    return float(vals.min())


def _panel_quadrature(lo: float, hi: float, n_panels: int, extra_breaks: np.ndarray):
    edges = np.linspace(lo, hi, n_panels + 1)
    if extra_breaks.size:
        edges = np.unique(np.concatenate([edges, extra_breaks]))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    wts = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return pts, wts


def sample_coefficients(
    a: CoefficientRecipe,
    grid: Grid,
    b: CoefficientRecipe | None = None,
    p: CoefficientRecipe | None = None,
    epsilon: float | None = None,
    panels_per_cell: int | None = None,
    allow_underresolved: bool = False,
) -> CoefficientField:
    """Sample ``(a, b, p)`` on ``grid``.

    ``a`` is stored at cell interfaces as the harmonic mean over each cell
    ``[x_i, x_{i+1}]``, integrated by composite Gauss-Legendre on panels that
    resolve the oscillation period. ``b`` and ``p`` are sampled at interior nodes.
    A non-``None`` ``epsilon`` overrides the period of periodic ``a`` recipes.
    """
    if epsilon is not None and a.kind in PERIODIC_KINDS:
        a = a.with_epsilon(epsilon)
    b = b or constant(0.0)
    p = p or constant(0.0)
    eps = a.period
    a0 = ellipticity_floor(a)
    if not a0 > 0:
        raise EllipticityError(f"coefficient a is not uniformly positive: sampled minimum {a0:.6g}")

    dx = grid.dx
    if panels_per_cell is None:
        panels_per_cell = 1 if eps is None else max(1, math.ceil(8 * dx / eps))
    if eps is not None:
        per_period = panels_per_cell * _GL_ORDER * eps / dx
        if per_period < MIN_POINTS_PER_PERIOD and not allow_underresolved:
            raise ResolutionError(
                f"{per_period:.1f} quadrature points per period (< {MIN_POINTS_PER_PERIOD}); "
                "raise panels_per_cell or pass allow_underresolved=True"
            )

    nodes = grid.nodes
    a_int = np.empty(grid.n_cells)
    for i in range(grid.n_cells):
        lo, hi = nodes[i], nodes[i + 1]
        pts, wts = _panel_quadrature(lo, hi, panels_per_cell, a.breakpoints_in(lo, hi))
        a_int[i] = (hi - lo) / np.dot(wts, 1.0 / a(pts))

    x = grid.interior
    b_node = np.asarray(b(x), dtype=float)
    p_node = np.asarray(p(x), dtype=float)
    for arr in (a_int, b_node, p_node):
        arr.setflags(write=False)
    return CoefficientField(a_int, b_node, p_node, a0, eps, grid)


def homogenized_constant(recipe: CoefficientRecipe) -> float:
    """Effective diffusivity (int_0^1 ds / a(s))^-1 of a periodic profile."""
    if recipe.kind == "tabulated":
        raise ConfigError("homogenized_constant needs a periodic recipe")
    if recipe.kind == "constant":
        v = float(recipe.params["value"])
        if not v > 0:
            raise EllipticityError(f"non-positive constant coefficient {v}")
        return v
    if not ellipticity_floor(recipe, epsilon=1.0) > 0:
        raise EllipticityError("periodic profile is not uniformly positive")
    unit = recipe.with_epsilon(1.0)
    pts = list(unit.breakpoints_in(0.0, 1.0))
    val, _ = integrate.quad(lambda s: 1.0 / unit.cell_function(s), 0.0, 1.0,
                            points=pts or None, epsabs=0.0, epsrel=1e-12, limit=200)
    return 1.0 / val


def arithmetic_mean(recipe: CoefficientRecipe) -> float:
    unit = recipe.with_epsilon(1.0) if recipe.kind in PERIODIC_KINDS else recipe
    f = unit.cell_function if recipe.kind != "tabulated" else unit
    pts = list(unit.breakpoints_in(0.0, 1.0))
    val, _ = integrate.quad(lambda s: float(f(s)), 0.0, 1.0, points=pts or None, epsrel=1e-12, limit=200)
    return val
