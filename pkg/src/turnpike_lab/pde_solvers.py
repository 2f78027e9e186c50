"""Implicit Euler integration of the forward state and backward adjoint equations.

Index convention
----------------
A source (control) value stored at ``t_k`` drives the step ``t_k -> t_{k+1}``::

    (I + dt A)   y_{k+1} = y_k     + dt * source_k          (forward)
    (I + dt A^T) psi_k   = psi_{k+1} + dt * source_{k+1}    (backward)

With this pairing the two solvers are exact transposes of each other:
``sum_{k<M} dt <g_k, psi_k> == sum_{k>=1} dt <s_k, y_k>`` for ``y_0 = 0`` and
``psi_M = 0``, and the optimal control satisfies ``f_k = -chi psi_k`` at every
index including ``t_M``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DimensionError
from .grid_coeff import Grid
from .operators import DiscreteOperator, TridiagonalLU


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ConfigError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class Trajectory:
    """Grid functions at every ``t_k``; ``values`` has shape ``(n_steps + 1, n_interior)``."""

    values: np.ndarray
    timegrid: TimeGrid
    grid: Grid

    def __post_init__(self):
        expected = (self.timegrid.n_steps + 1, self.grid.n_interior)
        if self.values.shape != expected:
            raise DimensionError(f"trajectory of shape {self.values.shape}, expected {expected}")

    @property
    def snapshots(self) -> np.ndarray:
        return self.values

    def __getitem__(self, k):
        return self.values[k]

    def norms(self) -> np.ndarray:
        """Discrete L2 norm of every snapshot."""
        return np.sqrt(self.grid.dx * np.sum(self.values**2, axis=1))

    def to_csv(self, path, name: str = "value") -> Path:
        return write_trajectory_csv(path, {name: self})

    @classmethod
    def zeros(cls, timegrid: TimeGrid, grid: Grid) -> "Trajectory":
        return cls(np.zeros((timegrid.n_steps + 1, grid.n_interior)), timegrid, grid)


def _source_array(source, tg: TimeGrid, n: int) -> np.ndarray | None:
    if source is None:
        return None
    arr = source.values if isinstance(source, Trajectory) else np.asarray(source, dtype=float)
    if arr.ndim == 1:
        if arr.size != n:
            raise DimensionError(f"constant source of length {arr.size} on {n} nodes")
        return np.broadcast_to(arr, (tg.n_steps + 1, n))
    if arr.shape != (tg.n_steps + 1, n):
        raise DimensionError(f"source of shape {arr.shape}, expected {(tg.n_steps + 1, n)}")
    return arr


def solve_forward(op: DiscreteOperator, y0, source, tg: TimeGrid,
                  lu: TridiagonalLU | None = None) -> Trajectory:
    """Implicit Euler for ``y' + A y = source``; returns ``y_0 .. y_M``."""
    y0 = np.asarray(y0, dtype=float)
    n = op.n
    if y0.shape != (n,):
        raise DimensionError(f"initial state of length {y0.size} on {n} nodes")
    src = _source_array(source, tg, n)
    lu = lu or op.shifted(tg.dt)
    dt = tg.dt
    y = np.empty((tg.n_steps + 1, n))
    y[0] = y0
    for k in range(tg.n_steps):
        rhs = y[k] if src is None else y[k] + dt * src[k]
        y[k + 1] = lu.solve(rhs)
    return Trajectory(y, tg, op.grid)


def solve_backward(op_adj: DiscreteOperator, terminal, source, tg: TimeGrid,
                   lu: TridiagonalLU | None = None) -> Trajectory:
    """Implicit Euler backwards for ``-psi' + A^T psi = source``, ``psi(T) = terminal``.

    ``lu`` may be the factorisation of the *primal* ``I + dt A``; it is then
    applied transposed, which is how the optimisation code shares one factor.
    """
    n = op_adj.n
    terminal = np.zeros(n) if terminal is None else np.asarray(terminal, dtype=float)
    if terminal.shape != (n,):
        raise DimensionError(f"terminal state of length {terminal.size} on {n} nodes")
    src = _source_array(source, tg, n)
    transpose = lu is not None
    lu = lu or op_adj.shifted(tg.dt)
    dt = tg.dt
    psi = np.empty((tg.n_steps + 1, n))
    psi[-1] = terminal
    for k in range(tg.n_steps - 1, -1, -1):
        rhs = psi[k + 1] if src is None else psi[k + 1] + dt * src[k + 1]
        psi[k] = lu.solve(rhs, transpose=transpose)
    return Trajectory(psi, tg, op_adj.grid)


def write_trajectory_csv(path, fields: dict[str, Trajectory]) -> Path:
    """Long-format CSV ``t, x, <field>...`` with one row per (time, interior node)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    first = next(iter(fields.values()))
    t = first.timegrid.times
    x = first.grid.interior
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", *fields.keys()])
        cols = [tr.values for tr in fields.values()]
        for k, tk in enumerate(t):
            for i, xi in enumerate(x):
                w.writerow([repr(float(tk)), repr(float(xi)), *(repr(float(c[k, i])) for c in cols)])
    return path
