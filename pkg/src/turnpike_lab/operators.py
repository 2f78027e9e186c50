"""Tridiagonal discretisation of the elliptic operator and its adjoint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .exceptions import DimensionError, SingularSystemError
from .grid_coeff import CoefficientField, ControlWindow, Grid

PIVOT_TOL = 1e-13
WELLPOSED_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteOperator:
    """Tridiagonal matrix acting on interior-node values.

    ``lower[j]`` is entry ``(j+1, j)``, ``upper[j]`` is entry ``(j, j+1)``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    grid: Grid
    window: ControlWindow | None = None
    is_adjoint: bool = False

    @property
    def n(self) -> int:
        return self.diag.size

    # kept for readers who think in terms of sub/sup diagonals
    @property
    def sub(self) -> np.ndarray:
        return self.lower

    @property
    def sup(self) -> np.ndarray:
        return self.upper

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n:
            raise DimensionError(f"vector of length {u.shape[0]} on operator of size {self.n}")
        out = self.diag.reshape((-1,) + (1,) * (u.ndim - 1)) * u
        lo = self.lower.reshape((-1,) + (1,) * (u.ndim - 1))
        up = self.upper.reshape((-1,) + (1,) * (u.ndim - 1))
        out[1:] += lo * u[:-1]
        out[:-1] += up * u[1:]
        return out

    __matmul__ = matvec

    def transpose(self) -> "DiscreteOperator":
        return DiscreteOperator(self.upper, self.diag, self.lower, self.grid, self.window, not self.is_adjoint)

    @property
    def T(self) -> "DiscreteOperator":
        return self.transpose()

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def shifted(self, dt: float) -> "TridiagonalLU":
        """Factorisation of ``I + dt * self``."""
        return TridiagonalLU(dt * self.lower, 1.0 + dt * self.diag, dt * self.upper)

    def factorize(self) -> "TridiagonalLU":
        return TridiagonalLU(self.lower, self.diag, self.upper)

    @property
    def mask(self) -> np.ndarray:
        if self.window is None:
            return np.ones(self.n)
        return self.window.mask


class TridiagonalLU:
    """LAPACK ``gttrf`` factorisation supporting plain and transposed solves."""

    def __init__(self, lower, diag, upper):
        self.n = len(diag)
        if self.n == 1:
            # gttrf rejects the 1x1 case
            self._scalar = float(diag[0])
            if self._scalar == 0.0:
                raise SingularSystemError("tridiagonal matrix is singular (zero pivot at row 1)")
            return
        self._scalar = None
        dl, d, du, du2, ipiv, info = lapack.dgttrf(
            np.array(lower, dtype=float), np.array(diag, dtype=float), np.array(upper, dtype=float)
        )
        if info > 0:
            raise SingularSystemError(f"tridiagonal matrix is singular (zero pivot at row {info})")
        self._factors = (dl, d, du, du2, ipiv)

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self._scalar is not None:
            return rhs / self._scalar
        b = rhs.reshape(self.n, -1)
        x, info = lapack.dgttrs(*self._factors, b, trans="T" if transpose else "N")
        if info != 0:
            raise SingularSystemError(f"dgttrs failed with info={info}")
        return x.reshape(rhs.shape)


def assemble(coeffs: CoefficientField, grid: Grid | None = None, adjoint: bool = False,
             window: ControlWindow | None = None) -> DiscreteOperator:
    """Conservative 3-point diffusion, centred advection, nodal reaction.

    The adjoint is the exact transpose, which is the conservative centred
    discretisation of ``-(a u')' - (b u)' + p u``.
    """
    grid = grid or coeffs.grid
    if coeffs.a_interface.size != grid.n_cells or coeffs.b_node.size != grid.n_interior \
            or coeffs.p_node.size != grid.n_interior:
        raise DimensionError("coefficient field does not match grid")
    if window is not None and window.mask.size != grid.n_interior:
        raise DimensionError("control window does not match grid")
    dx = grid.dx
    a = coeffs.a_interface
    b = coeffs.b_node
    diag = (a[:-1] + a[1:]) / dx**2 + coeffs.p_node
    # row j couples to j-1 via a_{j-1/2} and to j+1 via a_{j+1/2}
    lower = -a[1:-1] / dx**2 - b[1:] / (2 * dx)
    upper = -a[1:-1] / dx**2 + b[:-1] / (2 * dx)
    op = DiscreteOperator(lower, diag, upper, grid, window, False)
    return op.transpose() if adjoint else op


def l2_inner(u, v, grid: Grid) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape[-1] != grid.n_interior:
        raise DimensionError(f"grid functions of shapes {u.shape}, {v.shape} on {grid.n_interior} nodes")
    return float(np.dot(u, v) * grid.dx)


def l2_norm(u, grid: Grid) -> float:
    return float(np.sqrt(l2_inner(u, u, grid)))


def thomas_solve(lower, diag, upper, rhs, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Thomas algorithm without pivoting.

    Raises ``SingularSystemError`` when a pivot falls below ``pivot_tol``
    relative to the largest diagonal magnitude.
    """
    n = len(diag)
    scale = float(np.max(np.abs(diag)))
    c = np.empty(n - 1)
    d = np.empty((n,) + np.shape(rhs)[1:])
    rhs = np.asarray(rhs, dtype=float)
    piv = diag[0]
    min_piv = abs(piv)
    if abs(piv) <= pivot_tol * scale:
        raise SingularSystemError(f"pivot {piv:.3e} at row 0 below tolerance")
    c[0] = upper[0] / piv
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i - 1] * c[i - 1]
        min_piv = min(min_piv, abs(piv))
        if abs(piv) <= pivot_tol * scale:
            raise SingularSystemError(f"pivot {piv:.3e} at row {i} below tolerance (system near-singular)")
        if i < n - 1:
            c[i] = upper[i] / piv
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / piv
    x = d
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - c[i] * x[i + 1]
    return x


def elliptic_solve(op: DiscreteOperator, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != op.n:
        raise DimensionError(f"rhs of length {rhs.shape[0]} on operator of size {op.n}")
    return thomas_solve(op.lower, op.diag, op.upper, rhs)


def check_wellposedness(op_adjoint: DiscreteOperator, tol: float = 1e-13, max_iter: int = 1000) -> float:
    """Smallest singular value of ``op_adjoint`` by inverse power iteration on ``M M^T``."""
    try:
        lu = op_adjoint.factorize()
    except SingularSystemError:
        return 0.0
    rng = np.random.default_rng(0)
    w = rng.standard_normal(op_adjoint.n)
    w /= np.linalg.norm(w)
    lam = np.inf
    for _ in range(max_iter):
        # z = (M M^T)^{-1} w
        z = lu.solve(lu.solve(w), transpose=True)
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz == 0:
            return 0.0
        new = 1.0 / nz
        w = z / nz
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))
