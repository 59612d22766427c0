"""Barycentric Lagrange interpolation at Chebyshev points of the second kind,
in 1D and as a tensor product over cubed-sphere cells.

Cells are rectangles in the equiangular ``(xi, eta)`` coordinates of one
cube face.  The reference square ``[-1, 1]^2`` maps onto a cell affinely in
each coordinate, so the inverse map is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import OutOfCellError
from .geometry import face_axes, face_project, face_unproject

NODE_TOL = 1e-14
CELL_SLACK = 1e-12


@lru_cache(maxsize=None)
def _cheb(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n + 1)
    nodes = np.cos(k * np.pi / n)
    nodes[np.abs(nodes) < 1e-15] = 0.0
    w = (-1.0) ** k
    w[0] *= 0.5
    w[-1] *= 0.5
    nodes.setflags(write=False)
    w.setflags(write=False)
    return nodes, w


@dataclass(frozen=True)
class ChebyshevGrid1D:
    degree: int
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("interpolation degree must be >= 1")
        nodes, w = _cheb(self.degree)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)


def chebyshev_nodes(n: int) -> np.ndarray:
    return _cheb(n)[0]


def bary_weights(n: int) -> np.ndarray:
    return _cheb(n)[1]


def bary_basis_1d(grid: ChebyshevGrid1D | int, x) -> np.ndarray:
    """All Lagrange basis values ``L_k(x)``, ``k = 0..n``.

    ``x`` may be scalar (returns shape ``(n+1,)``) or an array (returns
    ``x.shape + (n+1,)``).  Points within ``1e-14`` of a node return the
    corresponding unit vector.
    """
    if not isinstance(grid, ChebyshevGrid1D):
        grid = ChebyshevGrid1D(int(grid))
    x = np.asarray(x, dtype=float)
    diff = x[..., None] - grid.nodes
    hit = np.abs(diff) < NODE_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        q = grid.weights / diff
        L = q / q.sum(axis=-1, keepdims=True)
    rows = hit.any(axis=-1)
    if rows.any():
        L[rows] = 0.0
        # first matching node wins; nodes are well separated so there is one
        L[rows, np.argmax(hit[rows], axis=-1)] = 1.0
    return L


@njit(cache=True)
def basis_1d_into(x, nodes, w, out):
    """Scalar barycentric basis written into ``out`` (numba)."""
    m = nodes.shape[0]
    for k in range(m):
        if abs(x - nodes[k]) < 1e-14:
            for j in range(m):
                out[j] = 0.0
            out[k] = 1.0
            return
    s = 0.0
    for k in range(m):
        v = w[k] / (x - nodes[k])
        out[k] = v
        s += v
    for k in range(m):
        out[k] /= s


class CellInterpolant:
    """Tensor-product Chebyshev interpolation on one cubed-sphere cell.

    Parameters
    ----------
    face : int
        Cube face the cell lies on.
    bounds : (xi_lo, xi_hi, eta_lo, eta_hi)
        Cell rectangle in local angle coordinates.
    degree : int
        Polynomial degree ``n`` per axis; the cell carries ``(n+1)**2``
        proxy points ordered with the ``xi`` index varying slowest.
    """

    def __init__(self, face: int, bounds, degree: int):
        self.face = int(face)
        self.bounds = tuple(float(b) for b in bounds)
        self.grid = ChebyshevGrid1D(degree)
        xi_lo, xi_hi, eta_lo, eta_hi = self.bounds
        self.xi_mid, self.xi_half = 0.5 * (xi_lo + xi_hi), 0.5 * (xi_hi - xi_lo)
        self.eta_mid, self.eta_half = 0.5 * (eta_lo + eta_hi), 0.5 * (eta_hi - eta_lo)
        s = self.grid.nodes
        XI, ETA = np.meshgrid(self.xi_mid + self.xi_half * s, self.eta_mid + self.eta_half * s, indexing="ij")
        self.proxy_xi = XI.ravel()
        self.proxy_eta = ETA.ravel()
        self.proxy_points = face_unproject(np.full(XI.size, self.face), self.proxy_xi, self.proxy_eta)

    @property
    def degree(self) -> int:
        return self.grid.degree

    def to_reference(self, xi, eta):
        return (np.asarray(xi) - self.xi_mid) / self.xi_half, (np.asarray(eta) - self.eta_mid) / self.eta_half

    def basis_local(self, xi, eta) -> np.ndarray:
        """Tensor basis at local coordinates, shape ``(..., (n+1)**2)``."""
        u, v = self.to_reference(xi, eta)
        bx = bary_basis_1d(self.grid, u)
        by = bary_basis_1d(self.grid, v)
        return (bx[..., :, None] * by[..., None, :]).reshape(bx.shape[:-1] + (-1,))

    def contains(self, face, xi, eta) -> np.ndarray:
        xi_lo, xi_hi, eta_lo, eta_hi = self.bounds
        return (
            (np.asarray(face) == self.face)
            & (xi >= xi_lo - CELL_SLACK) & (xi <= xi_hi + CELL_SLACK)
            & (eta >= eta_lo - CELL_SLACK) & (eta <= eta_hi + CELL_SLACK)
        )

    def basis(self, p) -> np.ndarray:
        """Tensor basis at sphere point(s) ``p`` lying in the cell."""
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        face, xi, eta = face_project(np.atleast_2d(p))
        inside = self.contains(face, xi, eta)
        if not inside.all():
            # seam points may have been assigned to a lower face id; retry
            # with this face's own chart before giving up
            xi, eta, ok = _chart_coords(np.atleast_2d(p), self.face)
            inside = ok & self.contains(self.face, xi, eta)
            if not inside.all():
                raise OutOfCellError(f"{int((~inside).sum())} point(s) outside cell {self.bounds} on face {self.face}")
        L = self.basis_local(xi, eta)
        return L[0] if single else L

    def interpolate(self, values, p):
        """Evaluate the interpolant with proxy-point ``values`` at ``p``."""
        return self.basis(p) @ np.asarray(values)


def bary_basis_2d(interp: CellInterpolant, p) -> np.ndarray:
    return interp.basis(p)


def _chart_coords(p: np.ndarray, face: int):
    """Local angles of ``p`` in a given face's chart (valid on its hemisphere)."""
    c, ex, ey = face_axes(face)
    d = p @ c
    ok = d > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.arctan((p @ ex) / d)
        eta = np.arctan((p @ ey) / d)
    return xi, eta, ok
