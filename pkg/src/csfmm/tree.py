"""Cubed-sphere quadtree over a particle set.

Clusters are stored in flat arrays in breadth-first order, so every level
occupies a contiguous block of ids and children always come after their
parent.  Particles are permuted so that each cluster owns the contiguous
slice ``start[c]:end[c]`` of the tree-ordered arrays.

Proxy points of cluster ``c`` are the tensor Chebyshev points of its
(possibly shrunk) ``(xi, eta)`` rectangle, flattened with the ``xi`` index
varying slowest: ``k = k1 * (n + 1) + k2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, DimensionMismatchError, EmptyTreeError
from .geometry import QUARTER_PI, face_project, face_unproject
from .interpolation import bary_basis_1d, chebyshev_nodes

MAX_DEPTH = 40
MIN_HALF_WIDTH = 1e-10


def default_leaf_size(degree: int) -> int:
    return 4 * degree * degree


@dataclass
class ParticleSet:
    """Points on the unit sphere with quadrature weights ``w_j = f(x_j) A_j``.

    ``areas`` and ``fields`` are optional; ``fields`` holds extra per-particle
    channels (tracer, vorticity, ...).
    """

    positions: np.ndarray
    weights: np.ndarray | None = None
    areas: np.ndarray | None = None
    fields: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.atleast_2d(np.asarray(self.positions, dtype=float)))
        if self.positions.shape[-1] != 3:
            raise DimensionMismatchError(f"positions must have shape (N, 3), got {self.positions.shape}")
        n = len(self.positions)
        if self.weights is None:
            self.weights = np.zeros(n) if self.areas is None else np.asarray(self.areas, dtype=float).copy()
        self.weights = np.asarray(self.weights, dtype=float)
        for name, arr in [("weights", self.weights), ("areas", self.areas), *self.fields.items()]:
            if arr is not None and len(arr) != n:
                raise DimensionMismatchError(f"{name} has length {len(arr)}, expected {n}")

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def from_grid(cls, grid, values=None) -> "ParticleSet":
        areas = np.asarray(grid.areas, dtype=float)
        w = areas.copy() if values is None else np.asarray(values, dtype=float) * areas
        return cls(np.asarray(grid.centers), w, areas)


@dataclass
class ClusterTree:
    degree: int
    leaf_size: int
    shrink: bool
    # per particle, tree order
    perm: np.ndarray            # tree index -> input index
    pos: np.ndarray             # (N, 3)
    face_of: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    # per cluster
    start: np.ndarray
    end: np.ndarray
    parent: np.ndarray
    children: np.ndarray        # (M, 4), -1 padded
    nchild: np.ndarray
    level: np.ndarray
    face: np.ndarray
    bounds: np.ndarray          # (M, 4): xi_lo, xi_hi, eta_lo, eta_hi
    center: np.ndarray          # (M, 3)
    radius: np.ndarray
    proxy_pos: np.ndarray       # (M, P, 3)
    level_offsets: np.ndarray   # clusters of level l are level_offsets[l]:level_offsets[l+1]
    # interpolation data
    leaf_bx: np.ndarray = None  # (N, n+1) xi-basis of each particle in its leaf
    leaf_by: np.ndarray = None
    transfer_x: np.ndarray = None  # (M, n+1, n+1): parent xi-basis at child nodes
    transfer_y: np.ndarray = None

    @property
    def num_clusters(self) -> int:
        return len(self.start)

    @property
    def num_particles(self) -> int:
        return len(self.perm)

    @property
    def num_proxy(self) -> int:
        return (self.degree + 1) ** 2

    @property
    def counts(self) -> np.ndarray:
        return self.end - self.start

    @property
    def depth(self) -> int:
        return len(self.level_offsets) - 2

    def is_leaf(self, c: int) -> bool:
        return self.nchild[c] == 0

    def leaves(self) -> np.ndarray:
        return np.flatnonzero((self.nchild == 0) & (self.counts > 0))

    def to_tree_order(self, values):
        return np.asarray(values)[self.perm]

    def to_input_order(self, values):
        values = np.asarray(values)
        out = np.empty_like(values)
        out[self.perm] = values
        return out

    def stats(self) -> dict:
        leaves = self.leaves()
        sizes = self.counts[leaves]
        hist, edges = np.histogram(sizes, bins=min(10, max(1, len(np.unique(sizes)))))
        return {
            "num_particles": int(self.num_particles),
            "num_clusters": int(self.num_clusters),
            "num_leaves": int(len(leaves)),
            "depth": int(self.depth),
            "degree": int(self.degree),
            "leaf_size": int(self.leaf_size),
            "leaf_min": int(sizes.min()) if len(sizes) else 0,
            "leaf_max": int(sizes.max()) if len(sizes) else 0,
            "leaf_mean": float(sizes.mean()) if len(sizes) else 0.0,
            "leaf_histogram": {"counts": hist.tolist(), "edges": edges.tolist()},
        }


def _shrunk(xi, eta):
    lo_x, hi_x = xi.min(), xi.max()
    lo_y, hi_y = eta.min(), eta.max()
    mx, my = 0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y)
    hx = max(0.5 * (hi_x - lo_x), MIN_HALF_WIDTH)
    hy = max(0.5 * (hi_y - lo_y), MIN_HALF_WIDTH)
    return (mx - hx, mx + hx, my - hy, my + hy)


def build_tree(particles, degree: int = 6, leaf_size: int | None = None, shrink: bool = True) -> ClusterTree:
    """Build the six-rooted quadtree.

    ``particles`` is a :class:`ParticleSet` or an ``(N, 3)`` array.  Clusters
    holding more than ``leaf_size`` particles (default ``4 n**2``) are split
    at the midpoint of their rectangle; empty children are dropped.  With
    ``shrink`` every rectangle is tightened to its particles' bounding box
    before the next split and before proxy points are placed.
    """
    pos = particles.positions if isinstance(particles, ParticleSet) else np.asarray(particles, dtype=float)
    pos = np.ascontiguousarray(np.atleast_2d(pos))
    if len(pos) == 0:
        raise EmptyTreeError("cannot build a tree over zero particles")
    if degree < 1:
        raise ConfigurationError("interpolation degree must be >= 1")
    if leaf_size is None:
        leaf_size = default_leaf_size(degree)
    if leaf_size < 1:
        raise ConfigurationError("leaf size N0 must be >= 1")

    face_in, xi_in, eta_in = face_project(pos)
    order = np.argsort(face_in, kind="stable")
    face_sorted = face_in[order]
    face_starts = np.searchsorted(face_sorted, np.arange(7))

    perm = order.copy()
    xi = xi_in[perm]
    eta = eta_in[perm]

    start, end, parent, level, face, bounds = [], [], [], [], [], []
    children = []

    def add(s, e, p, lev, f, b):
        start.append(s), end.append(e), parent.append(p), level.append(lev), face.append(f), bounds.append(b)
        children.append([])
        return len(start) - 1

    full = (-QUARTER_PI, QUARTER_PI, -QUARTER_PI, QUARTER_PI)
    for f in range(6):
        s, e = int(face_starts[f]), int(face_starts[f + 1])
        b = _shrunk(xi[s:e], eta[s:e]) if (shrink and e > s) else full
        add(s, e, -1, 0, f, b)

    level_offsets = [0]
    frontier = list(range(6))
    lev = 0
    while frontier:
        level_offsets.append(level_offsets[-1] + len(frontier))
        nxt = []
        for c in frontier:
            s, e = start[c], end[c]
            if e - s <= leaf_size or lev >= MAX_DEPTH:
                continue
            x0, x1, y0, y1 = bounds[c]
            mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            q = 2 * (xi[s:e] >= mx) + (eta[s:e] >= my)
            local = np.argsort(q, kind="stable")
            perm[s:e] = perm[s:e][local]
            xi[s:e] = xi[s:e][local]
            eta[s:e] = eta[s:e][local]
            cuts = s + np.searchsorted(q[local], np.arange(5))
            quads = [(x0, mx, y0, my), (x0, mx, my, y1), (mx, x1, y0, my), (mx, x1, my, y1)]
            for qi in range(4):
                cs, ce = int(cuts[qi]), int(cuts[qi + 1])
                if ce == cs:
                    continue
                b = _shrunk(xi[cs:ce], eta[cs:ce]) if shrink else quads[qi]
                child = add(cs, ce, c, lev + 1, face[c], b)
                children[c].append(child)
                nxt.append(child)
        frontier = nxt
        lev += 1

    m = len(start)
    ch = np.full((m, 4), -1, dtype=np.int64)
    for c, lst in enumerate(children):
        ch[c, : len(lst)] = lst
    tree = ClusterTree(
        degree=int(degree),
        leaf_size=int(leaf_size),
        shrink=bool(shrink),
        perm=perm,
        pos=np.ascontiguousarray(pos[perm]),
        face_of=face_in[perm].astype(np.int64),
        xi=xi,
        eta=eta,
        start=np.asarray(start, dtype=np.int64),
        end=np.asarray(end, dtype=np.int64),
        parent=np.asarray(parent, dtype=np.int64),
        children=ch,
        nchild=(ch >= 0).sum(axis=1).astype(np.int64),
        level=np.asarray(level, dtype=np.int64),
        face=np.asarray(face, dtype=np.int64),
        bounds=np.asarray(bounds, dtype=float),
        center=np.empty((m, 3)),
        radius=np.zeros(m),
        proxy_pos=np.empty((m, (degree + 1) ** 2, 3)),
        level_offsets=np.asarray(level_offsets, dtype=np.int64),
    )
    _attach_geometry(tree)
    _attach_interpolation(tree)
    return tree


def _attach_geometry(tree: ClusterTree) -> None:
    b = tree.bounds
    mid_x = 0.5 * (b[:, 0] + b[:, 1])
    mid_y = 0.5 * (b[:, 2] + b[:, 3])
    tree.center[:] = face_unproject(tree.face, mid_x, mid_y)
    _radii(tree.start, tree.end, tree.center, tree.pos, tree.radius)

    s = chebyshev_nodes(tree.degree)
    px = mid_x[:, None] + 0.5 * (b[:, 1] - b[:, 0])[:, None] * s
    py = mid_y[:, None] + 0.5 * (b[:, 3] - b[:, 2])[:, None] * s
    PX = np.broadcast_to(px[:, :, None], px.shape + (len(s),))
    PY = np.broadcast_to(py[:, None, :], py.shape[:1] + (len(s), len(s)))
    m = tree.num_clusters
    fc = np.broadcast_to(tree.face[:, None], (m, len(s) ** 2))
    tree.proxy_pos[:] = face_unproject(fc.ravel(), PX.reshape(-1), PY.reshape(-1)).reshape(m, -1, 3)


@njit(cache=True)
def _radii(start, end, center, pos, out):
    for c in range(start.shape[0]):
        r2 = 0.0
        for j in range(start[c], end[c]):
            dx = pos[j, 0] - center[c, 0]
            dy = pos[j, 1] - center[c, 1]
            dz = pos[j, 2] - center[c, 2]
            d = dx * dx + dy * dy + dz * dz
            if d > r2:
                r2 = d
        out[c] = math.sqrt(r2)


def _reference(bounds, xi, eta):
    hx = 0.5 * (bounds[..., 1] - bounds[..., 0])
    hy = 0.5 * (bounds[..., 3] - bounds[..., 2])
    u = (xi - 0.5 * (bounds[..., 0] + bounds[..., 1])) / hx
    v = (eta - 0.5 * (bounds[..., 2] + bounds[..., 3])) / hy
    return u, v


def _attach_interpolation(tree: ClusterTree) -> None:
    n = tree.degree
    s = chebyshev_nodes(n)
    # leaf basis per particle
    owner = np.empty(tree.num_particles, dtype=np.int64)
    for c in tree.leaves():
        owner[tree.start[c] : tree.end[c]] = c
    u, v = _reference(tree.bounds[owner], tree.xi, tree.eta)
    tree.leaf_bx = np.ascontiguousarray(bary_basis_1d(n, u))
    tree.leaf_by = np.ascontiguousarray(bary_basis_1d(n, v))

    # parent basis evaluated at each child's 1D nodes
    m = tree.num_clusters
    tx = np.zeros((m, n + 1, n + 1))
    ty = np.zeros((m, n + 1, n + 1))
    kids = np.flatnonzero(tree.parent >= 0)
    if len(kids):
        cb = tree.bounds[kids]
        pb = tree.bounds[tree.parent[kids]]
        node_x = 0.5 * (cb[:, 0] + cb[:, 1])[:, None] + 0.5 * (cb[:, 1] - cb[:, 0])[:, None] * s
        node_y = 0.5 * (cb[:, 2] + cb[:, 3])[:, None] + 0.5 * (cb[:, 3] - cb[:, 2])[:, None] * s
        u, v = _reference(pb[:, None, :], node_x, node_y)
        tx[kids] = bary_basis_1d(n, u)
        ty[kids] = bary_basis_1d(n, v)
    tree.transfer_x = tx
    tree.transfer_y = ty


# ---------------------------------------------------------------------------
# upward pass


@njit(cache=True)
def _leaf_weights(leaves, start, end, bx, by, w, out):
    n1 = bx.shape[1]
    for li in range(leaves.shape[0]):
        c = leaves[li]
        for j in range(start[c], end[c]):
            wj = w[j]
            for a in range(n1):
                t = bx[j, a] * wj
                for b in range(n1):
                    out[c, a * n1 + b] += t * by[j, b]


@njit(cache=True)
def _m2m(lo, hi, parent, tx, ty, W):
    # W_p[k1, k2] += sum_ab tx[c, a, k1] ty[c, b, k2] W_c[a, b]
    n1 = tx.shape[1]
    tmp = np.empty((n1, n1))
    for c in range(lo, hi):
        p = parent[c]
        if p < 0:
            continue
        for a in range(n1):
            for k2 in range(n1):
                acc = 0.0
                for b in range(n1):
                    acc += ty[c, b, k2] * W[c, a * n1 + b]
                tmp[a, k2] = acc
        for k1 in range(n1):
            for k2 in range(n1):
                acc = 0.0
                for a in range(n1):
                    acc += tx[c, a, k1] * tmp[a, k2]
                W[p, k1 * n1 + k2] += acc


def upward_pass(tree: ClusterTree, weights, tree_order: bool = False) -> np.ndarray:
    """Proxy weights ``(M, (n+1)**2)`` of every cluster.

    Leaves are computed directly from their particles, parents from their
    children through the nested-interpolation identity.  ``weights`` are in
    input order unless ``tree_order`` is set.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (tree.num_particles,):
        raise DimensionMismatchError(f"weights must have shape ({tree.num_particles},), got {w.shape}")
    if not tree_order:
        w = w[tree.perm]
    W = np.zeros((tree.num_clusters, tree.num_proxy))
    _leaf_weights(tree.leaves(), tree.start, tree.end, tree.leaf_bx, tree.leaf_by, np.ascontiguousarray(w), W)
    offs = tree.level_offsets
    for lev in range(len(offs) - 2, 0, -1):
        _m2m(offs[lev], offs[lev + 1], tree.parent, tree.transfer_x, tree.transfer_y, W)
    return W


# ---------------------------------------------------------------------------
# downward pass


@njit(cache=True)
def _l2l(lo, hi, parent, tx, ty, Phi):
    # Phi_c[a, b] += sum_k tx[c, a, k1] ty[c, b, k2] Phi_p[k1, k2]
    n1 = tx.shape[1]
    dim = Phi.shape[2]
    tmp = np.empty((n1, n1))
    for c in range(lo, hi):
        p = parent[c]
        if p < 0:
            continue
        for d in range(dim):
            for a in range(n1):
                for k2 in range(n1):
                    acc = 0.0
                    for k1 in range(n1):
                        acc += tx[c, a, k1] * Phi[p, k1 * n1 + k2, d]
                    tmp[a, k2] = acc
            for a in range(n1):
                for b in range(n1):
                    acc = 0.0
                    for k2 in range(n1):
                        acc += ty[c, b, k2] * tmp[a, k2]
                    Phi[c, a * n1 + b, d] += acc


@njit(cache=True)
def _l2p(clusters, start, end, bx, by, Phi, out):
    n1 = bx.shape[1]
    dim = Phi.shape[2]
    for ci in range(clusters.shape[0]):
        c = clusters[ci]
        for j in range(start[c], end[c]):
            for d in range(dim):
                acc = 0.0
                for a in range(n1):
                    t = 0.0
                    for b in range(n1):
                        t += by[j, b] * Phi[c, a * n1 + b, d]
                    acc += bx[j, a] * t
                out[j, d] += acc


def downward_pass(tree: ClusterTree, proxy_potentials, tree_order: bool = False) -> np.ndarray:
    """Push proxy potentials ``(M, P)`` or ``(M, P, dim)`` down to particles.

    Parents are interpolated onto child proxy points level by level, then
    every leaf interpolates onto its particles.  Returns ``(N,)`` or
    ``(N, dim)`` in input order unless ``tree_order`` is set.  The input is
    not modified.
    """
    Phi = np.array(proxy_potentials, dtype=float)
    scalar = Phi.ndim == 2
    if scalar:
        Phi = Phi[:, :, None]
    if Phi.shape[:2] != (tree.num_clusters, tree.num_proxy):
        raise DimensionMismatchError(f"proxy potentials must have leading shape {(tree.num_clusters, tree.num_proxy)}")
    Phi = np.ascontiguousarray(Phi)
    offs = tree.level_offsets
    for lev in range(1, len(offs) - 1):
        _l2l(offs[lev], offs[lev + 1], tree.parent, tree.transfer_x, tree.transfer_y, Phi)
    out = np.zeros((tree.num_particles, Phi.shape[2]))
    _l2p(tree.leaves(), tree.start, tree.end, tree.leaf_bx, tree.leaf_by, Phi, out)
    if not tree_order:
        out = tree.to_input_order(out)
    return out[:, 0] if scalar else out


def interpolate_direct(tree: ClusterTree, proxy_potentials, tree_order: bool = False) -> np.ndarray:
    """Interpolate every cluster's proxy potentials straight to its own
    particles, without the level-by-level transfer.

    Mathematically identical to :func:`downward_pass`; kept as a check.
    """
    Phi = np.array(proxy_potentials, dtype=float)
    scalar = Phi.ndim == 2
    if scalar:
        Phi = Phi[:, :, None]
    n = tree.degree
    out = np.zeros((tree.num_particles, Phi.shape[2]))
    for c in np.flatnonzero(np.any(Phi != 0.0, axis=(1, 2))):
        s, e = tree.start[c], tree.end[c]
        if e == s:
            continue
        u, v = _reference(tree.bounds[c], tree.xi[s:e], tree.eta[s:e])
        bx = bary_basis_1d(n, u)
        by = bary_basis_1d(n, v)
        L = (bx[:, :, None] * by[:, None, :]).reshape(e - s, -1)
        out[s:e] += L @ Phi[c]
    if not tree_order:
        out = tree.to_input_order(out)
    return out[:, 0] if scalar else out
