"""Direct, treecode (CSTC) and dual-traversal FMM (CSFMM) evaluation of

    phi(x_i) = sum_j K(x_i, y_j) w_j

on the sphere.  All evaluation loops run in numba; parallel work is split
by target (particle or target cluster), so every output entry is written by
exactly one worker in a fixed order and results do not depend on the thread
count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from numba import njit, prange

from .errors import ConfigurationError, DimensionMismatchError, UnknownMethodError
from .kernels import BIHARMONIC, COINCIDENCE_TOL, Kernel, get_kernel, kernel_eval
from .tree import MAX_DEPTH, ClusterTree, ParticleSet, build_tree, default_leaf_size, downward_pass, upward_pass

METHODS = ("direct", "cstc", "csfmm")
PP, PC, CP, CC = 0, 1, 2, 3
INTERACTION_NAMES = ("PP", "PC", "CP", "CC")


@dataclass(frozen=True)
class TraversalConfig:
    mac: float = 0.7
    degree: int = 6
    leaf_size: int | None = None
    method: str = "csfmm"
    shrink: bool = True
    mutual_pp: bool = True

    def __post_init__(self):
        if not (0.0 < self.mac <= 1.0):
            raise ConfigurationError(f"MAC must lie in (0, 1], got {self.mac}")
        if self.degree < 1:
            raise ConfigurationError(f"degree must be >= 1, got {self.degree}")
        if self.leaf_size is not None and self.leaf_size < 1:
            raise ConfigurationError(f"leaf size must be >= 1, got {self.leaf_size}")
        if str(self.method).lower() not in METHODS:
            raise UnknownMethodError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        object.__setattr__(self, "method", str(self.method).lower())

    @property
    def n0(self) -> int:
        return default_leaf_size(self.degree) if self.leaf_size is None else int(self.leaf_size)


@dataclass
class SumResult:
    potential: np.ndarray
    method: str
    timings: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    tree_stats: dict | None = None

    def report(self) -> dict:
        return {
            "method": self.method,
            "N_targets": int(len(self.potential)),
            "timings": {k: float(v) for k, v in self.timings.items()},
            "interactions": {k: int(v) for k, v in self.counts.items()},
            "tree": self.tree_stats,
        }


def set_threads(k: int | None) -> None:
    if k is not None:
        numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# MAC tests


def well_separated_pc(target, center, radius: float, mac: float) -> bool:
    """Treecode test ``r / R < mac`` with ``R = |x - c|``; ``R = 0`` never passes."""
    R = float(np.linalg.norm(np.asarray(target, dtype=float) - np.asarray(center, dtype=float)))
    return R > 0.0 and radius < mac * R


def well_separated_cc(center_t, radius_t: float, center_s, radius_s: float, mac: float) -> bool:
    """Dual-traversal test ``(r_t + r_s) / R < mac`` between cluster centers."""
    R = float(np.linalg.norm(np.asarray(center_t, dtype=float) - np.asarray(center_s, dtype=float)))
    return R > 0.0 and radius_t + radius_s < mac * R


# ---------------------------------------------------------------------------
# numba loops


@njit(parallel=True, cache=True)
def _direct(kind, prm, skip, tpos, spos, w, out):
    for i in prange(tpos.shape[0]):
        x0, x1, x2 = tpos[i, 0], tpos[i, 1], tpos[i, 2]
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for j in range(spos.shape[0]):
            y0, y1, y2 = spos[j, 0], spos[j, 1], spos[j, 2]
            if skip:
                dx = x0 - y0
                dy = x1 - y1
                dz = x2 - y2
                if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                    continue
            v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
            a0 += v0 * w[j]
            a1 += v1 * w[j]
            a2 += v2 * w[j]
        out[i, 0] = a0
        out[i, 1] = a1
        out[i, 2] = a2


@njit(cache=True)
def _dist(a0, a1, a2, b0, b1, b2):
    dx = a0 - b0
    dy = a1 - b1
    dz = a2 - b2
    return math.sqrt(dx * dx + dy * dy + dz * dz)


_BLOCK = 64


@njit(parallel=True, cache=True)
def _cstc(kind, prm, skip, tpos, spos, w, W, proxy, start, end, children, nchild, center, radius, mac, n0, out, stats):
    nt = tpos.shape[0]
    nblocks = (nt + _BLOCK - 1) // _BLOCK
    nproxy = proxy.shape[1]
    for blk in prange(nblocks):
        stack = np.empty(4 * (MAX_DEPTH + 8), dtype=np.int64)
        npp = 0
        npc = 0
        for i in range(blk * _BLOCK, min(nt, (blk + 1) * _BLOCK)):
            x0, x1, x2 = tpos[i, 0], tpos[i, 1], tpos[i, 2]
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            top = 0
            for r in range(5, -1, -1):
                if end[r] > start[r]:
                    stack[top] = r
                    top += 1
            while top > 0:
                top -= 1
                c = stack[top]
                R = _dist(x0, x1, x2, center[c, 0], center[c, 1], center[c, 2])
                cnt = end[c] - start[c]
                sep = R > 0.0 and radius[c] < mac * R
                if sep and cnt > n0:
                    npc += 1
                    for k in range(nproxy):
                        y0, y1, y2 = proxy[c, k, 0], proxy[c, k, 1], proxy[c, k, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * W[c, k]
                        a1 += v1 * W[c, k]
                        a2 += v2 * W[c, k]
                elif sep or nchild[c] == 0:
                    npp += 1
                    for j in range(start[c], end[c]):
                        y0, y1, y2 = spos[j, 0], spos[j, 1], spos[j, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * w[j]
                        a1 += v1 * w[j]
                        a2 += v2 * w[j]
                else:
                    for q in range(nchild[c] - 1, -1, -1):
                        stack[top] = children[c, q]
                        top += 1
            out[i, 0] = a0
            out[i, 1] = a1
            out[i, 2] = a2
        stats[blk, 0] = npp
        stats[blk, 1] = npc


@njit(cache=True)
def _push_pair(buf, n, t, s, kind):
    if n == buf.shape[0]:
        nb = np.empty((2 * buf.shape[0], 3), dtype=np.int64)
        nb[:n] = buf[:n]
        buf = nb
    buf[n, 0] = t
    buf[n, 1] = s
    buf[n, 2] = kind
    return buf, n + 1


@njit(cache=True)
def _dual_traversal(t_start, t_end, t_children, t_nchild, t_center, t_radius,
                    s_start, s_end, s_children, s_nchild, s_center, s_radius, mac, n0):
    """Interaction list as rows ``(target cluster, source cluster, type)``."""
    pairs = np.empty((1024, 3), dtype=np.int64)
    npairs = 0
    cap = 64
    st_t = np.empty(cap, dtype=np.int64)
    st_s = np.empty(cap, dtype=np.int64)
    top = 0
    for a in range(5, -1, -1):
        for b in range(5, -1, -1):
            if t_end[a] > t_start[a] and s_end[b] > s_start[b]:
                st_t[top] = a
                st_s[top] = b
                top += 1
    while top > 0:
        top -= 1
        t = st_t[top]
        s = st_s[top]
        nt = t_end[t] - t_start[t]
        ns = s_end[s] - s_start[s]
        R = _dist(t_center[t, 0], t_center[t, 1], t_center[t, 2], s_center[s, 0], s_center[s, 1], s_center[s, 2])
        if R > 0.0 and t_radius[t] + s_radius[s] < mac * R:
            if nt <= n0 and ns <= n0:
                kind = 0
            elif nt <= n0:
                kind = 1
            elif ns <= n0:
                kind = 2
            else:
                kind = 3
            pairs, npairs = _push_pair(pairs, npairs, t, s, kind)
            continue
        split_src = ns >= nt
        if split_src and s_nchild[s] == 0:
            split_src = False
        elif not split_src and t_nchild[t] == 0:
            split_src = True
        if (split_src and s_nchild[s] == 0) or (not split_src and t_nchild[t] == 0):
            pairs, npairs = _push_pair(pairs, npairs, t, s, 0)
            continue
        if top + 4 > cap:
            cap *= 2
            nt_ = np.empty(cap, dtype=np.int64)
            ns_ = np.empty(cap, dtype=np.int64)
            nt_[:top] = st_t[:top]
            ns_[:top] = st_s[:top]
            st_t = nt_
            st_s = ns_
        if split_src:
            for q in range(s_nchild[s] - 1, -1, -1):
                st_t[top] = t
                st_s[top] = s_children[s, q]
                top += 1
        else:
            for q in range(t_nchild[t] - 1, -1, -1):
                st_t[top] = t_children[t, q]
                st_s[top] = s
                top += 1
    return pairs[:npairs]


PP_MUTUAL, PP_SELF = 4, 5


@njit(parallel=True, cache=True)
def _eval_particle_targets(kind, prm, skip, sign, tpos, t_start, t_end, spos, w, W, s_proxy, s_start, s_end,
                           off, src, typ, buf_off, buf, out):
    """PP and PC contributions, grouped by target cluster.

    ``PP_MUTUAL`` rows (shared tree, target id < source id) also write the
    mirrored block ``K(y, x) = sign * K(x, y)`` into ``buf`` so the partner
    pair costs no kernel evaluations; ``PP_SELF`` rows evaluate each
    unordered pair of a cluster once.
    """
    nproxy = s_proxy.shape[1]
    dim = buf.shape[1]
    for t in prange(off.shape[0] - 1):
        if off[t + 1] == off[t]:
            continue
        ts = t_start[t]
        acc = np.zeros((t_end[t] - ts, 3))
        for p in range(off[t], off[t + 1]):
            s = src[p]
            ty = typ[p]
            if ty == PP_SELF:
                for i in range(ts, t_end[t]):
                    x0, x1, x2 = tpos[i, 0], tpos[i, 1], tpos[i, 2]
                    if not skip:
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, x0, x1, x2, prm)
                        acc[i - ts, 0] += v0 * w[i]
                        acc[i - ts, 1] += v1 * w[i]
                        acc[i - ts, 2] += v2 * w[i]
                    for j in range(i + 1, t_end[t]):
                        y0, y1, y2 = tpos[j, 0], tpos[j, 1], tpos[j, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        acc[i - ts, 0] += v0 * w[j]
                        acc[i - ts, 1] += v1 * w[j]
                        acc[i - ts, 2] += v2 * w[j]
                        acc[j - ts, 0] += sign * v0 * w[i]
                        acc[j - ts, 1] += sign * v1 * w[i]
                        acc[j - ts, 2] += sign * v2 * w[i]
                continue
            for i in range(ts, t_end[t]):
                x0, x1, x2 = tpos[i, 0], tpos[i, 1], tpos[i, 2]
                a0 = 0.0
                a1 = 0.0
                a2 = 0.0
                if ty == PC:
                    for k in range(nproxy):
                        y0, y1, y2 = s_proxy[s, k, 0], s_proxy[s, k, 1], s_proxy[s, k, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * W[s, k]
                        a1 += v1 * W[s, k]
                        a2 += v2 * W[s, k]
                elif ty == PP_MUTUAL:
                    b = buf_off[p] - s_start[s]
                    wi = sign * w[i]
                    for j in range(s_start[s], s_end[s]):
                        y0, y1, y2 = spos[j, 0], spos[j, 1], spos[j, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * w[j]
                        a1 += v1 * w[j]
                        a2 += v2 * w[j]
                        buf[b + j, 0] += v0 * wi
                        if dim == 3:
                            buf[b + j, 1] += v1 * wi
                            buf[b + j, 2] += v2 * wi
                else:
                    for j in range(s_start[s], s_end[s]):
                        y0, y1, y2 = spos[j, 0], spos[j, 1], spos[j, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * w[j]
                        a1 += v1 * w[j]
                        a2 += v2 * w[j]
                acc[i - ts, 0] += a0
                acc[i - ts, 1] += a1
                acc[i - ts, 2] += a2
        for i in range(ts, t_end[t]):
            out[i, 0] += acc[i - ts, 0]
            out[i, 1] += acc[i - ts, 1]
            out[i, 2] += acc[i - ts, 2]


@njit(parallel=True, cache=True)
def _gather_mirrored(g_off, g_buf, c_start, c_end, buf, out):
    # add the mirrored PP blocks, grouped by the cluster that receives them
    dim = buf.shape[1]
    for c in prange(g_off.shape[0] - 1):
        cs = c_start[c]
        for q in range(g_off[c], g_off[c + 1]):
            b = g_buf[q] - cs
            for j in range(cs, c_end[c]):
                for d in range(dim):
                    out[j, d] += buf[b + j, d]


@njit(parallel=True, cache=True)
def _eval_proxy_targets(kind, prm, skip, t_proxy, spos, w, W, s_proxy, s_start, s_end, off, src, typ, Phi):
    # CP and CC contributions onto target proxy points
    nproxy_t = t_proxy.shape[1]
    nproxy_s = s_proxy.shape[1]
    for t in prange(off.shape[0] - 1):
        if off[t + 1] == off[t]:
            continue
        for m in range(nproxy_t):
            x0, x1, x2 = t_proxy[t, m, 0], t_proxy[t, m, 1], t_proxy[t, m, 2]
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            for p in range(off[t], off[t + 1]):
                s = src[p]
                if typ[p] == 2:
                    for j in range(s_start[s], s_end[s]):
                        y0, y1, y2 = spos[j, 0], spos[j, 1], spos[j, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * w[j]
                        a1 += v1 * w[j]
                        a2 += v2 * w[j]
                else:
                    for k in range(nproxy_s):
                        y0, y1, y2 = s_proxy[s, k, 0], s_proxy[s, k, 1], s_proxy[s, k, 2]
                        if skip:
                            dx = x0 - y0
                            dy = x1 - y1
                            dz = x2 - y2
                            if 0.5 * (dx * dx + dy * dy + dz * dz) < COINCIDENCE_TOL:
                                continue
                        v0, v1, v2 = kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm)
                        a0 += v0 * W[s, k]
                        a1 += v1 * W[s, k]
                        a2 += v2 * W[s, k]
            Phi[t, m, 0] += a0
            Phi[t, m, 1] += a1
            Phi[t, m, 2] += a2


# ---------------------------------------------------------------------------
# drivers


def _positions(p) -> np.ndarray:
    if isinstance(p, ParticleSet):
        return p.positions
    if hasattr(p, "centers"):
        return np.ascontiguousarray(p.centers, dtype=float)
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(p, dtype=float)))
    if arr.shape[-1] != 3:
        raise DimensionMismatchError(f"points must have shape (N, 3), got {arr.shape}")
    return arr


def _weights(sources, weights, n: int) -> np.ndarray:
    if weights is None:
        if not isinstance(sources, ParticleSet):
            raise ConfigurationError("weights are required unless sources is a ParticleSet")
        weights = sources.weights
    w = np.ascontiguousarray(np.asarray(weights, dtype=float))
    if w.shape != (n,):
        raise DimensionMismatchError(f"weights must have shape ({n},), got {w.shape}")
    return w


def _finish(out: np.ndarray, kernel: Kernel) -> np.ndarray:
    return out[:, 0].copy() if kernel.out_dim == 1 else out


def direct_sum(targets, sources, weights=None, kernel="laplace") -> np.ndarray:
    """Exact O(N*M) sum; coincident pairs are skipped for singular kernels."""
    kernel = get_kernel(kernel)
    tpos = _positions(targets)
    spos = _positions(sources)
    w = _weights(sources, weights, len(spos))
    out = np.zeros((len(tpos), 3))
    _direct(kernel.kind, kernel.param_array(), kernel.kind != BIHARMONIC, tpos, spos, w, out)
    return _finish(out, kernel)


def _same_points(a: np.ndarray, b: np.ndarray) -> bool:
    return a is b or (a.shape == b.shape and np.array_equal(a, b))


def fast_sum(targets, sources, weights=None, kernel="laplace", config: TraversalConfig | None = None,
             source_tree: ClusterTree | None = None) -> SumResult:
    """Evaluate the sum with ``config.method`` and return potentials plus a
    per-phase timing and interaction-count report."""
    config = config or TraversalConfig()
    kernel = get_kernel(kernel)
    tpos = _positions(targets)
    spos = _positions(sources)
    w = _weights(sources, weights, len(spos))
    prm = kernel.param_array()
    skip = kernel.kind != BIHARMONIC
    timings: dict[str, float] = {}
    t_all = time.perf_counter()

    if config.method == "direct":
        t0 = time.perf_counter()
        out = np.zeros((len(tpos), 3))
        _direct(kernel.kind, prm, skip, tpos, spos, w, out)
        timings["pp"] = time.perf_counter() - t0
        timings["total"] = time.perf_counter() - t_all
        return SumResult(_finish(out, kernel), "direct", timings, {"PP": len(tpos) * len(spos)})

    n0 = config.n0
    t0 = time.perf_counter()
    stree = source_tree or build_tree(spos, config.degree, n0, config.shrink)
    timings["tree"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    W = upward_pass(stree, w)
    ws = np.ascontiguousarray(w[stree.perm])
    timings["upward"] = time.perf_counter() - t0

    if config.method == "cstc":
        t0 = time.perf_counter()
        out = np.zeros((len(tpos), 3))
        stats = np.zeros(((len(tpos) + _BLOCK - 1) // _BLOCK, 2), dtype=np.int64)
        _cstc(kernel.kind, prm, skip, tpos, stree.pos, ws, W, stree.proxy_pos, stree.start, stree.end,
              stree.children, stree.nchild, stree.center, stree.radius, float(config.mac), n0, out, stats)
        timings["traversal"] = time.perf_counter() - t0
        timings["total"] = time.perf_counter() - t_all
        counts = {"PP": int(stats[:, 0].sum()), "PC": int(stats[:, 1].sum()), "CP": 0, "CC": 0}
        return SumResult(_finish(out, kernel), "cstc", timings, counts, stree.stats())

    t0 = time.perf_counter()
    ttree = stree if _same_points(tpos, spos) else build_tree(tpos, config.degree, n0, config.shrink)
    timings["tree"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    pairs = _dual_traversal(ttree.start, ttree.end, ttree.children, ttree.nchild, ttree.center, ttree.radius,
                            stree.start, stree.end, stree.children, stree.nchild, stree.center, stree.radius,
                            float(config.mac), n0)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    m = ttree.num_clusters
    near = pairs[pairs[:, 2] <= PC]
    far = pairs[pairs[:, 2] >= CP]
    near, buf_off, g_off, g_buf, buf_len = _mirror_plan(near, stree, config.mutual_pp and ttree is stree)
    off_near = np.searchsorted(near[:, 0], np.arange(m + 1)).astype(np.int64)
    off_far = np.searchsorted(far[:, 0], np.arange(m + 1)).astype(np.int64)
    timings["traversal"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = np.zeros((len(tpos), 3))
    buf = np.zeros((buf_len, kernel.out_dim))
    sign = -1.0 if kernel.out_dim == 3 else 1.0
    _eval_particle_targets(kernel.kind, prm, skip, sign, ttree.pos, ttree.start, ttree.end, stree.pos, ws, W,
                           stree.proxy_pos, stree.start, stree.end, off_near,
                           np.ascontiguousarray(near[:, 1]), np.ascontiguousarray(near[:, 2]), buf_off, buf, out)
    if buf_len:
        _gather_mirrored(g_off, g_buf, ttree.start, ttree.end, buf, out)
    timings["pp_pc"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    Phi = np.zeros((m, ttree.num_proxy, 3))
    if len(far):
        _eval_proxy_targets(kernel.kind, prm, skip, ttree.proxy_pos, stree.pos, ws, W, stree.proxy_pos,
                            stree.start, stree.end, off_far,
                            np.ascontiguousarray(far[:, 1]), np.ascontiguousarray(far[:, 2]), Phi)
    timings["cp_cc"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dims = kernel.out_dim
    if len(far):
        out[:, :dims] += downward_pass(ttree, Phi[:, :, :dims], tree_order=True)
    out = ttree.to_input_order(out)
    timings["downward"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_all

    counts = {name: int((pairs[:, 2] == k).sum()) for k, name in enumerate(INTERACTION_NAMES)}
    result = SumResult(_finish(out, kernel), "csfmm", timings, counts, ttree.stats())
    result.proxy_potentials = Phi[:, :, :dims]
    result.target_tree = ttree
    return result


def _mirror_plan(near: np.ndarray, tree: ClusterTree, enabled: bool):
    """Pair up PP rows ``(a, b)`` and ``(b, a)`` of a shared tree.

    Returns the reduced near list, per-row buffer offsets, and the buffer
    layout grouped by receiving cluster.  Every kernel here satisfies
    ``K(y, x) = +-K(x, y)``, so the lower row of each pair computes both.
    """
    m = tree.num_clusters
    buf_off = np.full(len(near), -1, dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    if not enabled or len(near) == 0:
        return near, buf_off, np.zeros(m + 1, dtype=np.int64), empty, 0
    near = near.copy()
    t, s = near[:, 0], near[:, 1]
    pp = near[:, 2] == PP
    keys = np.sort(t[pp] * m + s[pp])
    mk = s * m + t
    pos = np.minimum(np.searchsorted(keys, mk), len(keys) - 1)
    mirrored = pp & (keys[pos] == mk)
    lower = mirrored & (t < s)
    near[mirrored & (t == s), 2] = PP_SELF
    near[lower, 2] = PP_MUTUAL
    sizes = (tree.end - tree.start)[s[lower]]
    buf_off[lower] = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    keep = ~(mirrored & (t > s))
    near, buf_off = near[keep], buf_off[keep]
    rows = near[:, 2] == PP_MUTUAL
    receivers = near[rows, 1]
    order = np.argsort(receivers, kind="stable")
    g_off = np.searchsorted(receivers[order], np.arange(m + 1)).astype(np.int64)
    return near, buf_off, g_off, buf_off[rows][order], int(sizes.sum())


def cstc_sum(targets, sources, weights=None, kernel="laplace", config: TraversalConfig | None = None) -> np.ndarray:
    cfg = config or TraversalConfig()
    cfg = replace(cfg, method="cstc")
    return fast_sum(targets, sources, weights, kernel, cfg).potential


def csfmm_sum(targets, sources, weights=None, kernel="laplace", config: TraversalConfig | None = None) -> np.ndarray:
    cfg = config or TraversalConfig()
    cfg = replace(cfg, method="csfmm")
    return fast_sum(targets, sources, weights, kernel, cfg).potential


def evaluate_sum(targets, sources, weights=None, kernel="laplace", config: TraversalConfig | None = None) -> np.ndarray:
    """Dispatch on ``config.method``."""
    return fast_sum(targets, sources, weights, kernel, config).potential
