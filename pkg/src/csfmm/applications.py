"""Problem drivers built on the summation core: Green's-function solves,
the barotropic vorticity equation (vortex method with remeshing), and the
self-attraction-and-loading convolution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import sph_harm_y

from .errors import ConfigurationError, DegenerateReferenceError, DimensionMismatchError, InputFormatError
from .geometry import SphericalGrid, build_grid
from .kernels import SalParams, get_kernel
from .summation import TraversalConfig, direct_sum, fast_sum

OMEGA_EARTH = 2.0 * math.pi  # rad / day
GAUSSIAN_OFFSET = 0.196353


# ---------------------------------------------------------------------------
# fields and metrics


@dataclass
class ScalarField:
    """Values at points on the sphere with their quadrature areas."""

    points: np.ndarray
    areas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        self.areas = np.asarray(self.areas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.points)
        if len(self.areas) != n or len(self.values) != n:
            raise DimensionMismatchError(
                f"points, areas and values must have equal length, got {n}, {len(self.areas)}, {len(self.values)}"
            )

    @classmethod
    def on_grid(cls, grid: SphericalGrid, values) -> "ScalarField":
        return cls(np.asarray(grid.centers), np.asarray(grid.areas), values)


def relative_l2_error(phi1, phi2, phi_exact, areas) -> float:
    """Area-weighted relative error ``sqrt(sum (phi1-phi2)^2 A / sum phi_ex^2 A)``.

    Vector-valued fields (``(N, 3)``) are summed over components.
    """
    phi1, phi2, ex = (np.asarray(a, dtype=float) for a in (phi1, phi2, phi_exact))
    a = np.asarray(areas, dtype=float)
    if not (phi1.shape == phi2.shape == ex.shape) or len(a) != len(ex):
        raise DimensionMismatchError("fields and areas must have matching lengths")
    if ex.ndim == 2:
        a = a[:, None]
    den = float(np.sum(ex * ex * a))
    if den == 0.0:
        raise DegenerateReferenceError("reference field has zero weighted norm")
    return math.sqrt(float(np.sum((phi1 - phi2) ** 2 * a)) / den)


def fit_loglog_slope(n, err) -> float:
    """Least-squares slope of ``log err`` against ``log n``."""
    n = np.asarray(n, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(n) < 2:
        raise ConfigurationError("at least two points are needed to fit a slope")
    return float(np.polyfit(np.log(n), np.log(err), 1)[0])


def real_spherical_harmonic(n: int, m: int, points) -> np.ndarray:
    """Orthonormal real spherical harmonic ``Y_n^m`` at unit vectors.

    ``m > 0`` gives the cosine branch, ``m < 0`` the sine branch.
    """
    p = np.asarray(points, dtype=float)
    theta = np.arccos(np.clip(p[:, 2], -1.0, 1.0))
    phi = np.arctan2(p[:, 1], p[:, 0])
    Y = sph_harm_y(n, abs(m), theta, phi)
    if m == 0:
        return Y.real
    scale = math.sqrt(2.0) * (-1.0) ** m
    return scale * (Y.real if m > 0 else Y.imag)


def laplace_eigenvalue(n: int) -> float:
    return float(n * (n + 1))


# ---------------------------------------------------------------------------
# Green's-function solves


def _sum(points, weights, kernel, config: TraversalConfig | None, method: str | None = None):
    cfg = config or TraversalConfig()
    if method is not None:
        cfg = replace(cfg, method=method)
    if cfg.method == "direct":
        return direct_sum(points, points, weights, kernel)
    return fast_sum(points, points, weights, kernel, cfg).potential


def solve_greens(field_: ScalarField, kernel: str = "laplace", config: TraversalConfig | None = None) -> np.ndarray:
    """``phi(x_i) = sum_j G(x_i, x_j) f(x_j) A_j`` for the Laplace or
    biharmonic Green's function."""
    k = get_kernel(kernel)
    if k.name not in ("laplace", "biharmonic"):
        raise ConfigurationError(f"solve_greens supports laplace and biharmonic kernels, not {k.name}")
    f = field_.values
    if k.name == "laplace":
        mean = float(np.sum(f * field_.areas) / np.sum(field_.areas))
        if abs(mean) > 1e-8 * max(float(np.abs(f).max()), 1e-300):
            warnings.warn(f"data field mean {mean:.3e} is not zero; the Laplace solution is only defined up to it",
                          RuntimeWarning, stacklevel=2)
    return _sum(field_.points, f * field_.areas, k, config)


def exact_solution(kernel: str, n: int, f) -> np.ndarray:
    """Exact solution for an eigenfunction ``f`` of degree ``n``."""
    lam = laplace_eigenvalue(n)
    name = get_kernel(kernel).name
    if name == "laplace":
        return np.asarray(f) / lam
    if name == "biharmonic":
        return np.asarray(f) / lam**2
    raise ConfigurationError(f"no built-in exact solution for kernel {name}")


# ---------------------------------------------------------------------------
# self-attraction and loading


def sal_potential(ssh: ScalarField, params: SalParams | None = None,
                  config: TraversalConfig | None = None) -> np.ndarray:
    """Convolve sea-surface height with the SAL kernel (default CSFMM,
    MAC 0.7, degree 2)."""
    if ssh.areas is None or not np.all(np.isfinite(ssh.areas)):
        raise InputFormatError("SAL input requires a finite area for every point")
    cfg = config or TraversalConfig(mac=0.7, degree=2)
    kernel = get_kernel("sal", params or SalParams())
    return _sum(ssh.points, ssh.values * ssh.areas, kernel, cfg)


def sal_eigenvalue(n: int, params: SalParams | None = None) -> float:
    """Multiplier of a degree-``n`` harmonic under the fitted SAL series."""
    p = params or SalParams()
    love = (1.0 - p.b0) + ((p.a1 - p.b1) / n if n > 0 else 0.0)
    return 3.0 * p.rho_ratio * love / (2 * n + 1)


def synthetic_ssh(points, degrees=(8, 10, 12, 14, 16), seed: int = 0) -> np.ndarray:
    """Band-limited test field: random combination of real harmonics."""
    rng = np.random.default_rng(seed)
    out = np.zeros(len(points))
    for n in degrees:
        for m in range(-n, n + 1):
            out += rng.standard_normal() * real_spherical_harmonic(n, m, points)
    return out


# ---------------------------------------------------------------------------
# barotropic vorticity equation


def _latlon(p):
    return np.arcsin(np.clip(p[:, 2], -1.0, 1.0)), np.arctan2(p[:, 1], p[:, 0])


def rossby_haurwitz_vorticity(points) -> np.ndarray:
    """Stationary RH wave, degree 5 wavenumber 4, theta read as latitude."""
    lat, lon = _latlon(np.asarray(points, dtype=float))
    s, c = np.sin(lat), np.cos(lat)
    return (2.0 * math.pi / 7.0) * s + 30.0 * s * c**4 * np.cos(4.0 * lon)


def gaussian_vortex_vorticity(points, center_lat: float = math.pi / 20, center_lon: float = 0.0) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    xc = np.array([math.cos(center_lat) * math.cos(center_lon), math.cos(center_lat) * math.sin(center_lon),
                   math.sin(center_lat)])
    return 4.0 * math.pi * np.exp(-16.0 * np.sum((p - xc) ** 2, axis=1)) - GAUSSIAN_OFFSET


INITIAL_CONDITIONS: dict[str, Callable] = {
    "rossby_haurwitz": rossby_haurwitz_vorticity,
    "rh": rossby_haurwitz_vorticity,
    "gaussian": gaussian_vortex_vorticity,
    "gaussian_vortex": gaussian_vortex_vorticity,
}


@dataclass
class BveState:
    positions: np.ndarray
    zeta: np.ndarray
    areas: np.ndarray
    tracer: np.ndarray | None = None
    omega: float = OMEGA_EARTH
    time: float = 0.0
    grid_centers: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.areas = np.asarray(self.areas, dtype=float)
        if self.grid_centers is None:
            self.grid_centers = self.positions.copy()

    @property
    def absolute_vorticity(self) -> np.ndarray:
        return self.zeta + 2.0 * self.omega * self.positions[:, 2]

    def copy(self) -> "BveState":
        return BveState(self.positions.copy(), self.zeta.copy(), self.areas, None if self.tracer is None else
                        self.tracer.copy(), self.omega, self.time, self.grid_centers)


@dataclass
class BveConfig:
    dt: float = 0.01
    omega: float = OMEGA_EARTH
    remesh: bool = True
    neighbors: int = 12
    remesh_scheme: str = "spline"
    sum_config: TraversalConfig = field(default_factory=TraversalConfig)


def bve_initial(kind, grid: SphericalGrid, omega: float = OMEGA_EARTH, tracer: bool = True) -> BveState:
    """Vorticity sampled at cell centers; tracer starts as the z coordinate."""
    pts = np.asarray(grid.centers, dtype=float)
    if callable(kind):
        zeta = np.asarray(kind(pts), dtype=float)
    else:
        key = str(kind).strip().lower().replace("-", "_")
        if key not in INITIAL_CONDITIONS:
            raise ConfigurationError(f"unknown initial condition {kind!r}; choose from rossby_haurwitz, gaussian")
        zeta = INITIAL_CONDITIONS[key](pts)
    return BveState(pts.copy(), zeta, np.asarray(grid.areas, dtype=float), pts[:, 2].copy() if tracer else None,
                    omega)


def bve_velocity(positions, zeta, areas, config: TraversalConfig | None = None) -> np.ndarray:
    """``dx_i/dt = sum_j K_BS(x_i, x_j) zeta_j A_j``, self term omitted."""
    return _sum(np.ascontiguousarray(positions), np.asarray(zeta) * np.asarray(areas), "biot_savart", config)


def _normalize(p):
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def rk4_advance(state: BveState, dt: float, config: BveConfig | None = None) -> BveState:
    """One RK4 step without remeshing.

    Only positions are integrated; vorticity follows from conservation of
    ``zeta + 2 Omega z`` along trajectories, which is the exact solution of
    the vorticity ODE given the trajectory.  Stage positions are projected
    back onto the sphere.
    """
    if dt <= 0:
        raise ConfigurationError("time step must be positive")
    cfg = config or BveConfig()
    q = state.absolute_vorticity
    two_omega = 2.0 * state.omega

    def rhs(x):
        return bve_velocity(x, q - two_omega * x[:, 2], state.areas, cfg.sum_config)

    x0 = state.positions
    k1 = rhs(x0)
    k2 = rhs(_normalize(x0 + 0.5 * dt * k1))
    k3 = rhs(_normalize(x0 + 0.5 * dt * k2))
    k4 = rhs(_normalize(x0 + dt * k3))
    x1 = _normalize(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    out = state.copy()
    out.positions = np.ascontiguousarray(x1)
    out.zeta = q - two_omega * x1[:, 2]
    out.time = state.time + dt
    return out


def _tangent_frame(c):
    # orthonormal (e1, e2) perpendicular to each row of c
    helper = np.where(np.abs(c[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = _normalize(np.cross(helper, c))
    e2 = np.cross(c, e1)
    return e1, e2


def _quadratic_terms(a, b):
    return np.stack([np.ones_like(a), a, b, a * a, a * b, b * b], axis=-1)


def _local_chart(src, dst, k):
    # gnomonic tangent-plane coordinates of the k nearest sources, scaled to
    # unit size per destination
    _, idx = cKDTree(src).query(dst, k=k)
    nb = src[idx]                                   # (M, k, 3)
    e1, e2 = _tangent_frame(dst)
    dot = np.einsum("mkj,mj->mk", nb, dst)
    a = np.einsum("mkj,mj->mk", nb, e1) / dot
    b = np.einsum("mkj,mj->mk", nb, e2) / dot
    h = np.maximum(np.abs(a).max(axis=1), np.abs(b).max(axis=1))[:, None]
    return idx, a / h, b / h


def _spline_weights(a, b, power):
    """Weights of the polyharmonic spline ``r**power`` plus quadratic tail,
    evaluated at the chart origin."""
    m, k = a.shape
    P = _quadratic_terms(a, b)                                          # (M, k, 6)
    r = np.hypot(a[:, :, None] - a[:, None, :], b[:, :, None] - b[:, None, :])
    A = np.zeros((m, k + 6, k + 6))
    A[:, :k, :k] = r**power
    A[:, :k, k:] = P
    A[:, k:, :k] = P.transpose(0, 2, 1)
    rhs = np.zeros((m, k + 6))
    rhs[:, :k] = np.hypot(a, b) ** power
    rhs[:, k] = 1.0
    return np.linalg.solve(A, rhs[:, :, None])[:, :k, 0]


REMESH_SCHEMES = ("spline", "lsq")


def remesh_values(src_points, values, dst_points, neighbors: int = 12, scheme: str = "spline",
                  power: int = 3) -> np.ndarray:
    """Interpolate scattered values onto destination points.

    For every destination the ``neighbors`` nearest sources are projected
    gnomonically onto its tangent plane.  ``scheme="spline"`` interpolates
    them with a polyharmonic spline ``r**power`` (odd power) augmented by a
    quadratic; ``scheme="lsq"`` fits the quadratic alone by least squares.
    The least-squares fit smooths, and repeated remeshing turns that into
    visible diffusion, so the interpolating spline is the default.
    ``values`` may be ``(N,)`` or ``(N, c)``.
    """
    if scheme not in REMESH_SCHEMES:
        raise ConfigurationError(f"unknown remesh scheme {scheme!r}; choose from {', '.join(REMESH_SCHEMES)}")
    if power < 1 or power % 2 == 0:
        raise ConfigurationError("spline power must be a positive odd integer")
    vals = np.asarray(values, dtype=float)
    single = vals.ndim == 1
    if single:
        vals = vals[:, None]
    src = np.asarray(src_points, dtype=float)
    dst = np.asarray(dst_points, dtype=float)
    if len(vals) != len(src):
        raise DimensionMismatchError(f"{len(vals)} values for {len(src)} source points")
    k = min(neighbors, len(src))
    if k < 7:
        raise ConfigurationError("quadratic remeshing needs at least 7 source points")
    idx, a, b = _local_chart(src, dst, k)
    if scheme == "spline":
        w = _spline_weights(a, b, power)
    else:
        w = np.linalg.pinv(_quadratic_terms(a, b))[:, 0, :]
    out = np.einsum("mk,mkc->mc", w, vals[idx])
    return out[:, 0] if single else out


def remesh(state: BveState, neighbors: int = 12, scheme: str = "spline") -> BveState:
    """Interpolate the conserved quantities back to the grid centers and
    reset the particles there."""
    channels = [state.absolute_vorticity]
    if state.tracer is not None:
        channels.append(state.tracer)
    vals = remesh_values(state.positions, np.stack(channels, axis=1), state.grid_centers, neighbors, scheme)
    out = state.copy()
    out.positions = state.grid_centers.copy()
    out.zeta = vals[:, 0] - 2.0 * state.omega * out.positions[:, 2]
    if state.tracer is not None:
        out.tracer = vals[:, 1]
    return out


def bve_step(state: BveState, dt: float | None = None, config: BveConfig | None = None) -> BveState:
    cfg = config or BveConfig()
    new = rk4_advance(state, cfg.dt if dt is None else dt, cfg)
    return remesh(new, cfg.neighbors, cfg.remesh_scheme) if cfg.remesh else new


def bve_run(state: BveState, steps: int, config: BveConfig | None = None, callback=None) -> BveState:
    cfg = config or BveConfig()
    for k in range(steps):
        state = bve_step(state, cfg.dt, cfg)
        if callback is not None:
            callback(k + 1, state)
    return state


def vorticity_error(state: BveState, reference: Callable = rossby_haurwitz_vorticity) -> float:
    """Relative l2 error of particle vorticity against a reference field
    evaluated at the current particle positions."""
    ref = reference(state.positions)
    return relative_l2_error(state.zeta, ref, ref, state.areas)


def run_rossby_haurwitz(level: int, steps: int = 100, dt: float = 0.01, grid_kind: str = "icosahedral",
                        sum_config: TraversalConfig | None = None) -> tuple[BveState, float]:
    grid = build_grid(grid_kind, level)
    cfg = BveConfig(dt=dt, sum_config=sum_config or TraversalConfig())
    state = bve_run(bve_initial("rossby_haurwitz", grid), steps, cfg)
    return state, vorticity_error(state)
