"""Equiangular gnomonic cubed-sphere coordinates and midpoint-rule grids.

Face orientation convention (fixed, relied upon by the tree code):

====  ======  =========================  ===========================
face  axis    point before normalizing   seam partners
====  ======  =========================  ===========================
0     +x      ( 1,  X,  Y)               xi east, eta north
1     +y      (-X,  1,  Y)               xi east, eta north
2     -x      (-1, -X,  Y)               xi east, eta north
3     -y      ( X, -1,  Y)               xi east, eta north
4     +z      (-Y,  X,  1)               eta=-pi/4 meets face 0 top
5     -z      ( Y,  X, -1)               eta=+pi/4 meets face 0 bottom
====  ======  =========================  ===========================

with ``X = tan(xi)`` and ``Y = tan(eta)``.  Points on a cube edge or corner
belong to the lowest adjacent face id.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidFaceError

QUARTER_PI = 0.25 * math.pi


class GridKind(str, enum.Enum):
    ICOSAHEDRAL = "icosahedral"
    CUBED_SPHERE = "cubed_sphere"
    LATLON = "latlon"

    @classmethod
    def parse(cls, name: str | GridKind) -> GridKind:
        if isinstance(name, GridKind):
            return name
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "ico": cls.ICOSAHEDRAL,
            "icosahedral": cls.ICOSAHEDRAL,
            "cubed_sphere": cls.CUBED_SPHERE,
            "cubedsphere": cls.CUBED_SPHERE,
            "cs": cls.CUBED_SPHERE,
            "latlon": cls.LATLON,
            "lat_lon": cls.LATLON,
            "ll": cls.LATLON,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown grid kind {name!r}") from None


@dataclass(frozen=True)
class FaceCoords:
    face: int
    xi: float
    eta: float


@dataclass(frozen=True)
class SphericalGrid:
    """Cell centers (unit vectors, shape ``(N, 3)``) and exact cell areas."""

    kind: GridKind
    level: int
    centers: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        self.centers.setflags(write=False)
        self.areas.setflags(write=False)

    def __len__(self) -> int:
        return len(self.areas)


# ---------------------------------------------------------------------------
# face mapping


def face_project(p):
    """Map unit vector(s) to ``(face, xi, eta)``.

    Accepts a single 3-vector or an ``(N, 3)`` array.  For a single point a
    :class:`FaceCoords` is returned, otherwise a tuple of arrays.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    # argmax returns the first maximum, which gives the lowest-face tie-break
    face = np.argmax(np.stack([x, y, -x, -y, z, -z], axis=1), axis=1)

    X = np.empty(len(pts))
    Y = np.empty(len(pts))
    for f, (num_x, num_y, den) in _PROJECTORS.items():
        m = face == f
        if not m.any():
            continue
        q = pts[m]
        d = den(q)
        X[m] = num_x(q) / d
        Y[m] = num_y(q) / d
    xi = np.arctan(X)
    eta = np.arctan(Y)
    if single:
        return FaceCoords(int(face[0]), float(xi[0]), float(eta[0]))
    return face.astype(np.int64), xi, eta


_PROJECTORS = {
    0: (lambda q: q[:, 1], lambda q: q[:, 2], lambda q: q[:, 0]),
    1: (lambda q: -q[:, 0], lambda q: q[:, 2], lambda q: q[:, 1]),
    2: (lambda q: q[:, 1], lambda q: -q[:, 2], lambda q: q[:, 0]),
    3: (lambda q: q[:, 0], lambda q: q[:, 2], lambda q: -q[:, 1]),
    4: (lambda q: q[:, 1], lambda q: -q[:, 0], lambda q: q[:, 2]),
    5: (lambda q: q[:, 1], lambda q: q[:, 0], lambda q: -q[:, 2]),
}


def face_unproject(face, xi=None, eta=None):
    """Inverse of :func:`face_project`.

    Call either with a :class:`FaceCoords` or with ``(face, xi, eta)``
    scalars/arrays of matching shape.  Returns unit vector(s).
    """
    if isinstance(face, FaceCoords):
        face, xi, eta = face.face, face.xi, face.eta
    face_arr = np.asarray(face)
    single = face_arr.ndim == 0 and np.ndim(xi) == 0
    face_arr = np.atleast_1d(face_arr).astype(np.int64)
    X = np.tan(np.atleast_1d(np.asarray(xi, dtype=float)))
    Y = np.tan(np.atleast_1d(np.asarray(eta, dtype=float)))
    face_arr, X, Y = np.broadcast_arrays(face_arr, X, Y)
    if face_arr.size and (face_arr.min() < 0 or face_arr.max() > 5):
        raise InvalidFaceError(f"face id must be in 0..5, got {face_arr.min()}..{face_arr.max()}")

    one = np.ones_like(X)
    out = np.empty(X.shape + (3,))
    table = {
        0: (one, X, Y),
        1: (-X, one, Y),
        2: (-one, -X, Y),
        3: (X, -one, Y),
        4: (-Y, X, one),
        5: (Y, X, -one),
    }
    for f, comps in table.items():
        m = face_arr == f
        if m.any():
            out[m] = np.stack([c[m] for c in comps], axis=-1)
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out[0] if single else out


def face_axes(face: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (normal, xi-direction, eta-direction) of a face plane."""
    c = face_unproject(face, 0.0, 0.0)
    ex = face_unproject(face, QUARTER_PI, 0.0) * math.sqrt(2.0) - c
    ey = face_unproject(face, 0.0, QUARTER_PI) * math.sqrt(2.0) - c
    return c, ex, ey


# ---------------------------------------------------------------------------
# spherical polygon helpers


def spherical_triangle_area(a, b, c):
    """Signed area of spherical triangle(s), positive when counter-clockwise
    seen from outside the sphere."""
    det = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = 1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c) \
        + np.einsum("...i,...i->...", c, a)
    return 2.0 * np.arctan2(det, den)


def lonlat_to_xyz(lon, lat, degrees: bool = True) -> np.ndarray:
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if degrees:
        lon = np.radians(lon)
        lat = np.radians(lat)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_lonlat(p, degrees: bool = True) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    lon = np.arctan2(p[..., 1], p[..., 0])
    lat = np.arcsin(np.clip(p[..., 2], -1.0, 1.0))
    if degrees:
        return np.degrees(lon), np.degrees(lat)
    return lon, lat


# ---------------------------------------------------------------------------
# grids


def build_grid(kind: GridKind | str, level: int) -> SphericalGrid:
    """Build one of the three midpoint-rule partitions of the unit sphere.

    Particle counts per level: icosahedral ``10*4**level + 2``, cubed sphere
    ``6*4**level``, latitude-longitude ``45*2**(level-4)`` by twice as many
    longitudes (levels >= 4 only).
    """
    kind = GridKind.parse(kind)
    if not isinstance(level, (int, np.integer)) or level < 0:
        raise ConfigurationError(f"grid level must be a non-negative integer, got {level!r}")
    level = int(level)
    if kind is GridKind.ICOSAHEDRAL:
        centers, areas = _icosahedral(level)
    elif kind is GridKind.CUBED_SPHERE:
        centers, areas = _cubed_sphere(level)
    else:
        centers, areas = _latlon(level)
    return SphericalGrid(kind, level, centers, areas)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    flip = np.einsum("ij,ij->i", a, np.cross(b, c)) < 0
    f[flip] = f[flip][:, [0, 2, 1]]
    return v, f


def _subdivide(v: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(f)
    m01 = len(v) + inverse[:nf]
    m12 = len(v) + inverse[nf:2 * nf]
    m20 = len(v) + inverse[2 * nf:]
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new_f = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([v, mid]), new_f


def icosahedral_mesh(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and outward-oriented triangles of the subdivided icosahedron."""
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
    return v, f


def _icosahedral(level: int) -> tuple[np.ndarray, np.ndarray]:
    # Voronoi cells of the mesh vertices; each triangle contributes the
    # signed kites (vertex, edge midpoint, circumcenter) to its 3 corners.
    v, f = icosahedral_mesh(level)
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cc = np.cross(b - a, c - a)
    cc /= np.linalg.norm(cc, axis=1, keepdims=True)

    def unit(p):
        return p / np.linalg.norm(p, axis=1, keepdims=True)

    m_ab, m_bc, m_ca = unit(a + b), unit(b + c), unit(c + a)
    areas = np.zeros(len(v))
    for corner, m_out, m_in in ((0, m_ab, m_ca), (1, m_bc, m_ab), (2, m_ca, m_bc)):
        p = v[f[:, corner]]
        piece = spherical_triangle_area(p, m_out, cc) + spherical_triangle_area(p, cc, m_in)
        areas += np.bincount(f[:, corner], weights=piece, minlength=len(v))
    return v, areas


def cubed_sphere_cell_area(xi0, xi1, eta0, eta1):
    """Exact area of the equiangular cell ``[xi0, xi1] x [eta0, eta1]``."""

    def corner(xi, eta):
        X, Y = np.tan(xi), np.tan(eta)
        return np.arctan(X * Y / np.sqrt(1.0 + X * X + Y * Y))

    return corner(xi1, eta1) - corner(xi0, eta1) - corner(xi1, eta0) + corner(xi0, eta0)


def _cubed_sphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    m = 2**level
    edges = np.linspace(-QUARTER_PI, QUARTER_PI, m + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    XI, ETA = np.meshgrid(mids, mids, indexing="ij")
    lo, hi = edges[:-1], edges[1:]
    A = cubed_sphere_cell_area(lo[:, None], hi[:, None], lo[None, :], hi[None, :])
    centers = np.concatenate([face_unproject(np.full(XI.size, f), XI.ravel(), ETA.ravel()) for f in range(6)])
    areas = np.tile(A.ravel(), 6)
    return centers, areas


def latlon_shape(level: int) -> tuple[int, int]:
    if level < 4:
        raise ConfigurationError("latitude-longitude grids are defined for levels >= 4 (4 degree spacing at level 4)")
    nlat = 45 * 2 ** (level - 4)
    return nlat, 2 * nlat


def _latlon(level: int) -> tuple[np.ndarray, np.ndarray]:
    nlat, nlon = latlon_shape(level)
    lat_edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, nlat + 1)
    lon_edges = np.linspace(0.0, 2.0 * math.pi, nlon + 1)
    lat = 0.5 * (lat_edges[:-1] + lat_edges[1:])
    lon = 0.5 * (lon_edges[:-1] + lon_edges[1:])
    band = (2.0 * math.pi / nlon) * (np.sin(lat_edges[1:]) - np.sin(lat_edges[:-1]))
    LAT, LON = np.meshgrid(lat, lon, indexing="ij")
    centers = lonlat_to_xyz(LON.ravel(), LAT.ravel(), degrees=False)
    areas = np.repeat(band, nlon)
    return centers, areas
