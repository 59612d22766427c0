"""CSV/JSON input and output.

Every CSV starts with a ``#`` line carrying the format version, then a
header row.  Floats are written with 17 significant digits so values
round-trip exactly.
"""

from __future__ import annotations

import json
import platform
import sys
from pathlib import Path

import numpy as np

from .errors import InputFormatError
from .geometry import lonlat_to_xyz

FORMAT_VERSION = 1
FLOAT_FMT = "%.17g"


def _version() -> str:
    from . import __version__

    return __version__


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names]) if names else np.zeros((0, 0))
    with open(path, "w", newline="") as fh:
        fh.write(f"# csfmm {_version()} format={FORMAT_VERSION}\n")
        fh.write(",".join(names) + "\n")
        if len(data):
            np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def read_csv(path) -> dict[str, np.ndarray]:
    """Read a headered numeric CSV; ``#`` lines are comments."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from None
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise InputFormatError(f"{path}: no header row")
    names = [h.strip().lower() for h in body[0].split(",")]
    rows = []
    for lineno, ln in enumerate(body[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(names):
            raise InputFormatError(f"{path}: row {lineno} has {len(parts)} fields, expected {len(names)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise InputFormatError(f"{path}: row {lineno} has a non-numeric field") from None
    arr = np.asarray(rows, dtype=float).reshape(-1, len(names))
    if not np.all(np.isfinite(arr)):
        raise InputFormatError(f"{path}: non-finite values")
    return {name: arr[:, i] for i, name in enumerate(names)}


def read_particles(path) -> dict[str, np.ndarray]:
    """Particle file as ``positions``, ``weights`` and optionally ``areas``
    and ``values``.

    Two layouts are recognised from the header: ``x,y,z,weight`` and
    ``lon,lat,area,value`` (degrees; weight = value * area).
    """
    cols = read_csv(path)
    keys = set(cols)
    if {"x", "y", "z", "weight"} <= keys:
        pos = np.column_stack([cols["x"], cols["y"], cols["z"]])
        norms = np.linalg.norm(pos, axis=1)
        if len(norms) and np.abs(norms - 1.0).max() > 1e-6:
            raise InputFormatError(f"{path}: positions are not on the unit sphere")
        out = {"positions": pos / norms[:, None], "weights": cols["weight"]}
        if "area" in keys:
            out["areas"] = cols["area"]
        return out
    if {"lon", "lat", "area", "value"} <= keys:
        if np.any(cols["area"] <= 0):
            raise InputFormatError(f"{path}: areas must be positive")
        return {
            "positions": lonlat_to_xyz(cols["lon"], cols["lat"]),
            "weights": cols["value"] * cols["area"],
            "areas": cols["area"],
            "values": cols["value"],
            "lon": cols["lon"],
            "lat": cols["lat"],
        }
    raise InputFormatError(f"{path}: header must contain x,y,z,weight or lon,lat,area,value")


def potential_columns(points: np.ndarray, phi: np.ndarray) -> dict[str, np.ndarray]:
    cols = {"x": points[:, 0], "y": points[:, 1], "z": points[:, 2]}
    if phi.ndim == 1:
        cols["phi"] = phi
    else:
        cols.update(phi=phi[:, 0], phi_y=phi[:, 1], phi_z=phi[:, 2])
    return cols


def environment() -> dict:
    import numba
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "threads": int(numba.get_num_threads()),
        "platform": platform.platform(),
        "csfmm": _version(),
    }


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, default=_default, sort_keys=False)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")
