"""Convergence and runtime studies shared by the CLI and the test-suite."""

from __future__ import annotations

import statistics
import time
from dataclasses import replace

from .applications import exact_solution, fit_loglog_slope, real_spherical_harmonic, relative_l2_error
from .errors import ConfigurationError
from .geometry import build_grid
from .kernels import get_kernel
from .summation import TraversalConfig, direct_sum, fast_sum

EXACT_FIELDS = {"y43": (4, 3)}


def _exact_field(name: str):
    key = name.lower().replace("_", "")
    if key not in EXACT_FIELDS:
        raise ConfigurationError(f"unknown exact solution {name!r}; built in: {', '.join(EXACT_FIELDS)}")
    return EXACT_FIELDS[key]


def convergence_study(kernel: str = "laplace", grid_kind: str = "icosahedral", levels=(4, 5, 6),
                      config: TraversalConfig | None = None, exact: str = "y43", with_direct: bool = True) -> dict:
    """Errors of the direct and fast solutions against the exact one per level.

    Rows hold ``level, N, E_DS_EX, E_FS_EX, E_FS_DS``; ``slopes`` are the
    fitted log-log slopes against N (needs at least two levels).
    """
    levels = list(levels)
    if len(levels) < 2:
        raise ConfigurationError("a convergence study needs at least two levels")
    cfg = config or TraversalConfig()
    if cfg.method == "direct":
        cfg = replace(cfg, method="csfmm")
    n, m = _exact_field(exact)
    k = get_kernel(kernel)
    rows = []
    for lev in levels:
        g = build_grid(grid_kind, lev)
        f = real_spherical_harmonic(n, m, g.centers)
        ex = exact_solution(k.name, n, f)
        w = f * g.areas
        fs = fast_sum(g.centers, g.centers, w, k, cfg).potential
        row = {"level": lev, "N": len(g), "E_FS_EX": relative_l2_error(fs, ex, ex, g.areas)}
        if with_direct:
            ds = direct_sum(g.centers, g.centers, w, k)
            row["E_DS_EX"] = relative_l2_error(ds, ex, ex, g.areas)
            row["E_FS_DS"] = relative_l2_error(fs, ds, ds, g.areas)
        rows.append(row)
    Ns = [r["N"] for r in rows]
    slopes = {key: fit_loglog_slope(Ns, [r[key] for r in rows]) for key in ("E_DS_EX", "E_FS_EX") if key in rows[0]}
    return {"kernel": k.name, "grid": grid_kind, "rows": rows, "slopes": slopes}


def degree_sweep(kernel: str = "laplace", grid_kind: str = "icosahedral", level: int = 6,
                 degrees=(2, 4, 6, 8, 10, 12, 14), mac: float = 0.5, exact: str = "y43") -> dict:
    """Fast-sum approximation error and runtime against degree at fixed MAC."""
    n, m = _exact_field(exact)
    g = build_grid(grid_kind, level)
    w = real_spherical_harmonic(n, m, g.centers) * g.areas
    ds = direct_sum(g.centers, g.centers, w, kernel)
    rows = []
    for deg in degrees:
        res = fast_sum(g.centers, g.centers, w, kernel, TraversalConfig(mac=mac, degree=deg))
        rows.append({"degree": deg, "N": len(g), "E_FS_DS": relative_l2_error(res.potential, ds, ds, g.areas),
                     "seconds": res.timings["total"]})
    return {"kernel": get_kernel(kernel).name, "grid": grid_kind, "level": level, "mac": mac, "rows": rows}


def _call(points, weights, kernel, config: TraversalConfig) -> None:
    if config.method == "direct":
        direct_sum(points, points, weights, kernel)
    else:
        fast_sum(points, points, weights, kernel, config)


def time_sum(points, weights, kernel, config: TraversalConfig, repeats: int = 3, min_time: float = 0.0) -> float:
    """Median per-call wall time over ``repeats`` samples (no warm-up here).

    Each sample repeats the call until it has run for at least ``min_time``
    seconds, so fast calls are averaged over the same stretch of machine
    noise as slow ones.
    """
    times = []
    for _ in range(repeats):
        calls = 0
        t0 = time.perf_counter()
        while True:
            _call(points, weights, kernel, config)
            calls += 1
            elapsed = time.perf_counter() - t0
            if elapsed >= min_time:
                break
        times.append(elapsed / calls)
    return statistics.median(times)


def benchmark(levels=(4, 5, 6, 7), methods=("direct", "cstc", "csfmm"), kernel: str = "laplace",
              grid_kind: str = "icosahedral", config: TraversalConfig | None = None, repeats: int = 3,
              direct_max_level: int | None = None, min_time: float = 1.0) -> dict:
    """Runtime table and fitted scaling exponents.

    Each method is warmed up once on the smallest level so compilation is
    excluded, then every level reports the median of ``repeats`` samples of
    at least ``min_time`` seconds each.
    """
    cfg = config or TraversalConfig()
    levels = sorted(levels)
    grids = {lev: build_grid(grid_kind, lev) for lev in levels}
    weights = {lev: real_spherical_harmonic(4, 3, g.centers) * g.areas for lev, g in grids.items()}
    rows = []
    for meth in methods:
        mcfg = replace(cfg, method=meth)
        g0 = grids[levels[0]]
        time_sum(g0.centers, weights[levels[0]], kernel, mcfg, repeats=1)
        for lev in levels:
            if meth == "direct" and direct_max_level is not None and lev > direct_max_level:
                continue
            g = grids[lev]
            sec = time_sum(g.centers, weights[lev], kernel, mcfg, repeats, min_time)
            rows.append({"method": meth, "kernel": get_kernel(kernel).name, "level": lev, "N": len(g),
                         "seconds": sec})
    exponents = {}
    for meth in methods:
        pts = [(r["N"], r["seconds"]) for r in rows if r["method"] == meth]
        if len(pts) >= 2:
            exponents[meth] = fit_loglog_slope(*zip(*pts))
    return {"grid": grid_kind, "repeats": repeats, "min_time": min_time, "rows": rows, "exponents": exponents}


def kernel_cost_ratio(level: int = 5, kernels=("biharmonic", "laplace"), method: str = "direct",
                      repeats: int = 3) -> float:
    """Runtime ratio of two kernels at the same N."""
    g = build_grid("icosahedral", level)
    w = real_spherical_harmonic(4, 3, g.centers) * g.areas
    cfg = TraversalConfig(method=method)
    t = []
    for k in kernels:
        time_sum(g.centers, w, k, cfg, 1)
        t.append(time_sum(g.centers, w, k, cfg, repeats))
    return t[0] / t[1]

