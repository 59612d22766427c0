"""Command-line entry point: ``csfmm <subcommand> [options]``.

Every subcommand writes its tabular output as CSV (``--out``) and a JSON
report to stdout (or ``--report``).  Failures print
``{"error": CODE, "message": ...}`` to stderr and exit with the code's
status from ``EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import io
from .applications import (
    BveConfig,
    INITIAL_CONDITIONS,
    ScalarField,
    bve_initial,
    bve_run,
    exact_solution,
    real_spherical_harmonic,
    relative_l2_error,
    sal_potential,
    synthetic_ssh,
    vorticity_error,
)
from .errors import (
    ConfigurationError,
    CSFMMError,
    DimensionMismatchError,
    InputFormatError,
    UnknownMethodError,
)
from .geometry import GridKind, build_grid, xyz_to_lonlat
from .kernels import KERNEL_NAMES, SAL_VARIANTS, SalParams, get_kernel
from .studies import EXACT_FIELDS, benchmark, convergence_study, degree_sweep
from .summation import METHODS, TraversalConfig, direct_sum, fast_sum, set_threads

EXIT_CODES = {
    "E_INTERNAL": 1,
    "E_USAGE": 2,
    "E_CONFIG": 3,
    "E_KERNEL": 4,
    "E_METHOD": 5,
    "E_CSV": 6,
    "E_DIM": 7,
    "E_REFERENCE": 8,
    "E_FACE": 9,
    "E_OUT_OF_CELL": 10,
    "E_SINGULAR": 11,
    "E_DOMAIN": 12,
    "E_EMPTY": 13,
    "E_IO": 14,
}


class UsageError(CSFMMError):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    # argparse prints and exits on its own; route through the JSON error path
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# option helpers


def _grid_spec(text: str) -> tuple[GridKind, int]:
    kind, sep, level = text.partition(":")
    if not sep:
        raise UsageError(f"--grid expects kind:level, got {text!r}")
    try:
        lev = int(level)
    except ValueError:
        raise UsageError(f"grid level must be an integer, got {level!r}") from None
    return GridKind.parse(kind), lev


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _kernel_name(name: str) -> str:
    return get_kernel(name).name          # raises UnknownKernelError


def _method_name(name: str) -> str:
    key = name.strip().lower()
    if key not in METHODS:
        raise UnknownMethodError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return key


def _config(args, **overrides) -> TraversalConfig:
    kw = dict(mac=args.mac, degree=args.degree, leaf_size=args.n0, method=_method_name(args.method))
    kw.update(overrides)
    return TraversalConfig(**kw)


def _sal_params(args) -> SalParams:
    return SalParams(a1=args.a1, b0=args.b0, b1=args.b1, rho_ratio=args.rho_ratio, variant=args.sal_variant)


def _emit(report: dict, args) -> None:
    io.dump_json(report, getattr(args, "report", None))


def _points_and_weights(args, default_field: str = "y43"):
    """Positions, weights, areas and values from ``--grid`` or ``--particles``."""
    if args.particles:
        data = io.read_particles(args.particles)
        return data["positions"], data["weights"], data.get("areas"), data.get("values"), {"particles": args.particles}
    kind, level = _grid_spec(args.grid)
    g = build_grid(kind, level)
    f = _field(args.field or default_field, g.centers, args.seed)
    return g.centers, f * g.areas, g.areas, f, {"grid": kind.value, "level": level}


def _field(name: str, points, seed: int) -> np.ndarray:
    key = name.lower()
    if key in EXACT_FIELDS:
        return real_spherical_harmonic(*EXACT_FIELDS[key], points)
    if key == "random":
        return np.random.default_rng(seed).standard_normal(len(points))
    if key == "ones":
        return np.ones(len(points))
    raise ConfigurationError(f"unknown field {name!r}; choose from {', '.join([*EXACT_FIELDS, 'random', 'ones'])}")


def _load_reference(path, n: int, dims: int) -> np.ndarray:
    cols = io.read_csv(path)
    if "phi" not in cols:
        raise InputFormatError(f"{path}: reference file needs a phi column")
    ref = np.column_stack([cols["phi"], cols["phi_y"], cols["phi_z"]]) if dims == 3 else cols["phi"]
    if len(ref) != n:
        raise DimensionMismatchError(f"reference has {len(ref)} rows, expected {n}")
    return ref


def _compare(phi, ref, areas) -> dict:
    a = areas if areas is not None else np.ones(len(phi))
    scale = np.abs(ref).max()
    return {
        "relative_l2_error": relative_l2_error(phi, ref, ref, a),
        "max_relative_component_error": float(np.abs(phi - ref).max() / scale) if scale > 0 else 0.0,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_grid(args) -> dict:
    if args.grid:
        kind, level = _grid_spec(args.grid)
    else:
        if args.kind is None or args.level is None:
            raise UsageError("grid needs --kind and --level (or --grid kind:level)")
        kind, level = GridKind.parse(args.kind), args.level
    g = build_grid(kind, level)
    cols = {"x": g.centers[:, 0], "y": g.centers[:, 1], "z": g.centers[:, 2], "area": g.areas}
    if args.out:
        io.write_csv(args.out, cols)
    return {"grid": kind.value, "level": level, "N": len(g), "total_area": float(g.areas.sum()), "out": args.out}


def cmd_sum(args) -> dict:
    kernel = get_kernel(_kernel_name(args.kernel), _sal_params(args))
    cfg = _config(args)
    pts, w, areas, _, source = _points_and_weights(args)
    res = fast_sum(pts, pts, w, kernel, cfg)
    report = {"N": len(pts), "kernel": kernel.name, **source, **res.report(), "config": _cfg_dict(cfg)}
    if not args.stats:
        report.pop("tree", None)
    if args.reference:
        if args.reference == "direct":
            t0 = time.perf_counter()
            ref = direct_sum(pts, pts, w, kernel)
            report["reference_seconds"] = time.perf_counter() - t0
        else:
            ref = _load_reference(args.reference, len(pts), kernel.out_dim)
        report.update(_compare(res.potential, ref, areas))
    if args.out:
        io.write_csv(args.out, io.potential_columns(pts, res.potential))
    report["environment"] = io.environment()
    return report


def cmd_solve(args) -> dict:
    kname = _kernel_name(args.kernel)
    if kname not in ("laplace", "biharmonic"):
        raise ConfigurationError("solve supports the laplace and biharmonic kernels")
    cfg = _config(args)
    pts, w, areas, f, source = _points_and_weights(args)
    if f is None:
        raise InputFormatError("solve needs a value column (lon,lat,area,value particle file)")
    res = fast_sum(pts, pts, w, kname, cfg)
    report = {"N": len(pts), "kernel": kname, **source, **res.report(), "config": _cfg_dict(cfg)}
    if not args.stats:
        report.pop("tree", None)
    cols = io.potential_columns(pts, res.potential)
    key = (args.field or "y43").lower()
    if not args.particles and key in EXACT_FIELDS:
        ex = exact_solution(kname, EXACT_FIELDS[key][0], f)
        report["E_FS_EX"] = relative_l2_error(res.potential, ex, ex, areas)
        cols["exact"] = ex
        if args.reference == "direct":
            ds = direct_sum(pts, pts, w, kname)
            report["E_DS_EX"] = relative_l2_error(ds, ex, ex, areas)
            report["E_FS_DS"] = relative_l2_error(res.potential, ds, ds, areas)
    if args.out:
        io.write_csv(args.out, cols)
    return report


def cmd_bve(args) -> dict:
    kind, level = _grid_spec(args.grid)
    init = args.init.lower().replace("-", "_")
    if init not in INITIAL_CONDITIONS:
        raise ConfigurationError(f"unknown initial condition {args.init!r}; choose from {', '.join(INITIAL_CONDITIONS)}")
    cfg = BveConfig(dt=args.dt, remesh=not args.no_remesh, neighbors=args.neighbors,
                    remesh_scheme=args.remesh_scheme, sum_config=_config(args))
    if cfg.dt <= 0 or args.steps < 0:
        raise ConfigurationError("need dt > 0 and steps >= 0")
    state = bve_initial(init, build_grid(kind, level))
    history = []

    def log(step, st):
        if args.every and step % args.every == 0 and init == "rossby_haurwitz":
            history.append({"step": step, "time": st.time, "E_zeta": vorticity_error(st)})

    t0 = time.perf_counter()
    state = bve_run(state, args.steps, cfg, log)
    report = {"N": len(state.zeta), "grid": kind.value, "level": level, "init": init, "steps": args.steps,
              "dt": cfg.dt, "time": state.time, "method": cfg.sum_config.method, "remesh": cfg.remesh,
              "remesh_scheme": cfg.remesh_scheme,
              "seconds": time.perf_counter() - t0}
    if init == "rossby_haurwitz":
        report["E_zeta"] = vorticity_error(state)
        report["history"] = history
    if args.out:
        cols = {"x": state.positions[:, 0], "y": state.positions[:, 1], "z": state.positions[:, 2],
                "zeta": state.zeta, "area": state.areas}
        if state.tracer is not None:
            cols["tracer"] = state.tracer
        io.write_csv(args.out, cols)
    return report


def cmd_sal(args) -> dict:
    params = _sal_params(args)
    cfg = _config(args, degree=args.degree if args.degree_set else 2)
    if args.particles:
        data = io.read_particles(args.particles)
        if "values" not in data:
            raise InputFormatError("SAL input needs lon,lat,area,value columns")
        pts, areas, eta, source = data["positions"], data["areas"], data["values"], {"particles": args.particles}
    else:
        kind, level = _grid_spec(args.grid)
        g = build_grid(kind, level)
        pts, areas, source = g.centers, g.areas, {"grid": kind.value, "level": level}
        eta = synthetic_ssh(pts, seed=args.seed)
    ssh = ScalarField(pts, areas, eta)
    t0 = time.perf_counter()
    out = sal_potential(ssh, params, cfg)
    report = {"N": len(pts), **source, "seconds": time.perf_counter() - t0, "config": _cfg_dict(cfg),
              "params": {"a1": params.a1, "b0": params.b0, "b1": params.b1, "rho_ratio": params.rho_ratio,
                         "variant": params.variant},
              "norm_ratio": float(np.sqrt(np.sum(out**2 * areas) / np.sum(eta**2 * areas)))}
    if args.reference == "direct":
        ref = direct_sum(pts, pts, eta * areas, get_kernel("sal", params))
        report.update(_compare(out, ref, areas))
    elif args.reference:
        report.update(_compare(out, _load_reference(args.reference, len(pts), 1), areas))
    if args.out:
        lon, lat = xyz_to_lonlat(pts)
        io.write_csv(args.out, {"lon": lon, "lat": lat, "area": areas, "eta": eta, "eta_sal": out})
    return report


def cmd_convergence(args) -> dict:
    kname = _kernel_name(args.kernel)
    if args.degrees:
        res = degree_sweep(kname, args.grid_kind, args.levels[0] if args.levels else 6, _int_list(args.degrees),
                           mac=args.mac, exact=args.exact)
        cols = ("degree", "N", "E_FS_DS")
    else:
        levels = _int_list(args.levels) if args.levels else [4, 5, 6]
        res = convergence_study(kname, args.grid_kind, levels, _config(args), args.exact, not args.no_direct)
        cols = tuple(k for k in ("level", "N", "E_DS_EX", "E_FS_EX", "E_FS_DS") if k in res["rows"][0])
    if args.out:
        io.write_csv(args.out, {c: [r[c] for r in res["rows"]] for c in cols})
    return res


def cmd_bench(args) -> dict:
    methods = [_method_name(m) for m in args.methods.split(",") if m]
    res = benchmark(_int_list(args.levels), methods, _kernel_name(args.kernel), args.grid_kind,
                    _config(args, method="csfmm"), args.repeats, args.direct_max_level, args.min_time)
    if args.out:
        io.write_csv(args.out, {
            "method": [METHODS.index(r["method"]) for r in res["rows"]],
            "level": [r["level"] for r in res["rows"]],
            "N": [r["N"] for r in res["rows"]],
            "seconds": [r["seconds"] for r in res["rows"]],
        })
        res["method_codes"] = {m: METHODS.index(m) for m in methods}
    res["environment"] = io.environment()
    return res


def _cfg_dict(cfg: TraversalConfig) -> dict:
    return {"method": cfg.method, "mac": cfg.mac, "degree": cfg.degree, "n0": cfg.n0}


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, kernel: str = "laplace") -> None:
    p.add_argument("--kernel", default=kernel, help=f"one of {', '.join(KERNEL_NAMES)}")
    p.add_argument("--method", default="csfmm", help=f"one of {', '.join(METHODS)}")
    p.add_argument("--mac", type=float, default=0.7)
    p.add_argument("--degree", type=int, default=6)
    p.add_argument("--n0", type=int, default=None, help="leaf size (default 4*degree^2)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", default=None, help="CSV output path")
    p.add_argument("--report", default=None, help="JSON report path (default stdout)")
    p.add_argument("--stats", action="store_true", help="include tree statistics in the report")


def _source(p: argparse.ArgumentParser, grid: str) -> None:
    p.add_argument("--grid", default=grid, help="kind:level, e.g. icosahedral:5")
    p.add_argument("--particles", default=None, help="CSV with x,y,z,weight or lon,lat,area,value")
    p.add_argument("--field", default=None, help="data field on a grid: y43, random or ones")
    p.add_argument("--reference", default=None, help="'direct' or a CSV of reference potentials")


def _sal_flags(p: argparse.ArgumentParser) -> None:
    d = SalParams()
    p.add_argument("--a1", type=float, default=d.a1)
    p.add_argument("--b0", type=float, default=d.b0)
    p.add_argument("--b1", type=float, default=d.b1)
    p.add_argument("--rho-ratio", type=float, default=d.rho_ratio)
    p.add_argument("--sal-variant", default=d.variant, choices=SAL_VARIANTS)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="csfmm", description="Fast kernel summation on the sphere.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("grid", help="write grid cell centers and areas")
    p.add_argument("--kind", default=None)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--grid", default=None, help="kind:level")
    p.add_argument("--out", "-o", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("sum", help="evaluate a kernel sum")
    _common(p)
    _source(p, "icosahedral:5")
    _sal_flags(p)
    p.set_defaults(func=cmd_sum)

    p = sub.add_parser("solve", help="Poisson or biharmonic Green's-function solve")
    _common(p)
    _source(p, "icosahedral:5")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bve", help="vortex-method run of the barotropic vorticity equation")
    _common(p, kernel="biot_savart")
    p.add_argument("--grid", default="icosahedral:4")
    p.add_argument("--init", default="rossby_haurwitz", help=f"one of {', '.join(INITIAL_CONDITIONS)}")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--neighbors", type=int, default=12)
    p.add_argument("--no-remesh", action="store_true")
    p.add_argument("--remesh-scheme", choices=["spline", "lsq"], default="spline")
    p.add_argument("--every", type=int, default=0, help="record the vorticity error every k steps")
    p.set_defaults(func=cmd_bve)

    p = sub.add_parser("sal", help="self-attraction and loading convolution")
    _common(p, kernel="sal")
    _source(p, "icosahedral:5")
    _sal_flags(p)
    p.set_defaults(func=cmd_sal)

    p = sub.add_parser("convergence", help="error-versus-N table or degree sweep")
    _common(p)
    p.add_argument("--grid-kind", default="icosahedral")
    p.add_argument("--levels", default=None, help="comma-separated levels (default 4,5,6)")
    p.add_argument("--exact", default="y43")
    p.add_argument("--no-direct", action="store_true")
    p.add_argument("--degrees", default=None, help="run a degree sweep at the first level instead")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("bench", help="runtime table and scaling exponents")
    _common(p)
    p.add_argument("--grid-kind", default="icosahedral")
    p.add_argument("--levels", default="4,5,6,7")
    p.add_argument("--methods", default="direct,cstc,csfmm")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--direct-max-level", type=int, default=None)
    p.add_argument("--min-time", type=float, default=1.0, help="seconds per timing sample (calls are repeated)")
    p.set_defaults(func=cmd_bench)
    return ap


def _fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return EXIT_CODES.get(code, 1)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "sal":
            args.degree_set = "--degree" in (argv if argv is not None else sys.argv[1:])
        if args.command == "convergence" and args.degrees and args.levels:
            args.levels = _int_list(args.levels)
        set_threads(args.threads)
        report = args.func(args)
        if report is not None:
            _emit(report, args)
        return 0
    except CSFMMError as exc:
        return _fail(exc.code, str(exc))
    except OSError as exc:
        return _fail("E_IO", str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort machine-readable error
        return _fail("E_INTERNAL", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
