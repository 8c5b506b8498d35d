"""Command-line front end.

Every subcommand resolves its configuration as defaults < ``--config`` JSON
file < flags, validates it, runs, and writes one JSON or CSV file (stdout when
``--output`` is absent).  Exit codes: 0 success, 1 solver failure, 2 invalid
configuration, 3 enumeration budget exceeded, 4 failed ``--assert`` check.
"""
from __future__ import annotations

import argparse
import cmath
import csv
import io
import json
import math
import os
import pathlib
import sys
import warnings
from typing import Any, Callable

import numpy as np

from . import __version__, dca, ising, onmodel, scaling
from .enumeration import BudgetError
from .lattice import SQUARE, HEXAGONAL, DomainError, domain_from_spec

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_BUDGET, EXIT_ASSERT = 0, 1, 2, 3, 4

# keys that do not affect results and stay out of the embedded config
_TRANSIENT = ("threads", "output", "config")


class ConfigError(ValueError):
    pass


# -- formatting -----------------------------------------------------------------

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    """Recursively turn numpy scalars, complex numbers and tuples into JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(obj) -> str:
    """JSON with sorted keys and every float printed to 17 significant digits."""
    obj = _plain(obj)

    def enc(o, ind):
        pad = "  " * (ind + 1)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(o[k], ind + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, ind + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, ind + 1) for v in o) + "\n" + "  " * ind + "]"
        if isinstance(o, float):
            return fmt(o) if math.isfinite(o) else "null"
        return json.dumps(o)

    return enc(obj, 0) + "\n"


def _csv(header: list[str], rows: list[list], meta: dict) -> str:
    out = io.StringIO()
    out.write(f"# prehol {__version__} config={json.dumps(_plain(meta), sort_keys=True)}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return out.getvalue()


# -- validation -------------------------------------------------------------------

def _int(lo: int | None = None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ConfigError(f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"expected an integer >= {lo}, got {v!r}")
        return int(v)
    return check


def _float(lo: float | None = None, hi: float | None = None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"expected a number, got {v!r}")
        if (lo is not None and v <= lo) or (hi is not None and v >= hi):
            raise ConfigError(f"{v!r} out of range ({lo}, {hi})")
        return float(v)
    return check


def _choice(*opts):
    def check(v):
        if v not in opts:
            raise ConfigError(f"expected one of {opts}, got {v!r}")
        return v
    return check


def _bool(v):
    if not isinstance(v, bool):
        raise ConfigError(f"expected true/false, got {v!r}")
    return v


def _opt(check):
    return lambda v: None if v is None else check(v)


def _domain(v):
    if not isinstance(v, dict):
        raise ConfigError("domain must be a JSON object")
    domain_from_spec(v)  # raises DomainError
    return v


def _float_list(v):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list of numbers")
    return [_float(0)(x) for x in v]


def _int_list(v):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list of integers")
    return [_int(1)(x) for x in v]


COMMON = {
    "seed": (0, _int(0)),
    "threads": (None, _opt(_int(1))),
    "format": ("json", _choice("json", "csv")),
    "output": (None, _opt(str)),
    "assert": (False, _bool),
    "plot": (False, _bool),
    "enumBudgetLog2": (None, _opt(_int(1))),
}

SCHEMAS: dict[str, dict[str, tuple[Any, Callable]]] = {
    "dca-check": {
        "domain": ({"kind": "square", "cellsX": 8, "cellsY": 8, "mesh": 0.125}, _domain),
        "function": ("z2", _choice("z", "z2", "z3", "exp")),
        "data": ("re_z2", _choice(*scaling.HARMONIC_DATA)),
    },
    "ising-observable": {
        "domain": ({"kind": "square", "cellsX": 2, "cellsY": 3, "mesh": 1.0}, _domain),
        "a": (0, _int(0)),
        "x": (ising.X_C, _float(0, 1)),
    },
    "ising-energy": {
        "size": (16, _int(2)),
        "boundary": ("plus", _choice("plus", "free")),
        "sweeps": (20000, _int(100)),
    },
    "on-verify": {
        "N": (1.0, _float(-1e-300, 2 + 1e-12)),
        "regime": ("dilute", _choice(onmodel.DILUTE, onmodel.DENSE)),
        "x": (None, _opt(_float(0))),
        "domain": (None, _opt(_domain)),
        "a": (0, _int(0)),
        "precise": (True, _bool),
    },
    "saw-census": {
        "kmax": (12, _int(1)),
        "oracleKmax": (14, _int(0)),
        "sawKmax": (None, _opt(_int(1))),
    },
    "scaling-converge": {
        "study": ("dirichlet", _choice("observable", "dirichlet", "energy", "height", "bvp")),
        "meshes": (None, _opt(_float_list)),
        "data": ("re_z3", _choice(*scaling.HARMONIC_DATA)),
        "sizes": ([8, 16, 32], _int_list),
        "boundary": ("plus", _choice("plus", "free")),
        "sweeps": (200000, _int(100)),
        "maxCells": (16, _int(1)),
    },
}


def resolve(command: str, file_cfg: dict, flags: dict) -> dict:
    """Merge defaults, file and flags for ``command`` and validate every key."""
    schema = {**COMMON, **SCHEMAS[command]}
    if "command" in file_cfg and file_cfg["command"] != command:
        raise ConfigError(f"config file is for {file_cfg['command']!r}, not {command!r}")
    merged = {k: d for k, (d, _) in schema.items()}
    for src in (file_cfg, flags):
        for k, v in src.items():
            if k == "command":
                continue
            if k not in schema:
                raise ConfigError(f"unknown key {k!r} for {command}")
            merged[k] = v
    out = {}
    for k, (_, check) in schema.items():
        try:
            out[k] = check(merged[k])
        except ConfigError as exc:
            raise ConfigError(f"{k}: {exc}") from None
    if out["plot"] and not out["output"]:
        raise ConfigError("plot needs an output path")
    out["command"] = command
    return out


# -- commands -----------------------------------------------------------------------

class Result:
    def __init__(self, data: dict, header: list[str], rows: list[list], checks: dict[str, bool],
                 figure: Callable | None = None):
        self.data, self.header, self.rows, self.checks, self.figure = data, header, rows, checks, figure


_FUNCTIONS = {"z": lambda z: z, "z2": lambda z: z * z, "z3": lambda z: z**3, "exp": cmath.exp}


def _square(cfg) -> Any:
    d = domain_from_spec(cfg["domain"])
    if d.kind != SQUARE:
        raise ConfigError("this command needs a square-lattice domain")
    return d


def cmd_dca_check(cfg) -> Result:
    d = _square(cfg)
    f = _FUNCTIONS[cfg["function"]]
    F = dca.VertexFunction.from_callable(d, f)
    reports = [dca.cr_report(F)]
    H = dca.VertexFunction.from_callable(d, lambda z: f(z).real)
    if len(d.interior_vertices):
        where, lap = dca.laplacian_all(H)
        reports.append(dca._report("laplacian", list(where), lap))
        div = [dca.kirchhoff_vertex(dca.gradient(H), int(v)) - lv for v, lv in zip(where, lap)]
        reports.append(dca._report("kirchhoff_minus_laplacian", list(where), div))
    g = scaling.HARMONIC_DATA[cfg["data"]]
    sol = dca.solve_dirichlet(d, g)
    err = [sol.values[v] - g(z) for v, z in enumerate(d.vertices)]
    reports.append(dca._report(f"dirichlet:{cfg['data']}", list(range(d.n_vertices)), err))
    checks = {"kirchhoffMatchesLaplacian": all(r.max_residual <= 1e-10 for r in reports if r.op.startswith("kirchhoff"))}
    if cfg["function"] in ("z", "z2"):
        checks["cauchyRiemannExact"] = reports[0].max_residual <= 1e-10
    if cfg["data"] in scaling.DIRICHLET_EXACT:
        checks["dirichletExact"] = reports[-1].max_residual <= scaling.DIRICHLET_EXACT[cfg["data"]]
    rows = [[r.op, r.max_residual, json.dumps(r.to_dict()["argmaxLocation"])] for r in reports]
    return Result({"reports": [r.to_dict() for r in reports]}, ["op", "maxResidual", "argmaxLocation"], rows, checks)


def _stub(d, a: int) -> int:
    if not 0 <= a < len(d.stubs):
        raise ConfigError(f"stub {a} out of range 0..{len(d.stubs) - 1}")
    return a


def cmd_ising_observable(cfg) -> Result:
    d = _square(cfg)
    a = _stub(d, cfg["a"])
    params = ising.IsingParams(cfg["x"])
    F = ising.fermionic_field(d, a, params, budget=cfg["enumBudgetLog2"])
    res = dca.max_strong_residual(F)
    data = {
        "partitionFunction": ising.partition_function(d, params, cfg["enumBudgetLog2"]),
        "maxStrongResidual": res,
        "field": [{"x": cfg["x"], "z": m, "re": v.real, "im": v.imag} for m, v in enumerate(F.values)],
    }
    critical = params.is_critical
    if critical:
        G = scaling.solve_riemann_bvp(d, a)
        c, dev = scaling.proportionality(F.values, G.values)
        data["bvpRatio"] = c
        data["bvpDeviation"] = dev
    checks = {"strongIdentity": res <= 1e-10} if critical else {"identityBrokenOffCritical": res > 1e-10}
    if critical:
        checks["bvpMatches"] = data["bvpDeviation"] <= 1e-8
    rows = [[m, v.real, v.imag] for m, v in enumerate(F.values)]

    def figure(path):
        from . import plotting
        plotting.field(d.midedges, F.values, path, f"x = {cfg['x']:.6g}")

    return Result(data, ["z", "re", "im"], rows, checks, figure)


def cmd_ising_energy(cfg) -> Result:
    L = cfg["size"]
    e = ising.energy_density_mc(L, cfg["boundary"], cfg["sweeps"], cfg["seed"])
    dev = e.estimate - math.sqrt(2) / 2
    data = {**e.to_dict(), "deviation": dev}
    sign = 1 if cfg["boundary"] == "plus" else -1
    checks = {}
    if L * L <= 20:
        exact = ising.energy_density_exact(L, cfg["boundary"])
        data["exact"] = exact
        checks["withinThreeSigmaOfExact"] = abs(e.estimate - exact) <= 3 * e.stderr
    else:
        checks["deviationSign"] = sign * dev > 0
    rows = [[L, cfg["boundary"], e.estimate, e.stderr, dev]]
    return Result(data, ["size", "boundary", "estimate", "stderr", "deviation"], rows, checks)


def cmd_on_verify(cfg) -> Result:
    p = onmodel.critical_params(cfg["N"], cfg["regime"])
    trip = onmodel.verify_triplet_identities(p, cfg["x"])
    data = {"params": p.to_dict(), "triplet": trip.to_dict()}
    checks = {"tripletIdentities": max(trip.loop, trip.step) <= 1e-12}
    rows = [["x", p.x], ["sigma", p.s], ["loopResidual", trip.loop], ["stepResidual", trip.step]]
    figure = None
    if cfg["domain"] is not None:
        d = domain_from_spec(cfg["domain"])
        if d.kind != HEXAGONAL:
            raise ConfigError("on-verify needs a hexagonal domain")
        a = _stub(d, cfg["a"])
        F = onmodel.parafermionic_field(d, a, p, cfg["x"], budget=cfg["enumBudgetLog2"], precise=cfg["precise"])
        rep = onmodel.vertex_relation_report(F)
        bsum = onmodel.boundary_sum(F)
        data["vertexRelation"] = rep.to_dict()
        data["boundarySum"] = bsum
        data["boundarySumAbs"] = abs(bsum)
        rows += [["vertexRelation", rep.max_residual], ["boundarySumAbs", abs(bsum)]]
        if cfg["x"] is None:
            checks["vertexRelation"] = rep.max_residual <= 1e-10
            checks["boundarySum"] = abs(bsum) <= 1e-9

        def figure(path):
            from . import plotting
            plotting.field(d.midedges, F.values.astype(complex), path, f"N = {cfg['N']:g}, {cfg['regime']}")

    return Result(data, ["quantity", "value"], rows, checks, figure)


class KmaxLimitError(BudgetError):
    def __init__(self, kmax: int, limit: int):
        RuntimeError.__init__(self, f"kmax {kmax} exceeds the limit {limit} (sawKmax / PREHOL_SAW_KMAX)")
        self.needed, self.budget = kmax, limit


def saw_limit(value: int | None = None) -> int:
    if value is not None:
        return value
    return int(os.environ.get("PREHOL_SAW_KMAX", onmodel.DEFAULT_KMAX))


def cmd_saw_census(cfg) -> Result:
    kmax, limit = cfg["kmax"], saw_limit(cfg["sawKmax"])
    if kmax > limit:
        raise KmaxLimitError(kmax, limit)
    census = onmodel.saw_count(kmax, limit)
    conn = onmodel.connective_estimate(census)
    ko = min(cfg["oracleKmax"], kmax)
    naive = onmodel.saw_count_naive(ko) if ko else {}
    match = all(naive[k] == census.counts[k] for k in naive)
    rows = census.rows()
    data = {
        "rows": [{"k": k, "count": c, "root": r, "ratio": q} for k, c, r, q in rows],
        "connective": conn.to_dict(),
        "oracleKmax": ko,
        "oracleMatch": match,
    }
    checks = {
        "firstCounts": [census.counts[k] for k in range(1, min(kmax, 5) + 1)] == [3, 6, 12, 24, 48][:min(kmax, 5)],
        "oracleMatch": match,
    }
    if kmax >= 30:
        checks["rootsDecreasing"] = conn.decreasing
        checks["connectiveGap"] = conn.gap <= 0.05

    def figure(path):
        from . import plotting
        plotting.saw_roots(data["rows"], onmodel.MU, path)

    return Result(data, ["k", "count", "root", "ratio"], [list(r) for r in rows], checks, figure)


_DEFAULT_MESHES = {
    "observable": (1 / 8, 1 / 16, 1 / 32, 1 / 64),
    "dirichlet": (1 / 8, 1 / 16, 1 / 32, 1 / 64),
    "height": (1 / 16, 1 / 32, 1 / 64),
}


def cmd_scaling_converge(cfg) -> Result:
    study = cfg["study"]
    meshes = cfg["meshes"]
    if meshes is not None and any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise ConfigError("meshes must be strictly decreasing")
    if study == "bvp":
        data = scaling.bvp_equivalence_study(cfg["maxCells"], cfg["enumBudgetLog2"])
        rows = [[r["domain"], r["a"], r["deviation"]] for r in data["cases"]]
        return Result(data, ["domain", "a", "deviation"], rows, {"pass": data["pass"]})
    if meshes is None and study in _DEFAULT_MESHES:
        meshes = cfg["meshes"] = list(_DEFAULT_MESHES[study])
    if study == "height":
        rep = scaling.height_positivity_study(meshes)
        data = rep.to_dict()
        rows = [[m, b, i, r] for m, b, i, r in zip(rep.meshes, rep.boundary_max, rep.interior_min, rep.residual)]
        return Result(data, ["mesh", "boundaryMaxAbs", "interiorMin", "faceResidual"], rows, {"pass": rep.passed})
    if study == "observable":
        rep = scaling.observable_convergence_study(meshes)
    elif study == "dirichlet":
        rep = scaling.dirichlet_convergence_study(cfg["data"], meshes)
    else:
        rep = scaling.energy_trend_study(cfg["sizes"], cfg["boundary"], cfg["sweeps"], cfg["seed"])
    data = rep.to_dict()

    def figure(path):
        from . import plotting
        plotting.convergence(data, path)

    return Result(data, ["mesh", "error"], [[m, e] for m, e in zip(rep.meshes, rep.errors)],
                  {"pass": rep.passed}, figure)


COMMANDS = {
    "dca-check": cmd_dca_check,
    "ising-observable": cmd_ising_observable,
    "ising-energy": cmd_ising_energy,
    "on-verify": cmd_on_verify,
    "saw-census": cmd_saw_census,
    "scaling-converge": cmd_scaling_converge,
}


# -- argument parsing ---------------------------------------------------------------

def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


def _bool_arg(text: str) -> bool:
    if text.lower() not in ("true", "false"):
        raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")
    return text.lower() == "true"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prehol", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"prehol {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--output", "-o", default=S, help="output file (default: stdout)")
        p.add_argument("--format", choices=["json", "csv"], default=S)
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--threads", type=int, default=S, help="cap on worker threads")
        p.add_argument("--assert", dest="assert", action="store_const", const=True, default=S,
                       help="exit 4 when an acceptance check fails")
        p.add_argument("--plot", action="store_const", const=True, default=S,
                       help="also write a PNG figure next to the output")
        p.add_argument("--enum-budget-log2", dest="enumBudgetLog2", type=int, default=S,
                       help="largest cycle-space dimension to enumerate")
        return p

    p = common(sub.add_parser("dca-check", help="discrete complex analysis residual checks"))
    p.add_argument("--domain", type=_json_arg, default=S)
    p.add_argument("--function", default=S)
    p.add_argument("--data", default=S)

    p = common(sub.add_parser("ising-observable", help="fermionic observable by enumeration"))
    p.add_argument("--domain", type=_json_arg, default=S)
    p.add_argument("--a", type=int, default=S, help="stub index of the marked point")
    p.add_argument("--x", type=float, default=S)

    p = common(sub.add_parser("ising-energy", help="Monte Carlo energy density at the centre edge"))
    p.add_argument("--size", type=int, default=S)
    p.add_argument("--boundary", default=S)
    p.add_argument("--sweeps", type=int, default=S)

    p = common(sub.add_parser("on-verify", help="O(N) critical parameters and vertex relation"))
    p.add_argument("--N", type=float, default=S)
    p.add_argument("--regime", default=S)
    p.add_argument("--x", type=float, default=S)
    p.add_argument("--domain", type=_json_arg, default=S)
    p.add_argument("--a", type=int, default=S)
    p.add_argument("--precise", type=_bool_arg, default=S, metavar="{true,false}",
                   help="evaluate the field in extended precision (default true)")

    p = common(sub.add_parser("saw-census", help="self-avoiding walk counts on the hexagonal lattice"))
    p.add_argument("--kmax", type=int, default=S)
    p.add_argument("--oracle-kmax", dest="oracleKmax", type=int, default=S)
    p.add_argument("--saw-kmax", dest="sawKmax", type=int, default=S, help="largest kmax allowed")

    p = common(sub.add_parser("scaling-converge", help="convergence and cross-check studies"))
    p.add_argument("--study", default=S)
    p.add_argument("--meshes", type=_json_arg, default=S, help="JSON list, e.g. [0.125, 0.0625, 0.03125]")
    p.add_argument("--data", default=S)
    p.add_argument("--sizes", type=_json_arg, default=S)
    p.add_argument("--boundary", default=S)
    p.add_argument("--sweeps", type=int, default=S)
    p.add_argument("--max-cells", dest="maxCells", type=int, default=S)
    return ap


def _set_threads(n: int | None) -> None:
    try:
        import numba
    except ImportError:
        return
    cap = numba.config.NUMBA_NUM_THREADS
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # threading-layer probe chatter
        numba.set_num_threads(max(1, min(n or cap, cap)))


def _render(cfg: dict, res: Result) -> str:
    meta = {k: v for k, v in cfg.items() if k not in _TRANSIENT}
    if cfg["format"] == "csv":
        return _csv(res.header, res.rows, meta)
    doc = {"tool": "prehol", "version": __version__, "config": meta, "result": res.data}
    if cfg["assert"]:
        doc["checks"] = res.checks
    return dumps(doc)


def run(cfg: dict) -> int:
    """Execute a resolved config; returns the exit status."""
    _set_threads(cfg["threads"])
    res = COMMANDS[cfg["command"]](cfg)
    text = _render(cfg, res)
    if cfg["output"]:
        path = pathlib.Path(cfg["output"])
        path.write_text(text)
        if cfg["plot"]:
            if res.figure is None:
                print(f"prehol: no figure for {cfg['command']}", file=sys.stderr)
            else:
                res.figure(path.with_suffix(".png"))
    else:
        sys.stdout.write(text)
    if cfg["assert"]:
        for name, ok in res.checks.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}", file=sys.stderr)
        if not all(res.checks.values()):
            return EXIT_ASSERT
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    cfg_path = args.pop("config", None)
    try:
        file_cfg = {}
        if cfg_path:
            try:
                file_cfg = json.loads(pathlib.Path(cfg_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = resolve(command, file_cfg, args)
        return run(cfg)
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"prehol: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetError as exc:
        print(f"prehol: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (dca.SolverError, scaling.BvpError) as exc:
        print(f"prehol: solver failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
