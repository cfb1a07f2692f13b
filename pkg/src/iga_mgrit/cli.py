"""Benchmark front end: single solves and experiment sweeps written as CSV and text tables.

Grid options (``--degree``, ``--k``, ``--nt``, ``--workers``) accept comma
separated lists. ``--config FILE`` reads ``key=value`` lines with the same
keys as the long flags; flags given on the command line take precedence.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import evaluate_field
from .mgrit import HierarchyError, MgritConfig, MgritSolver, level_sizes
from .time_integration import (ProblemSpec, SolverConfig, SpatialSolverError, manufactured_exact,
                               manufactured_problem)

log = logging.getLogger(__name__)

EXPERIMENTS = ("solve", "table_nt", "table_h", "mms_order", "strong_scaling", "weak_scaling", "nt_doubling")
COLUMNS = ["geometry", "p", "k", "N_t", "theta", "m", "cycle", "relax", "solver", "workers",
           "mgrit_iters", "final_rel_residual", "wall_seconds", "total_spatial_solves",
           "mean_spatial_iters"]

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}" if key else msg)
        self.key = key


def _int_list(text):
    vals = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    if not vals:
        raise ValueError("empty list")
    return vals


def _opt_int(text):
    return None if str(text).lower() in ("", "none") else int(text)


# key -> (converter, default, help); keys map to --key with underscores as hyphens
OPTIONS = {
    "experiment": (str, "solve", f"one of {', '.join(EXPERIMENTS)}"),
    "geometry": (str, "unit_square", "unit_square or quarter_annulus"),
    "theta": (float, 1.0, "theta of the time scheme (1 backward Euler, 0.5 Crank-Nicolson)"),
    "nt": (_int_list, None, "number of time steps (list)"),
    "tfinal": (float, None, "final time"),
    "kappa": (float, 1.0, "diffusion coefficient"),
    "degree": (_int_list, [2], "spline degree p (list)"),
    "k": (_int_list, [5], "mesh width h = 2^-k (list)"),
    "solver": (str, "pmg", "spatial solver: pmg, cg or direct"),
    "spatial_tol": (float, 1e-12, "relative tolerance of every spatial solve"),
    "spatial_max_iter": (int, 1000, "iteration cap of every spatial solve"),
    "pmg_nu": (int, 1, "ILUT smoothing steps before and after the coarse correction"),
    "pmg_gs": (int, 2, "Gauss-Seidel sweeps per h-level"),
    "pmg_fixed_cycles": (_opt_int, None, "run exactly this many p-multigrid cycles per solve"),
    "ilut_tau": (float, 1e-13, "ILUT drop tolerance"),
    "ilut_fill": (_opt_int, None, "ILUT fill limit per row (default: mean row length)"),
    "cycle": (str, "V", "MGRIT cycle: V, F or two_level"),
    "relax": (str, "FCF", "MGRIT relaxation: F or FCF"),
    "m": (int, 2, "temporal coarsening factor"),
    "coarse_floor": (int, None, "stop coarsening at this many steps"),
    "tol": (float, 1e-10, "MGRIT halting tolerance on the relative residual"),
    "max_iter": (int, 100, "maximum MGRIT iterations"),
    "workers": (_int_list, [1], "worker threads (list)"),
    "out": (str, None, "CSV output path (the text table goes next to it)"),
    "seed": (int, 0, "seed for randomized inputs"),
}

# experiment specific defaults for keys the user did not set
EXPERIMENT_DEFAULTS = {
    "solve": {"nt": [64], "tfinal": 0.1, "coarse_floor": 8},
    "table_nt": {"nt": [128, 256, 512], "tfinal": 0.1, "coarse_floor": 8},
    "table_h": {"nt": [128], "k": [4, 5, 6], "tfinal": 0.1, "coarse_floor": 8},
    "mms_order": {"nt": [8, 16, 32, 64], "tfinal": 1.0, "degree": [4], "k": [4], "coarse_floor": 2},
    "strong_scaling": {"nt": [1024], "degree": [3], "workers": [1, 2, 4], "tfinal": 0.1, "coarse_floor": 8},
    "weak_scaling": {"nt": [256], "degree": [3], "workers": [1, 2, 4], "tfinal": 0.1, "coarse_floor": 8},
    "nt_doubling": {"nt": [256, 512], "degree": [3], "tfinal": 0.1, "coarse_floor": 8},
}


@dataclass
class ExperimentSpec:
    experiment: str
    degrees: list
    ks: list
    nts: list
    workers: list
    out: Path | None = None
    seed: int = 0
    settings: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(None, message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="iga-mgrit-bench", description=__doc__.splitlines()[0])
    for key, (_, default, text) in OPTIONS.items():
        flag = "--" + key.replace("_", "-")
        extra = ["-p"] if key == "degree" else []
        ap.add_argument(flag, *extra, dest=key, default=None, metavar=key.upper(),
                        help=f"{text} (default: {default})" if default is not None else text)
    ap.add_argument("--config", default=None, help="file with key=value lines")
    ap.add_argument("-v", "--verbose", action="store_true", help="log MGRIT iterations")
    return ap


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError("config", f"cannot read {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("config", f"line {lineno} is not key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(key, "unknown key")
        out[key] = value
    return out


def _settings(argv) -> tuple[dict, bool]:
    args = build_parser().parse_args(argv)
    raw = read_config_file(args.config) if args.config else {}
    raw.update({k: v for k, v in vars(args).items() if k in OPTIONS and v is not None})
    settings = {}
    for key, (conv, default, _) in OPTIONS.items():
        if key in raw:
            try:
                settings[key] = conv(raw[key])
            except (TypeError, ValueError):
                raise UsageError(key, f"cannot parse {raw[key]!r}") from None
        else:
            settings[key] = default
    exp = settings["experiment"]
    if exp not in EXPERIMENTS:
        raise UsageError("experiment", f"unknown experiment {exp!r}")
    for key, value in EXPERIMENT_DEFAULTS[exp].items():
        if key not in raw:
            settings[key] = value
    return settings, args.verbose


def parse_config(argv=None):
    """Return ``(ExperimentSpec, ProblemSpec, MgritConfig, SolverConfig)`` for the first grid point."""
    s, _ = _settings([] if argv is None else list(argv))
    return _validate(s)


def _validate(s):
    for key in ("degree", "k", "nt", "workers"):
        if any(v < 1 for v in s[key]):
            raise UsageError(key, "values must be positive")
    if any(p > 8 for p in s["degree"]):
        raise UsageError("degree", "degree must not exceed 8")
    for key, ok in (("kappa", s["kappa"] > 0), ("tfinal", s["tfinal"] > 0), ("theta", 0 <= s["theta"] <= 1)):
        if not ok:
            raise UsageError(key, f"invalid value {s[key]}")
    try:
        ps = ProblemSpec(kappa=s["kappa"], t_final=s["tfinal"], n_steps=s["nt"][0], theta=s["theta"],
                         degree=s["degree"][0], mesh_exponent=s["k"][0], geometry=s["geometry"])
        ps.geometry_map()
    except ValueError as exc:
        raise UsageError("geometry", str(exc)) from None
    try:
        mcfg = MgritConfig(cycle=s["cycle"], relaxation=s["relax"], m=s["m"], tol=s["tol"],
                           max_iter=s["max_iter"], coarse_floor=s["coarse_floor"],
                           workers=s["workers"][0])
    except ValueError as exc:
        msg = str(exc)
        key = "cycle" if "cycle" in msg else "relax" if "relaxation" in msg else "m"
        raise UsageError(key, msg) from None
    try:
        scfg = SolverConfig(kind=s["solver"], rel_tol=s["spatial_tol"], max_iter=s["spatial_max_iter"],
                            nu=s["pmg_nu"], gs_sweeps=s["pmg_gs"], ilut_tau=s["ilut_tau"],
                            ilut_fill=s["ilut_fill"], fixed_cycles=s["pmg_fixed_cycles"])
    except ValueError as exc:
        raise UsageError("solver", str(exc)) from None
    nts = list(s["nt"])
    if s["experiment"] == "weak_scaling":
        nts = [n * w for n in nts for w in s["workers"]]
    for n in nts:
        try:
            level_sizes(n, mcfg)
        except HierarchyError as exc:
            raise UsageError("nt", str(exc)) from None
    out = Path(s["out"]) if s["out"] else None
    spec = ExperimentSpec(s["experiment"], s["degree"], s["k"], s["nt"], s["workers"], out, s["seed"], s)
    return spec, ps, mcfg, scfg


# ---------------------------------------------------------------------------
# running


def _problem(s, p, k, nt) -> ProblemSpec:
    kw = dict(kappa=s["kappa"], t_final=s["tfinal"], n_steps=nt, theta=s["theta"], degree=p,
              mesh_exponent=k)
    if s["experiment"] == "mms_order":
        return manufactured_problem(**kw)
    return ProblemSpec(geometry=s["geometry"], **kw)


def _mms_error(ps: ProblemSpec, disc, u) -> float:
    xs = np.linspace(0.0, 1.0, 21)
    grid = np.meshgrid(xs, xs)
    return max(float(np.abs(evaluate_field(disc.basis, disc.dofmap.extend_vector(u[j]), xs, xs)
                            - manufactured_exact(*grid, j * ps.dt)).max())
               for j in range(ps.n_steps + 1))


def run_point(s, mcfg: MgritConfig, scfg: SolverConfig, p, k, nt, workers, disc_cache=None) -> dict:
    ps = _problem(s, p, k, nt)
    cache = {} if disc_cache is None else disc_cache
    key = (p, k, ps.geometry)
    if key not in cache:
        cache[key] = ps.discretize()
    disc = cache[key]
    cfg = MgritConfig(cycle=mcfg.cycle, relaxation=mcfg.relaxation, m=mcfg.m, tol=mcfg.tol,
                      max_iter=mcfg.max_iter, coarse_floor=mcfg.coarse_floor, workers=workers)
    row = {"geometry": ps.geometry, "p": p, "k": k, "N_t": nt, "theta": ps.theta, "m": cfg.m,
           "cycle": cfg.cycle, "relax": cfg.relaxation, "solver": scfg.kind, "workers": workers}
    solver = MgritSolver(ps, cfg, scfg, disc)
    try:
        res = solver.solve()
        row.update(mgrit_iters=res.iterations, final_rel_residual=float(res.final_residual),
                   wall_seconds=res.wall_seconds, total_spatial_solves=res.stats.spatial_solves,
                   mean_spatial_iters=res.stats.mean_iterations, converged=res.converged)
        if s["experiment"] == "mms_order":
            row["max_error"] = _mms_error(ps, disc, res.u)
    except SpatialSolverError as exc:
        log.warning("%s", exc)
        row.update(mgrit_iters=0, final_rel_residual=math.nan, wall_seconds=math.nan,
                   total_spatial_solves=0, mean_spatial_iters=math.nan, converged=False)
        if s["experiment"] == "mms_order":
            row["max_error"] = math.nan
    finally:
        solver.close()
    return row


def _grid(spec: ExperimentSpec):
    s = spec.settings
    exp = spec.experiment
    if exp == "solve":
        return [(spec.degrees[0], spec.ks[0], spec.nts[0], spec.workers[0])]
    if exp in ("table_nt", "nt_doubling", "mms_order"):
        return [(p, spec.ks[0], nt, spec.workers[0]) for nt in spec.nts for p in spec.degrees]
    if exp == "table_h":
        return [(p, k, spec.nts[0], spec.workers[0]) for k in spec.ks for p in spec.degrees]
    if exp == "strong_scaling":
        return [(p, spec.ks[0], spec.nts[0], w) for p in spec.degrees for w in spec.workers]
    if exp == "weak_scaling":
        return [(p, spec.ks[0], spec.nts[0] * w, w) for p in spec.degrees for w in spec.workers]
    raise UsageError("experiment", f"unknown experiment {exp!r}")  # pragma: no cover


def run_experiment(spec: ExperimentSpec, mcfg: MgritConfig, scfg: SolverConfig) -> list[dict]:
    cache = {}
    rows = []
    for p, k, nt, w in _grid(spec):
        row = run_point(spec.settings, mcfg, scfg, p, k, nt, w, cache)
        log.info("p=%d k=%d N_t=%d workers=%d: %d iterations, residual %.2e, %.3f s",
                 p, k, nt, w, row["mgrit_iters"], row["final_rel_residual"], row["wall_seconds"])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else "nan"
    return str(v)


def rows_to_csv(rows, extra=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS + list(extra)
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _pivot(rows, row_key, col_key, value):
    rkeys = list(dict.fromkeys(r[row_key] for r in rows))
    ckeys = list(dict.fromkeys(r[col_key] for r in rows))
    cell = {(r[row_key], r[col_key]): value(r) for r in rows}
    return rkeys, ckeys, cell


def _aligned(header, body) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(x).rjust(wd) for x, wd in zip(line, widths)) for line in [header] + body]
    return "\n".join(lines)


def format_table(spec: ExperimentSpec, rows) -> str:
    """Human readable summary mirroring the layout of an iteration table."""
    exp = spec.experiment
    first = rows[0]
    meta = (f"# {exp}: geometry={first['geometry']} theta={first['theta']} m={first['m']} "
            f"cycle={first['cycle']} relax={first['relax']} solver={first['solver']}")
    iters = lambda r: r["mgrit_iters"] if r["converged"] else f"{r['mgrit_iters']}*"
    if exp in ("solve", "table_nt", "nt_doubling"):
        rk, ck, cell = _pivot(rows, "N_t", "p", iters)
        body = [[n] + [cell.get((n, p), "") for p in ck] for n in rk]
        text = meta + "\nMGRIT iterations (rows N_t, columns p)\n" + _aligned(["N_t"] + [f"p={p}" for p in ck], body)
        if exp == "nt_doubling":
            rk, ck, cell = _pivot(rows, "N_t", "p", lambda r: r["wall_seconds"])
            body = [[n] + [f"{cell[(n, p)]:.3f}" for p in ck] for n in rk]
            text += "\n\nwall seconds (mgrit solve only)\n" + _aligned(["N_t"] + [f"p={p}" for p in ck], body)
            if len(rk) > 1:
                ratios = [f"p={p}: {cell[(rk[-1], p)] / cell[(rk[-2], p)]:.2f}" for p in ck]
                text += f"\nratio N_t={rk[-1]} / N_t={rk[-2]}: " + ", ".join(ratios)
    elif exp == "table_h":
        rk, ck, cell = _pivot(rows, "k", "p", iters)
        body = [[f"2^-{k}"] + [cell.get((k, p), "") for p in ck] for k in rk]
        text = meta + f"\nMGRIT iterations at N_t={first['N_t']} (rows h, columns p)\n" + \
            _aligned(["h"] + [f"p={p}" for p in ck], body)
    elif exp == "mms_order":
        rk, ck, cell = _pivot(rows, "N_t", "p", lambda r: r["max_error"])
        body = []
        for i, n in enumerate(rk):
            line = [n]
            for p in ck:
                e = cell[(n, p)]
                rate = "" if i == 0 else f" ({math.log2(cell[(rk[i - 1], p)] / e):.2f})"
                line.append(f"{e:.3e}{rate}")
            body.append(line)
        text = meta + "\nmax nodal error vs exact solution (observed order)\n" + \
            _aligned(["N_t"] + [f"p={p}" for p in ck], body)
        for p in ck:
            text += f"\nleast-squares order p={p}: {observed_order(rk, [cell[(n, p)] for n in rk]):.3f}"
    else:
        base = {r["p"]: r["wall_seconds"] for r in rows if r["workers"] == rows[0]["workers"]}
        body = [[r["p"], r["workers"], r["N_t"], r["mgrit_iters"], f"{r['wall_seconds']:.3f}",
                 f"{base[r['p']] / r['wall_seconds']:.2f}"] for r in rows]
        text = meta + "\nworkers are threads in one process (shared memory), not distributed ranks\n" + \
            _aligned(["p", "workers", "N_t", "iters", "wall_s", "speedup"], body)
    return text + "\n"


def observed_order(nts, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    x = -np.log(np.asarray(nts, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        settings, verbose = _settings(argv)
        spec, _, mcfg, scfg = _validate(settings)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    rows = run_experiment(spec, mcfg, scfg)
    extra = ("max_error",) if spec.experiment == "mms_order" else ()
    text_csv = rows_to_csv(rows, extra)
    table = format_table(spec, rows)
    if spec.out is not None:
        try:
            spec.out.parent.mkdir(parents=True, exist_ok=True)
            spec.out.write_text(text_csv)
            spec.out.with_suffix(".txt").write_text(table)
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text_csv + "\n")
    sys.stdout.write(table)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
