"""Command line driver.

    tpfa mesh-info FILE
    tpfa study CONFIG
    tpfa bench-singular [--meshes DIR | --generate N,N,...] [--out FILE]
    tpfa transient CONFIG

Configs are INI-style ``key = value`` files.  All floats are written with
round-trip precision.  Exit status: 0 when every configured check passes,
1 when a check fails, 2 on mesh or config errors.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import BenchmarkRow, ErrorReport, h2_rate_study, observed_orders, sandwich_check, sine_product_oracle
from .errors import MeshError, TpfaError
from .mesh import generate_acute_triangular_grid, generate_square_grid, read_fvca5, read_mesh
from .singular import run_benchmark

DEFAULT_SEED = 42
GENERATORS = {"acute": generate_acute_triangular_grid, "square": generate_square_grid}


def load_mesh(path):
    text = Path(path).read_text()
    first = next((ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")), [])
    if first and first[0].lower() == "vertices":
        return read_fvca5(text)
    return read_mesh(text)


def thread_cap():
    """TPFA_THREADS as a positive int, or None when unset."""
    raw = os.environ.get("TPFA_THREADS")
    if raw is None:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("TPFA_THREADS must be a positive integer")
    return n


# ------------------------------------------------------------------ config


@dataclass
class StudyConfig:
    problem: str = "singular"
    family: str = "acute"
    levels: list = field(default_factory=lambda: [2, 4, 8, 16])
    mesh_files: list = field(default_factory=list)
    output: str = "out"
    seed: int = DEFAULT_SEED
    min_order: float = 0.85
    horizon: float = 1.0
    steps: list = field(default_factory=lambda: [4, 8, 16])
    coupling: str = "zero"
    lam: float = 0.0

    @classmethod
    def parse(cls, text: str, base: Path | None = None) -> "StudyConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        sec = cp["study"] if cp.has_section("study") else cp[cp.default_section]
        cfg = cls()
        cfg.problem = sec.get("problem", cfg.problem)
        if cfg.problem not in ("singular", "manufactured-h2", "transient-manufactured"):
            raise ValueError(f"unknown problem {cfg.problem!r}")
        cfg.family = sec.get("family", cfg.family)
        if cfg.family not in GENERATORS:
            raise ValueError(f"unknown mesh family {cfg.family!r}")
        if "levels" in sec:
            cfg.levels = _int_list(sec["levels"])
        if "mesh_files" in sec:
            files = [s.strip() for s in sec["mesh_files"].split(",") if s.strip()]
            cfg.mesh_files = [str((base or Path(".")) / f) for f in files]
        cfg.output = sec.get("output", cfg.output)
        if base is not None and not Path(cfg.output).is_absolute():
            cfg.output = str(base / cfg.output)
        cfg.seed = sec.getint("seed", cfg.seed)
        cfg.min_order = sec.getfloat("min_order", 0.95 if cfg.problem == "manufactured-h2" else cfg.min_order)
        if cp.has_section("transient"):
            tr = cp["transient"]
            cfg.horizon = tr.getfloat("T", cfg.horizon)
            if "N" in tr:
                cfg.steps = _int_list(tr["N"])
            cfg.coupling = tr.get("coupling", cfg.coupling)
            cfg.lam = tr.getfloat("lambda", cfg.lam)
        n_levels = len(cfg.mesh_files) or len(cfg.levels)
        if n_levels < 2:
            raise ValueError("at least two levels are needed for an order")
        return cfg

    def meshes(self):
        if self.mesh_files:
            return [load_mesh(p) for p in self.mesh_files]
        return [GENERATORS[self.family](n) for n in self.levels]


def _int_list(s):
    return [int(x) for x in s.replace(",", " ").split()]


def _fmt(x):
    return repr(float(x))


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ------------------------------------------------------------------ commands


def cmd_mesh_info(args) -> int:
    try:
        mesh = load_mesh(args.file)
    except MeshError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    q = mesh.quality()
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, {mesh.n_faces} edges")
    print(f"h = {q.h!r}")
    print(f"theta = {q.theta!r}")
    print("admissible: yes")
    return 0


def _singular_study(cfg, out: Path):
    lines = [BenchmarkRow.CSV_HEADER]
    reports = [ErrorReport.CSV_HEADER]
    rows = []
    for mesh in cfg.meshes():
        (row,) = run_benchmark([mesh])
        rows.append(row)
        lines.append(row.csv_row())
        reports.append(row.report.csv_row())
        # flush per level
        _write(out / "benchmark.csv", "\n".join(lines) + "\n")
        _write(out / "report.csv", "\n".join(reports) + "\n")
    h = [r.h for r in rows]
    orders = observed_orders(h, [r.e2 for r in rows])
    tail = orders[-3:]
    checks = {
        "l2_order_ok": bool(np.all(tail >= cfg.min_order)),
        "delta_decreasing": bool(np.all(np.diff([r.e4 for r in rows]) < 0)),
        "sandwich_ok": all(sandwich_check(r.report).ok for r in rows),
        "zeta_zero": all(r.report.conformity <= 1e-8 for r in rows),
    }
    _write(out / "plot.dat", "".join(f"{r.h!r} {r.e1!r} {r.e2!r} {r.e3!r} {r.e4!r} {r.e5!r}\n" for r in rows))
    summary = {f"order_l2_{i}": o for i, o in enumerate(orders)}
    return checks, summary


def _h2_study(cfg, out: Path):
    rows, l2o, go = h2_rate_study(cfg.meshes(), sine_product_oracle())
    _write(out / "report.csv", ErrorReport.CSV_HEADER + "\n" + "".join(r.report.csv_row() + "\n" for r in rows))
    _write(out / "plot.dat", "".join(f"{r.report.h!r} {r.report.l2_error!r} {r.report.consistent_grad_error!r}\n"
                                     for r in rows))
    checks = {
        "l2_order_ok": bool(np.all(l2o >= cfg.min_order)),
        "grad_order_ok": bool(np.all(go >= cfg.min_order)),
        "theta_bound_ok": all(r.theta_ok for r in rows),
        "sandwich_ok": all(sandwich_check(r.report).ok for r in rows),
    }
    summary = {f"order_l2_{i}": o for i, o in enumerate(l2o)}
    summary.update({f"order_grad_{i}": o for i, o in enumerate(go)})
    return checks, summary


def _transient_study(cfg, out: Path):
    from .transient import CouplingMap, TimeGrid, TransientRun, run_manufactured

    coupling = CouplingMap(cfg.coupling, cfg.lam)
    meshes = cfg.meshes()
    if len(meshes) != len(cfg.steps):
        raise ValueError("transient studies need one step count per mesh level")
    runs = []
    lines = [TransientRun.CSV_HEADER]
    for mesh, n in zip(meshes, cfg.steps):
        run = run_manufactured(mesh, TimeGrid(cfg.horizon, n), coupling)
        runs.append(run)
        lines.append(run.csv_row())
        _write(out / "transient.csv", "\n".join(lines) + "\n")
        _write(out / f"norms_N{n}.csv", run.solution.to_csv())
    deltas = [r.delta.total for r in runs]
    orders = observed_orders([r.h for r in runs], deltas)
    checks = {
        "delta_decreasing": bool(np.all(np.diff(deltas) < 0)),
        "zeta_below_delta": all(r.zeta <= r.delta.total for r in runs),
    }
    summary = {f"order_delta_{i}": o for i, o in enumerate(orders)}
    summary.update({f"ratio_{i}": r.ratio for i, r in enumerate(runs)})
    return checks, summary


STUDIES = {"singular": _singular_study, "manufactured-h2": _h2_study, "transient-manufactured": _transient_study}


def _run_config(path, problem=None) -> int:
    path = Path(path)
    try:
        cfg = StudyConfig.parse(path.read_text(), base=path.parent)
    except (ValueError, KeyError, configparser.Error) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2
    if problem is not None:
        cfg.problem = problem
    out = Path(cfg.output)
    try:
        checks, summary = STUDIES[cfg.problem](cfg, out)
    except MeshError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2
    except TpfaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    ok = all(checks.values())
    text = [f"problem = {cfg.problem}", f"seed = {cfg.seed}"]
    text += [f"{k} = {_fmt(v)}" for k, v in summary.items()]
    text += [f"{k} = {'pass' if v else 'fail'}" for k, v in checks.items()]
    text.append(f"status = {'pass' if ok else 'fail'}")
    _write(out / "summary.txt", "\n".join(text) + "\n")
    print("\n".join(text))
    return 0 if ok else 1


def cmd_study(args) -> int:
    return _run_config(args.config)


def cmd_transient(args) -> int:
    return _run_config(args.config, problem="transient-manufactured")


def cmd_bench_singular(args) -> int:
    try:
        if args.meshes:
            files = sorted(p for p in Path(args.meshes).iterdir() if p.is_file())
            meshes = [load_mesh(p) for p in files]
        else:
            meshes = [generate_acute_triangular_grid(n) for n in _int_list(args.generate)]
    except MeshError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    text = BenchmarkRow.CSV_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in run_benchmark(meshes))
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tpfa", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("mesh-info", help="print mesh counts and quality")
    s.add_argument("file")
    s.set_defaults(func=cmd_mesh_info)
    s = sub.add_parser("study", help="run a convergence study from a config file")
    s.add_argument("config")
    s.set_defaults(func=cmd_study)
    s = sub.add_parser("bench-singular", help="singular benchmark table h,e1..e5")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--meshes", help="directory of mesh files, sorted by name")
    g.add_argument("--generate", default="2,4,8,16", help="acute grid resolutions")
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench_singular)
    s = sub.add_parser("transient", help="manufactured heat problem from a config file")
    s.add_argument("config")
    s.set_defaults(func=cmd_transient)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        thread_cap()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
