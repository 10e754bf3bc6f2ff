"""Command-line front end: ``solve``, ``bench`` and ``inspect``.

Exit codes: 0 Converged, 2 Stagnated, 3 Breakdown, 4 MaxIter, 1 usage or
input errors.  Set ``QTSDA_THRESHOLD`` to change the default compression
threshold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import QtsdaError
from .models import (PRESETS, DriftClass, QuarterPlaneModel, build_coefficients, classify_drift,
                     compute_symbol_g, load_model, make_gtilde_rank1, make_gtilde_toeplitz, preset)
from .qt.eqt import DEFAULT_THRESHOLD
from .solver import DefectCorrected, SolveReport, Standard, StopRule, Termination, run_fixed_point, solve_sda

__all__ = ["main", "run_method", "MethodResult", "METHODS", "EXIT_CODES", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1.0"
METHODS = ("sda", "sda1", "sda2", "fpi1", "fpi2")
EXIT_CODES = {
    Termination.CONVERGED: 0,
    Termination.STAGNATED: 2,
    Termination.BREAKDOWN: 3,
    Termination.MAX_ITER: 4,
}
EXIT_USAGE = 1
BENCH_COLUMNS = ("model", "method", "seconds", "iterations", "residual")
INSPECT_COLUMNS = ("test", "lb", "ub", "rc", "cc", "rk", "lim")
CLASSICAL_DIAGNOSTIC = "solution has nonzero limit part; classical SDA cannot converge"


def default_threshold() -> float:
    raw = os.environ.get("QTSDA_THRESHOLD")
    if raw is None or not raw.strip():
        return DEFAULT_THRESHOLD
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"QTSDA_THRESHOLD is not a number: {raw!r}") from None
    if not value > 0:
        raise UsageError("QTSDA_THRESHOLD must be positive")
    return value


class UsageError(Exception):
    pass


@dataclass
class MethodResult:
    model: str
    method: str
    drift: DriftClass
    report: SolveReport

    @property
    def termination(self) -> Termination:
        return self.report.termination


def resolve_model(spec: str) -> QuarterPlaneModel:
    """A preset name or the path of a model file."""
    if spec.lower() in PRESETS:
        return preset(spec)
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"unknown preset and no such model file: {spec!r}")
    try:
        return load_model(path)
    except OSError as exc:
        raise UsageError(f"cannot read model file {spec!r}: {exc}") from None


def run_method(model: QuarterPlaneModel, method: str, tol: float = 1e-14,
               max_iter: int | None = None, threshold: float = DEFAULT_THRESHOLD) -> MethodResult:
    """Solve the equation of ``model`` with one of :data:`METHODS`."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    drift = classify_drift(model)
    coeffs = build_coefficients(model, threshold)
    if method.endswith("1"):
        gtilde = make_gtilde_rank1(threshold)
    elif method.endswith("2"):
        gtilde = make_gtilde_toeplitz(compute_symbol_g(model, threshold), threshold)
    else:
        gtilde = None
    if method.startswith("fpi"):
        stop = StopRule(tol=tol, max_iter=100_000 if max_iter is None else max_iter)
        report = run_fixed_point(*coeffs, gtilde, stop, method=method)
    else:
        stop = StopRule(tol=tol, max_iter=64 if max_iter is None else max_iter)
        scheme = Standard() if gtilde is None else DefectCorrected(gtilde)
        report = solve_sda(*coeffs, scheme, stop, method=method)
    if (method == "sda" and drift is DriftClass.EQT_SOLUTION
            and report.termination is not Termination.CONVERGED):
        report.message = f"{CLASSICAL_DIAGNOSTIC} ({report.message})" if report.message else CLASSICAL_DIAGNOSTIC
    return MethodResult(model.name, method, drift, report)


def _finite(x):
    return x if isinstance(x, float) and math.isfinite(x) else None


def _stats_dict(solution):
    if solution is None or not hasattr(solution, "structure_stats"):
        return None
    st = solution.structure_stats()
    return dict(zip(INSPECT_COLUMNS[1:], st.as_row()))


def solve_record(res: MethodResult, cfg) -> dict:
    rep = res.report
    return {
        "kind": "solve",
        "schema_version": SCHEMA_VERSION,
        "model": res.model,
        "method": res.method,
        "drift": res.drift.value,
        "termination": rep.termination.value,
        "exit_code": EXIT_CODES[rep.termination],
        "iterations": rep.iterations,
        "best_iteration": rep.best_iteration,
        "residual": _finite(rep.residual),
        "residual_history": [_finite(float(r)) for r in rep.residual_history],
        "f_norm_history": [_finite(float(r)) for r in rep.f_norm_history],
        "wall_time": round(rep.wall_time, 3),
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "threshold": cfg.threshold,
        "message": rep.message,
        "structure_stats": _stats_dict(rep.solution),
    }


def _write(text: str, output) -> None:
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _fmt_res(x) -> str:
    return "nan" if x is None else f"{x:.3e}"


def _render_solve(rec: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rec, indent=2) + "\n"
    st = rec["structure_stats"] or {}
    if fmt == "csv":
        cols = ("model", "method", "termination", "iterations", "residual", "seconds") + INSPECT_COLUMNS[1:]
        row = [rec["model"], rec["method"], rec["termination"], rec["iterations"],
               rec["residual"], f"{rec['wall_time']:.3f}"] + [st.get(c, "") for c in INSPECT_COLUMNS[1:]]
        return _csv(cols, [row])
    lines = [
        f"model        {rec['model']} ({rec['drift']})",
        f"method       {rec['method']}",
        f"termination  {rec['termination']}",
        f"iterations   {rec['iterations']} (best {rec['best_iteration']})",
        f"residual     {_fmt_res(rec['residual'])}",
        f"seconds      {rec['wall_time']:.3f}",
        "history      " + " ".join(_fmt_res(r) for r in rec["residual_history"]),
    ]
    if st:
        lines.append("structure    " + " ".join(f"{k}={v}" for k, v in st.items()))
    if rec["message"]:
        lines.append(f"note         {rec['message']}")
    return "\n".join(lines) + "\n"


def _dump(solution, n: int, path: str) -> None:
    if solution is None:
        return
    block = solution.truncate(n) if hasattr(solution, "truncate") else np.asarray(solution)[:n, :n]
    np.save(path, block)


def cmd_solve(args) -> int:
    model = resolve_model(args.model)
    res = run_method(model, args.method, args.tol, args.max_iter, args.threshold)
    rec = solve_record(res, args)
    _write(_render_solve(rec, args.format), args.output)
    if args.dump:
        path = args.dump_path or f"{model.name}_{args.method}_G{args.dump}.npy"
        _dump(res.report.solution, args.dump, path)
    if res.termination is not Termination.CONVERGED and res.report.message:
        print(f"qtsda: {res.termination.value}: {res.report.message}", file=sys.stderr)
    return EXIT_CODES[res.termination]


def _bench_cell(job):
    spec, method, tol, max_iter, threshold = job
    t0 = time.perf_counter()
    model = resolve_model(spec)
    try:
        res = run_method(model, method, tol, max_iter, threshold)
        rep = res.report
        return {"model": model.name, "method": method, "seconds": round(rep.wall_time, 3),
                "iterations": rep.iterations, "residual": _finite(rep.residual),
                "termination": rep.termination.value}
    except QtsdaError as exc:
        return {"model": model.name, "method": method,
                "seconds": round(time.perf_counter() - t0, 3), "iterations": 0,
                "residual": None, "termination": type(exc).__name__}


def cmd_bench(args) -> int:
    models = list(args.models or [])
    for spec in models:
        resolve_model(spec)  # fail early on bad names
    methods = list(args.methods or [])
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    jobs = [(spec, m, args.tol, args.max_iter, args.threshold) for spec in models for m in methods]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_bench_cell, jobs))
    else:
        rows = [_bench_cell(j) for j in jobs]
    rows.sort(key=lambda r: (r["model"], r["method"]))
    if args.format == "json":
        text = json.dumps({"kind": "bench", "schema_version": SCHEMA_VERSION, "rows": rows}, indent=2) + "\n"
    elif args.format == "csv":
        text = _csv(BENCH_COLUMNS, [
            [r["model"], r["method"], f"{r['seconds']:.3f}", r["iterations"],
             repr(r["residual"]) if r["termination"] == "Converged" else r["termination"]]
            for r in rows])
    else:
        text = "".join(f"{r['model']:<10} {r['method']:<6} {r['seconds']:>9.3f}s {r['iterations']:>7} "
                       f"{_fmt_res(r['residual'])} {r['termination']}\n" for r in rows)
    _write(text, args.output)
    return 0


def _test_label(name: str) -> str:
    return name[4:] if name.startswith("test") and name[4:].isdigit() else name


def cmd_inspect(args) -> int:
    model = resolve_model(args.model)
    res = run_method(model, args.method, args.tol, args.max_iter, args.threshold)
    st = _stats_dict(res.report.solution)
    if st is None:
        print(f"qtsda: no solution ({res.termination.value}: {res.report.message})", file=sys.stderr)
        return EXIT_CODES[res.termination]
    rec = {"kind": "inspect", "schema_version": SCHEMA_VERSION, "test": _test_label(model.name),
           "method": args.method, "drift": res.drift.value, "termination": res.termination.value, **st}
    if args.format == "json":
        text = json.dumps(rec, indent=2) + "\n"
    elif args.format == "csv":
        text = _csv(INSPECT_COLUMNS, [[rec[c] for c in INSPECT_COLUMNS]])
    else:
        text = (f"test {rec['test']} ({rec['drift']}, {args.method}: {rec['termination']})\n"
                + " ".join(f"{c}={rec[c]}" for c in INSPECT_COLUMNS[1:]) + "\n")
    _write(text, args.output)
    return EXIT_CODES[res.termination]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qtsda", description="Doubling solvers for quadratic matrix equations of "
                                          "quarter-plane random walks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, method_default="sda2"):
        sp.add_argument("--tol", type=_positive(float), default=1e-14, help="residual tolerance")
        sp.add_argument("--max-iter", type=_positive(int), default=None,
                        help="iteration cap (default 64 for SDA, 100000 for FPI)")
        sp.add_argument("--threshold", type=_positive(float), default=None,
                        help="compression threshold (default $QTSDA_THRESHOLD or 1e-15)")
        sp.add_argument("--output", "-o", default=None, help="output file (default stdout)")
        sp.add_argument("--format", choices=("json", "csv", "text"), default="text")

    sp = sub.add_parser("solve", help="solve one model")
    sp.add_argument("--model", required=True, help="preset name (test1|test2|test3) or model file")
    sp.add_argument("--method", choices=METHODS, default="sda2")
    sp.add_argument("--dump", type=_positive(int), default=None, metavar="N",
                    help="also save the leading N x N block of the solution as .npy")
    sp.add_argument("--dump-path", default=None)
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bench", help="table of time, iterations and residual")
    sp.add_argument("--models", nargs="*", default=["test1", "test2", "test3"])
    sp.add_argument("--methods", nargs="*", default=["sda1", "sda2", "fpi1", "fpi2"])
    sp.add_argument("--jobs", type=_positive(int), default=1, help="parallel worker processes")
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("inspect", help="structure statistics of the computed solution")
    sp.add_argument("--model", required=True)
    sp.add_argument("--method", choices=METHODS, default="sda2")
    common(sp)
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threshold is None:
            args.threshold = default_threshold()
        return args.func(args)
    except (UsageError, KeyError) as exc:
        print(f"qtsda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QtsdaError as exc:
        print(f"qtsda: {type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, ArithmeticError):
            return EXIT_CODES[Termination.BREAKDOWN]
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
