"""CSV / markdown writers for result tables and per-iteration series."""

from __future__ import annotations

import csv
import io
import math
import os
from typing import Optional

import numpy as np

from ..quadprob import QuadraticProblem
from ..solver import IterationTrace
from .plan import ResultRow, ResultTable

CSV_COLUMNS = ("problem", "kappa", "epsilon", "method",
               "mean_iters", "mean_matvecs", "mean_seconds", "n_runs")

TRACE_QUANTITIES = ("alpha_tilde_dev", "alpha_dev", "gnorm")


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def table_rows(table: ResultTable, timing: bool = True) -> list[dict]:
    out = []
    for r in table.rows:
        out.append({
            "problem": r.problem,
            "kappa": r.kappa,
            "epsilon": r.epsilon,
            "method": r.method,
            "mean_iters": r.mean_iters,
            "mean_matvecs": r.mean_matvecs,
            "mean_seconds": r.mean_seconds if timing else None,
            "n_runs": r.n_runs,
        })
    return out


def emit_csv(table: ResultTable, path, timing: bool = True) -> str:
    """Write the summary CSV; ``timing=False`` blanks the wall-time column
    so the file is byte-reproducible."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table_rows(table, timing):
        writer.writerow([
            row["problem"], _num(row["kappa"]), _num(row["epsilon"]), row["method"],
            _num(row["mean_iters"]), _num(row["mean_matvecs"]), _num(row["mean_seconds"]),
            row["n_runs"],
        ])
    _write(path, buf.getvalue())
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    """Parse a file written by :func:`emit_csv` back into row dicts."""
    def num(s):
        return None if s == "" else float(s)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{
            "problem": d["problem"], "kappa": num(d["kappa"]), "epsilon": num(d["epsilon"]),
            "method": d["method"], "mean_iters": num(d["mean_iters"]),
            "mean_matvecs": num(d["mean_matvecs"]), "mean_seconds": num(d["mean_seconds"]),
            "n_runs": int(d["n_runs"]),
        } for d in reader]


def _fmt_mean(row: ResultRow, attr: str) -> str:
    val = getattr(row, attr)
    text = f"{val:.2f}" if attr == "mean_seconds" else f"{val:.1f}"
    return text + ("*" if row.failures else "")


def _sci(x: float) -> str:
    exp = math.log10(x)
    return f"1e{int(round(exp))}" if abs(exp - round(exp)) < 1e-9 else f"{x:g}"


def _pivot(table: ResultTable):
    methods: list = []
    groups: dict = {}
    for r in table.rows:
        if r.method not in methods:
            methods.append(r.method)
        groups.setdefault(r.problem, {}).setdefault((r.kappa, r.epsilon), {})[r.method] = r
    return methods, groups


def markdown_table(table: ResultTable, timing: bool = True) -> str:
    """Synthetic sets: one block per set with (kappa, eps) rows and a method
    column each, entries being mean iterations.  Matrix problems: one row
    per matrix, followed by a mean-CPU-time table when ``timing``.
    Entries with a non-converged run are starred."""
    methods, groups = _pivot(table)
    lines = []
    synthetic = {p: g for p, g in groups.items() if any(k is not None for k, _ in g)}
    matrices = {p: g for p, g in groups.items() if p not in synthetic}

    if synthetic:
        lines.append("| kappa | epsilon | " + " | ".join(methods) + " |")
        lines.append("|---" * (2 + len(methods)) + "|")
        for prob, cells in synthetic.items():
            lines.append(f"| **{prob}** |" + " |" * (1 + len(methods)))
            for (kappa, eps), per in cells.items():
                vals = [_fmt_mean(per[m], "mean_iters") if m in per else "" for m in methods]
                lines.append(f"| {_sci(kappa)} | {_sci(eps)} | " + " | ".join(vals) + " |")
    if matrices:
        if lines:
            lines.append("")
        attrs = [("mean_iters", "Mean iterations")]
        if timing:
            attrs.append(("mean_seconds", "Mean CPU time (s)"))
        for attr, title in attrs:
            lines.append(f"{title}\n")
            lines.append("| matrix | epsilon | " + " | ".join(methods) + " |")
            lines.append("|---" * (2 + len(methods)) + "|")
            for prob, cells in matrices.items():
                for (_, eps), per in cells.items():
                    vals = [_fmt_mean(per[m], attr) if m in per else "" for m in methods]
                    lines.append(f"| {prob} | {_sci(eps)} | " + " | ".join(vals) + " |")
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def emit_markdown(table: ResultTable, path, timing: bool = True) -> str:
    text = markdown_table(table, timing)
    _write(path, text)
    return text


def trace_series(trace: IterationTrace, quantity: str,
                 problem: Optional[QuadraticProblem] = None) -> np.ndarray:
    """``(k, value)`` pairs for one traced quantity.

    ``alpha_tilde_dev`` is ``|alpha_tilde_k - 1/l_n|`` (needs a trace run
    with ``observe_tilde``), ``alpha_dev`` is ``|alpha_k - 2/(l_1 + l_n)|``
    and ``gnorm`` is ``||g_k||``.  The first two need known extremes.
    """
    if quantity == "gnorm":
        vals = trace.gnorms
    elif quantity in ("alpha_tilde_dev", "alpha_dev"):
        if problem is None or problem.known_extremes is None:
            raise ValueError(f"{quantity} needs a problem with known extreme eigenvalues")
        l1, ln = problem.known_extremes
        if quantity == "alpha_dev":
            vals = np.abs(trace.alphas - 2.0 / (l1 + ln))
        else:
            if trace.alpha_tilde is None:
                raise ValueError("trace has no observed short steps")
            vals = np.abs(trace.alpha_tilde - 1.0 / ln)
    else:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {TRACE_QUANTITIES}")
    return np.column_stack((np.arange(len(vals)), vals))


def emit_trace_series(trace: IterationTrace, quantity: str, path,
                      problem: Optional[QuadraticProblem] = None) -> np.ndarray:
    series = trace_series(trace, quantity, problem)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("k", quantity))
    for k, v in series:
        writer.writerow((int(k), repr(float(v))))
    _write(path, buf.getvalue())
    return series


def _write(path, text: str) -> None:
    if path is None:
        return
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
