"""Deterministic CSV export and import of branches and tables.

Numbers are written with 17 significant digits so that reading a file back
reproduces every double exactly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import backbone as bb
from . import hb
from .continuation import Branch, BranchKind
from .quadrature import locus_table

FLOAT_FORMAT = "%.17g"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v == 0.0:
        return "0"  # drop the sign of negative zero
    return FLOAT_FORMAT % v


def coefficient_columns(H: int) -> list:
    """Names of the Fourier coefficient columns ``q{i}_a0, q{i}_a1, q{i}_b1, ...``."""
    names = []
    for i in (1, 2):
        names.append(f"q{i}_a0")
        for k in range(1, H + 1):
            names += [f"q{i}_a{k}", f"q{i}_b{k}"]
    return names


def backbone_columns(H: int) -> list:
    return ["Omega_Hz", "U1", "U2", "phi1", "phi2", "phase_difference"] + coefficient_columns(H)


def branch_table(branch: Branch, phase_locations=None):
    """Column names and rows of a branch in export order.

    Backbones: ``Omega_Hz, U1, U2, phi1, phi2, phase_difference`` then the
    Fourier coefficients. Forced branches: the columns of
    :func:`nnm_approp.quadrature.locus_table`, then the modal forces
    ``P1, P2`` and the Fourier coefficients.
    """
    if not len(branch):
        raise ValueError("cannot export an empty branch")
    if branch.kind == BranchKind.BACKBONE:
        if branch.meta.get("method") == "analytic":
            p = branch.meta["p"]
            sols = [bb.analytic_solution(W, U1, U2, p) for W, U1, U2 in bb.analytic_points(branch)]
        else:
            sols = bb.numeric_solutions(branch)
        H = sols[0].H
        rows = []
        for sol in sols:
            U1, U2, f1, f2 = hb.amplitude_phase(sol)
            rows.append([sol.Omega / (2 * np.pi), U1, U2, f1, f2, np.mod(f1 - f2, 2 * np.pi),
                         *sol.coeffs.reshape(-1)])
        return backbone_columns(H), np.array(rows)
    prob = branch.meta["problem"]
    cols, rows = locus_table(branch, phase_locations)
    extra = []
    for pt in branch.points:
        sol = prob.solution(pt.unknowns)
        extra.append([*prob.modal_force(pt.unknowns), *sol.coeffs.reshape(-1)])
    return cols + ["P1", "P2"] + coefficient_columns(prob.H), np.column_stack([rows, extra])


def write_table(path, columns, rows) -> Path:
    """Write a header plus one line per row; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_bytes(buf.getvalue().encode())
    return path


def export_branch(branch: Branch, path, phase_locations=None) -> Path:
    cols, rows = branch_table(branch, phase_locations)
    return write_table(path, cols, rows)


def read_table(path):
    """Header and float rows of a numeric CSV written by :func:`write_table`."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in line] for line in r if line]
    return header, np.array(rows).reshape(len(rows), len(header))


def solutions_from_table(header, rows):
    """Rebuild ``(HarmonicSolution, P)`` pairs from an exported branch table."""
    coeff = [c for c in header if c.startswith("q1_")]
    H = (len(coeff) - 1) // 2
    names = coefficient_columns(H)
    try:
        idx = [header.index(c) for c in names]
        iW = header.index("Omega_Hz")
    except ValueError as exc:
        raise ValueError(f"not an exported branch table: {exc}") from None
    has_P = "P1" in header and "P2" in header
    out = []
    for r in rows:
        sol = hb.HarmonicSolution(H, r[idx].reshape(2, -1), r[iW] * 2 * np.pi)
        P = r[[header.index("P1"), header.index("P2")]] if has_P else np.zeros(2)
        out.append((sol, P))
    return out


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
