"""Shared, session-cached branches (the expensive continuation runs).

Acceptance results recorded through the ``acceptance`` fixture are repeated
in the terminal summary, one PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from nnm_approp import backbone as bb
from nnm_approp import quadrature as qd
from nnm_approp.model import crossbeam_table1, synthetic_shapes

TWO_FORCE_PAIR = ("main_beam_offset", "cross_tip_left")


@pytest.fixture(scope="session")
def model():
    return crossbeam_table1()


@pytest.fixture(scope="session")
def shapes():
    return synthetic_shapes()


@pytest.fixture(scope="session")
def numeric_backbones(model):
    """NNM1 and NNM2 at the default number of harmonics."""
    return {1: bb.solve_numeric_backbone(model, -1), 2: bb.solve_numeric_backbone(model, +1)}


@pytest.fixture(scope="session")
def analytic_backbones(model):
    return {1: bb.solve_analytic_backbone(model, -1), 2: bb.solve_analytic_backbone(model, +1)}


@pytest.fixture(scope="session")
def two_force_pair():
    return TWO_FORCE_PAIR


@pytest.fixture(scope="session")
def two_force_loci(model, shapes):
    return {nnm: qd.quadrature_locus(model, shapes, list(TWO_FORCE_PAIR), mode=nnm) for nnm in (1, 2)}


@pytest.fixture(scope="session")
def single_force_loci(model, shapes):
    """NNM1 single-force loci at every location, for damping scales 1 and 0.1."""
    out = {}
    for scale in (1.0, 0.1):
        m = model if scale == 1.0 else model.scaled_damping(scale)
        out[scale] = {loc: qd.quadrature_locus(m, shapes, [loc], mode=1) for loc in shapes.locations}
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


SUITE_BUDGET_S = 300.0
_results = []
_t0 = [0.0]


def pytest_sessionstart(session):
    _t0[0] = time.perf_counter()


@pytest.fixture(scope="session")
def acceptance():
    """``record(label, ok, detail)`` prints and keeps one PASS/FAIL line."""

    def record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _results.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    elapsed = time.perf_counter() - _t0[0]
    tr = terminalreporter
    tr.section("acceptance criteria")
    for line in _results:
        tr.write_line(line)
    ok = elapsed < SUITE_BUDGET_S
    tr.write_line(f"criterion 8 (suite runtime < {SUITE_BUDGET_S:.0f} s): {'PASS' if ok else 'FAIL'}  "
                  f"{elapsed:.1f} s for the tests selected in this session")
