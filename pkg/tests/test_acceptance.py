"""Acceptance criteria A1-A8 at full sample sizes.

Every criterion runs on the reference configuration (30x30 IRS, 10 dBm,
t_p = 100, t_d = 10, t_s = 2, seed from the reference file) and reduces to the
rows produced by ``irs_skg.validation``.  Each test records one PASS/FAIL
line; the lines are printed together at the end of the session.
"""

import time

import pytest

from conftest import ACCEPTANCE_LINES
from irs_skg.config import defaults
from irs_skg.validation import (
    SuiteSettings,
    check_correlations,
    check_gaussianity,
    check_lambda,
    check_mutual_information,
    check_optimizer,
    check_quads,
    check_shapes,
    check_trace_identities,
)

CFG = defaults()
FULL = SuiteSettings(
    scenario=CFG.scenario(),
    plan=CFG.plan(),
    seed=CFG["seed"],
    corr_blocks=100_000,
    quad_blocks=1_000_000,
    mi_blocks=1_000_000,
    gauss_draws=1_000_000,
)

# wall-clock budget per criterion, seconds
BUDGET = {"A1": 120, "A2": 60, "A3": 300, "A4": 60, "A5": 300, "A6": 120, "A7": 300, "A8": 120}


def _verdict(criterion, summary, run):
    t0 = time.perf_counter()
    rows = run()
    elapsed = time.perf_counter() - t0
    required = [r for r in rows if not r.informational]
    ok = all(r.passed for r in required) and elapsed <= BUDGET[criterion]
    worst = summary(required)
    ACCEPTANCE_LINES.append(f"{criterion} {'PASS' if ok else 'FAIL'}  {worst}  ({elapsed:.1f} s)")
    for r in rows:
        if r.informational:
            ACCEPTANCE_LINES.append(f"   info: {r.check} = {r.statistic:.4g} (reference {r.reference:g})")
    failed = [r for r in required if not r.passed]
    assert not failed, failed
    assert elapsed <= BUDGET[criterion], f"{criterion} took {elapsed:.1f} s"
    return rows


def _max_stat(label):
    return lambda rows: f"max {label} = {max(r.statistic for r in rows):.3g}"


def test_a1_correlation_closed_forms():
    def summary(rows):
        gap = max(abs(r.statistic - r.reference) for r in rows)
        return f"max |rho_mc - rho_closed| = {gap:.4f} over {len(rows)} regimes"

    _verdict("A1", summary, lambda: check_correlations(FULL))


def test_a2_trace_identities():
    rows = _verdict("A2", _max_stat("relative error"), check_trace_identities)
    assert len(rows) == 15


def test_a3_covariance_quads():
    _verdict("A3", _max_stat("|z|"), lambda: check_quads(FULL))


def test_a4_lambda_determinant_equivalence():
    _verdict("A4", _max_stat("|log2 lambda - det| (bits)"), lambda: check_lambda(FULL))


def test_a5_mutual_information():
    _verdict("A5", _max_stat("relative error"), lambda: check_mutual_information(FULL))


def test_a6_gaussianity():
    def summary(rows):
        return ", ".join(f"{r.check.split('[')[1].rstrip(']')}: {r.statistic:.4f}" for r in rows)

    _verdict("A6", summary, lambda: check_gaussianity(FULL))


def test_a7_optimizer():
    def summary(rows):
        gaps = [r.statistic for r in rows if r.check.startswith("rate_scp")]
        ratios = [r.statistic for r in rows if r.check.startswith("time_scp")]
        return f"min rate gap = {min(gaps):+.2e}, max time ratio = {max(ratios):.3f}"

    _verdict("A7", summary, lambda: check_optimizer(FULL, wall_clock=True))


def test_a8_figure_shapes():
    def summary(rows):
        return f"peak t_d = {rows[0].statistic:g}, eps - rps MI = {rows[1].statistic:.4f} bits"

    _verdict("A8", summary, lambda: check_shapes(FULL))
