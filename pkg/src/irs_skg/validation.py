"""Acceptance checks A1-A8 as data rows.

Each check compares a closed form against an independent estimate (Monte
Carlo, a second algorithm, or a direct construction) and reports the
statistic, the reference, the tolerance and whether it passed.  Rows flagged
``informational`` document expected failures and never fail the suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .geometry import IrsGeometry, spatial_correlation
from .optimizer import OptProblem, evaluate, exhaustive_search, scp_solve
from .oracle import empirical_correlation, empirical_mi_report, empirical_quad, gaussianity_check
from .rate import cond_mi_determinant, lambda_fn, skg_rate
from .scenario import ProbePlan, ScenarioConfig, dbm_to_watt
from .statistics import (
    CovarianceQuad,
    Regime,
    build_delta,
    build_omega,
    eigen_power_eps,
    eigen_power_rps,
    temporal_correlation,
    trace_hadamard,
    trace_product,
)


@dataclass(frozen=True)
class CheckResult:
    criterion: str
    check: str
    statistic: float
    reference: float
    tolerance: float
    passed: bool
    informational: bool = False


@dataclass(frozen=True)
class SuiteSettings:
    """Sample sizes and scenario for a validation run."""

    scenario: ScenarioConfig
    plan: ProbePlan
    seed: int
    corr_blocks: int = 100_000
    quad_blocks: int = 1_000_000
    mi_blocks: int = 1_000_000
    gauss_draws: int = 1_000_000
    mi_power_dbm: float = 20.0
    batches: int = 100
    n_se: float = 4.0
    power_sweep_dbm: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    rho_max: float = 0.1
    max_iter: int = 20
    es_step: float = 1e-2


def with_side(scn: ScenarioConfig, side: int) -> ScenarioConfig:
    """The same scenario with a side x side IRS of unchanged element size."""
    g = scn.irs
    return scn.with_irs(IrsGeometry(side, side, g.d_h, g.d_v, g.wavelength))


def _seed(settings: SuiteSettings, k: int) -> int:
    # distinct, reproducible child seeds per check
    return int(np.random.SeedSequence([settings.seed, k]).generate_state(1)[0])


def check_correlations(settings: SuiteSettings) -> list[CheckResult]:
    """A1: closed-form round-to-round correlation against Monte Carlo at N=16."""
    scn = with_side(settings.scenario, 4)
    out = []
    k = 0
    for regime in (Regime.EPS, Regime.RPS):
        for with_direct in (True, False):
            k += 1
            closed = temporal_correlation(scn, settings.plan, regime, with_direct).value
            mc = empirical_correlation(
                scn, settings.plan, regime, with_direct, settings.corr_blocks, _seed(settings, 100 + k),
                batches=settings.batches,
            ).check(closed, settings.n_se, abs_floor=0.02)
            label = f"rho[{regime.value},{'direct' if with_direct else 'subtracted'}]"
            out.append(CheckResult("A1", label, mc.estimate, closed, mc.tolerance, mc.passed))
    return out


def check_trace_identities(
    sides: Iterable[int] = (1, 2, 4, 8, 30), spacings: Iterable[float] = (0.125, 0.25, 0.5)
) -> list[CheckResult]:
    """A2: eigenvalue sums reproduce both trace forms."""
    out = []
    for side in sides:
        for sp in spacings:
            g = IrsGeometry(side, side, sp, sp, 1.0)
            R = spatial_correlation(g)
            t_had = trace_hadamard(R, R)
            t_prod = trace_product(R, R)
            e_rps = eigen_power_rps(R, R)
            e_eps = eigen_power_eps(R, R)
            err = max(abs(e_rps - t_had) / t_had, abs(e_eps - t_prod) / t_prod)
            out.append(CheckResult("A2", f"traces[{side}x{side},{sp}lambda]", err, 0.0, 1e-9, err <= 1e-9))
    return out


def check_quads(settings: SuiteSettings) -> list[CheckResult]:
    """A3: every entry of the reflected covariance quad within n_se standard errors."""
    scn = with_side(settings.scenario, 4)
    out = []
    for k, regime in enumerate((Regime.EPS, Regime.RPS)):
        ref = build_delta(scn, settings.plan, regime)
        emp = empirical_quad(scn, settings.plan, regime, settings.quad_blocks, _seed(settings, 200 + k), settings.batches)
        z = float(np.max(np.abs(emp.z_scores(ref))))
        out.append(CheckResult("A3", f"delta[{regime.value}] max |z|", z, 0.0, settings.n_se, z <= settings.n_se))
    return out


def random_layout_quad(rng: np.random.Generator, spread: float = 0.0) -> CovarianceQuad:
    """A random PSD quad in which Alice and Bob share their cross-moments with Eve.

    a = c + u_a and b = c + u_b, with (c, ae, be) Wishart distributed and the
    private parts u independent of Eve.  ``spread`` > 0 rescales each term by
    up to that many decades, which produces badly conditioned quads.
    """
    scale = 10.0 ** rng.uniform(-spread, spread, size=(3, 1)) if spread else 1.0
    G = rng.normal(size=(3, 5)) * scale
    S = G @ G.T  # covariance of (c, ae, be)
    va, vb = rng.chisquare(2, size=2) / 2.0
    if spread:
        va, vb = (va, vb) * 10.0 ** rng.uniform(-spread, spread, size=2)
    cab = rng.uniform(-1, 1) * math.sqrt(va * vb)
    return CovarianceQuad(
        x1=S[0, 0] + va, x2=S[0, 0] + vb, x3=S[1, 1], x4=S[2, 2],
        y1=S[0, 0] + cab, y2=S[1, 2], y3=S[0, 1], y4=S[0, 2],
    )


def scenario_quads(scn: ScenarioConfig) -> list[CovarianceQuad]:
    quads = []
    for dbm in (-10.0, 0.0, 10.0, 20.0, 30.0):
        s = scn.with_power(dbm_to_watt(dbm))
        for t_d, t_s in ((10.0, 2.0), (20.0, 5.0), (40.0, 8.0)):
            plan = ProbePlan(100.0, t_d, t_s)
            quads.append(build_omega(s, plan))
            for regime in Regime:
                quads.append(build_delta(s, plan, regime))
    return quads


def _worst_gap(quads: Iterable[CovarianceQuad]) -> float:
    return max(abs(math.log2(lambda_fn(v)) - cond_mi_determinant(v)) for v in quads)


def check_lambda(settings: SuiteSettings, n_random: int = 10_000) -> list[CheckResult]:
    """A4: the closed-form determinant ratio against sub-matrix determinants.

    The wide-spread row is informational: at condition numbers near 1e7 both
    evaluations lose about 1e-9 bits to rounding, so it measures floating-point
    conditioning rather than the identity itself.
    """
    rng = np.random.default_rng(_seed(settings, 400))
    unit = _worst_gap(random_layout_quad(rng) for _ in range(n_random))
    wide = _worst_gap(random_layout_quad(rng, spread=2.0) for _ in range(n_random))
    scn = _worst_gap(scenario_quads(settings.scenario))
    return [
        CheckResult("A4", f"|log2 lambda - det form| [{n_random} random]", unit, 0.0, 1e-9, unit <= 1e-9),
        CheckResult("A4", "|log2 lambda - det form| [scenario]", scn, 0.0, 1e-9, scn <= 1e-9),
        CheckResult("A4", f"|log2 lambda - det form| [{n_random} random, 4-decade spread]", wide, 0.0, 1e-9, wide <= 1e-9, True),
    ]


def check_mutual_information(settings: SuiteSettings, regime=Regime.EPS) -> list[CheckResult]:
    """A5: plug-in Gaussian MI of simulated samples against the closed form, N=64."""
    scn = with_side(settings.scenario, 8).with_power(dbm_to_watt(settings.mi_power_dbm))
    closed = math.log2(lambda_fn(build_delta(scn, settings.plan, regime)))
    rep = empirical_mi_report(scn, settings.plan, regime, settings.mi_blocks, _seed(settings, 500), settings.batches)
    rel = abs(rep.estimate - closed) / closed
    return [CheckResult("A5", f"per-sample MI [{Regime.parse(regime).value}] rel. error", rel, 0.0, 0.03, rel <= 0.03)]


def check_gaussianity(settings: SuiteSettings) -> list[CheckResult]:
    """A6: fourth-moment ratio 2 at N=100, 4 for a single element."""
    big = gaussianity_check(with_side(settings.scenario, 10), Regime.RPS, settings.gauss_draws, _seed(settings, 600), settings.batches)
    one = gaussianity_check(with_side(settings.scenario, 1), Regime.EPS, settings.gauss_draws, _seed(settings, 601), settings.batches)
    return [
        CheckResult("A6", "E|c|^4/(E|c|^2)^2 [rps,N=100]", big.estimate, 2.0, 0.05, abs(big.estimate - 2.0) <= 0.05),
        CheckResult("A6", "E|c|^4/(E|c|^2)^2 [eps,N=1]", one.estimate, 4.0, 0.1, abs(one.estimate - 4.0) <= 0.1),
        # a single element is not Gaussian; this row documents the expected miss
        CheckResult("A6", "gaussian at N=1 (expected to fail)", one.estimate, 2.0, 0.05, abs(one.estimate - 2.0) <= 0.05, True),
    ]


def best_time(fn: Callable[[], object], repeats: int = 3) -> tuple[object, float]:
    """Result and the fastest of ``repeats`` wall-clock timings."""
    best, result = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return result, best


def check_optimizer(settings: SuiteSettings, regime=Regime.EPS, wall_clock: bool = False) -> list[CheckResult]:
    """A7: SCP against the exhaustive grid over a power sweep.

    The cost row compares exact-evaluation counts unless ``wall_clock`` is set;
    counts are deterministic, so the report stays byte-identical across runs.
    """
    out = []
    for dbm in settings.power_sweep_dbm:
        prob = OptProblem(
            settings.scenario.with_power(dbm_to_watt(dbm)), regime, 100.0, settings.rho_max, settings.max_iter
        )
        repeats = 3 if wall_clock else 1
        scp, t_scp = best_time(lambda: scp_solve(prob), repeats)
        es, t_es = best_time(lambda: exhaustive_search(prob, settings.es_step), repeats)
        gap = scp.rate - es.rate
        out.append(CheckResult("A7", f"rate_scp - rate_es [{dbm:g} dBm]", gap, 0.0, 1e-3, gap >= -1e-3))
        e = evaluate(prob, scp.t_d, scp.t_s)
        worst = max(e.rho_a, e.rho_b)
        out.append(CheckResult("A7", f"max rho at optimum [{dbm:g} dBm]", worst, prob.rho_max, 0.0, e.feasible(prob.rho_max)))
        if wall_clock:
            ratio, what = t_scp / t_es, "time_scp / time_es"
        else:
            ratio, what = scp.evaluations / es.evaluations, "evals_scp / evals_es"
        out.append(CheckResult("A7", f"{what} [{dbm:g} dBm]", ratio, 0.0, 0.1, ratio < 0.1))
    return out


def rate_slice(scn: ScenarioConfig, t_s: float, t_d_values: np.ndarray, regime=Regime.EPS) -> np.ndarray:
    return np.array([skg_rate(scn, ProbePlan(100.0, float(t), t_s), regime).total for t in t_d_values])


def is_unimodal(values: np.ndarray) -> bool:
    """Strictly rises to a single interior peak and then strictly falls."""
    k = int(np.argmax(values))
    if k == 0 or k == len(values) - 1:
        return False
    d = np.diff(values)
    return bool(np.all(d[:k] > 0) and np.all(d[k:] < 0))


def check_shapes(settings: SuiteSettings, slice_power_dbm: float = 5.0, slice_t_s: float = 2.0) -> list[CheckResult]:
    """A8: interior maximum of the T_d slice and the EPS/RPS ordering."""
    scn = settings.scenario.with_power(dbm_to_watt(slice_power_dbm))
    t_d = np.linspace(0.5, 48.0, 96)
    r = rate_slice(scn, slice_t_s, t_d)
    uni = is_unimodal(r)
    peak = float(t_d[int(np.argmax(r))])
    out = [CheckResult("A8", f"rate vs t_d unimodal [t_s={slice_t_s:g}] peak t_d", peak, 0.0, 0.0, uni)]
    R = spatial_correlation(scn.irs)
    t_prod, t_had = trace_product(R, R), trace_hadamard(R, R)
    eps = math.log2(lambda_fn(build_delta(scn, settings.plan, Regime.EPS)))
    rps = math.log2(lambda_fn(build_delta(scn, settings.plan, Regime.RPS)))
    implied = t_prod > t_had
    ok = (eps > rps) if implied else True
    out.append(CheckResult("A8", "reflected MI eps - rps (tr RR > tr RoR)", eps - rps, 0.0, 0.0, ok, not implied))
    return out


SUITE: dict[str, Callable[[SuiteSettings], list[CheckResult]]] = {
    "A1": check_correlations,
    "A2": lambda s: check_trace_identities(),
    "A3": check_quads,
    "A4": check_lambda,
    "A5": check_mutual_information,
    "A6": check_gaussianity,
    "A7": check_optimizer,
    "A8": check_shapes,
}


def run_suite(settings: SuiteSettings, only: Optional[Iterable[str]] = None) -> list[CheckResult]:
    names = list(SUITE) if only is None else list(only)
    rows: list[CheckResult] = []
    for name in names:
        rows.extend(SUITE[name](settings))
    return rows
