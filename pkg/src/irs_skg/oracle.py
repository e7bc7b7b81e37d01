"""Monte Carlo estimators used to check every closed form.

Standard errors come from batch means (100 batches by default): rounds in the
same block share the channel draw and the step-1 noise, so they are not
independent samples.  Nothing here calls the closed forms it checks except
through ``MonteCarloReport.check``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from .channel_sim import PhaseSchedule, ProbeSimulator, block_streams, draw_correlated_triple, psd_sqrt
from .rate import gaussian_cond_mi
from .scenario import ProbePlan, ScenarioConfig, irs_kernels, node_correlation
from .statistics import CovarianceQuad, Regime

DEFAULT_BATCHES = 100
# complex entries per generated chunk; bounds peak memory of one draw
_CHUNK_ELEMENTS = 4_000_000

QUAD_LABELS = ("a", "b", "ae", "be")


@dataclass(frozen=True)
class MonteCarloReport:
    target: str
    estimate: float
    standard_error: float
    sample_count: int
    reference: Optional[float] = None
    tolerance: Optional[float] = None
    passed: Optional[bool] = None

    def check(self, reference: float, n_se: float = 4.0, abs_floor: float = 0.0) -> "MonteCarloReport":
        tol = max(n_se * self.standard_error, abs_floor)
        return replace(
            self,
            reference=float(reference),
            tolerance=tol,
            passed=bool(abs(self.estimate - reference) <= tol),
        )


def _batch_sizes(total: int, batches: int) -> list[int]:
    batches = max(1, min(batches, total))
    base, extra = divmod(total, batches)
    return [base + (1 if i < extra else 0) for i in range(batches)]


def _chunks(n: int, per_item: int) -> Iterator[int]:
    step = max(1, _CHUNK_ELEMENTS // max(per_item, 1))
    while n > 0:
        k = min(step, n)
        yield k
        n -= k


def _ratio_report(target: str, num: np.ndarray, den: np.ndarray, counts: np.ndarray) -> MonteCarloReport:
    """Ratio of totals with a batch-means standard error."""
    est = num.sum() / den.sum()
    ratios = num / den
    nb = len(ratios)
    se = float(np.std(ratios, ddof=1) / math.sqrt(nb)) if nb > 1 else float("nan")
    return MonteCarloReport(target, float(est), se, int(counts.sum()))


def _simulator(scn, plan, regime, quantization_bits=None, noise=True) -> ProbeSimulator:
    plan.check_feasible()
    schedule = PhaseSchedule(Regime.parse(regime), scn.n_elements, plan.rounds, quantization_bits)
    return ProbeSimulator(scn, plan, schedule, noise=noise)


def empirical_correlation(
    scn: ScenarioConfig,
    plan: ProbePlan,
    regime,
    with_direct: bool,
    blocks: int,
    seed: int,
    node: str = "a",
    batches: int = DEFAULT_BATCHES,
    quantization_bits: Optional[int] = None,
) -> MonteCarloReport:
    """E[s^p1 s^p2*] / E|s|^2 over all round pairs p1 != p2 of each block."""
    sim = _simulator(scn, plan, regime, quantization_bits)
    if sim.plan.rounds < 2:
        raise ValueError("correlation between rounds needs at least two rounds per block")
    attr = ("hat_" if with_direct else "") + node
    sizes = _batch_sizes(blocks, batches)
    num, den, cnt = np.zeros(len(sizes)), np.zeros(len(sizes)), np.zeros(len(sizes))
    per_block = scn.n_elements * (plan.rounds + 3)
    for i, (rng, size) in enumerate(zip(block_streams(seed, len(sizes)), sizes)):
        for k in _chunks(size, per_block):
            s = getattr(sim.draw(rng, k), attr)
            total = np.sum(s, axis=1)
            power = np.sum(np.abs(s) ** 2, axis=1)
            # sum over ordered pairs p1 != p2 of s_p1 s_p2*
            num[i] += float(np.sum(np.abs(total) ** 2 - power))
            den[i] += float(np.sum(power))
        p = plan.rounds
        num[i] /= size * p * (p - 1)
        den[i] /= size * p
        cnt[i] = size
    target = f"temporal_correlation[{Regime.parse(regime).value},{'direct' if with_direct else 'subtracted'},{node}]"
    return _ratio_report(target, num, den, cnt)


@dataclass(frozen=True)
class EmpiricalQuad:
    """Sample second moments of (a, b, ae, be) and their batch standard errors."""

    matrix: np.ndarray  # 4x4 complex, E[x x^H]
    matrix_se: np.ndarray  # 4x4, standard error of the real parts
    sample_count: int

    @property
    def quad(self) -> CovarianceQuad:
        M = self.matrix.real
        return CovarianceQuad(
            M[0, 0], M[1, 1], M[2, 2], M[3, 3],
            M[0, 1], M[2, 3],
            0.5 * (M[0, 2] + M[1, 2]),
            0.5 * (M[0, 3] + M[1, 3]),
        )

    def z_scores(self, reference: CovarianceQuad) -> np.ndarray:
        """(estimate - reference) / se for every entry of the upper triangle."""
        diff = (self.matrix.real - reference.matrix()) / self.matrix_se
        return diff[np.triu_indices(4)]

    def mismatches(self, reference: CovarianceQuad, n_se: float = 4.0) -> list[str]:
        diff = (self.matrix.real - reference.matrix()) / self.matrix_se
        out = []
        for i, j in zip(*np.triu_indices(4)):
            if abs(diff[i, j]) > n_se:
                out.append(f"E[{QUAD_LABELS[i]} {QUAD_LABELS[j]}*]: {diff[i, j]:+.1f} SE")
        return out


def _batched_moments(draw_batch, sizes, seed, per_block) -> tuple[np.ndarray, np.ndarray, int]:
    mats = []
    total = 0
    for rng, size in zip(block_streams(seed, len(sizes)), sizes):
        acc = np.zeros((4, 4), dtype=complex)
        n = 0
        for k in _chunks(size, per_block):
            x = draw_batch(rng, k)
            acc += x.T @ x.conj()
            n += x.shape[0]
        mats.append(acc / n)
        total += n
    mats = np.array(mats)
    weights = np.array([s for s in sizes], dtype=float)
    mean = np.tensordot(weights / weights.sum(), mats, axes=1)
    se = np.std(mats.real, axis=0, ddof=1) / math.sqrt(len(mats))
    return mean, se, total


def empirical_quad(
    scn: ScenarioConfig,
    plan: ProbePlan,
    regime,
    blocks: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
    direct: bool = False,
) -> EmpiricalQuad:
    """Second moments of the reflected samples, or of the step-1 estimates with ``direct``."""
    sim = _simulator(scn, plan, regime)

    def draw(rng, k):
        s = sim.draw(rng, k)
        return s.direct_quad() if direct else s.quad()

    mean, se, n = _batched_moments(draw, _batch_sizes(blocks, batches), seed, scn.n_elements * (plan.rounds + 3))
    return EmpiricalQuad(mean, se, n)


def empirical_mi(samples) -> float:
    """Plug-in Gaussian I(a; b | ae, be) in bits.

    ``samples`` is either an (n, 4) array of (a, b, ae, be) draws or a 4x4
    second-moment matrix; an EmpiricalQuad uses its full 4x4 matrix.
    """
    if isinstance(samples, EmpiricalQuad):
        M = samples.matrix
    else:
        x = np.asarray(samples)
        if x.shape == (4, 4):
            M = x
        elif x.ndim == 2 and x.shape[1] == 4:
            M = x.T @ x.conj() / x.shape[0]
        else:
            raise ValueError(f"expected (n, 4) samples or a 4x4 matrix, got {x.shape}")
    M = 0.5 * (M + M.conj().T)
    return gaussian_cond_mi(M)


def empirical_mi_report(
    scn: ScenarioConfig,
    plan: ProbePlan,
    regime,
    blocks: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
) -> MonteCarloReport:
    """Plug-in MI on all samples; the SE is the spread of per-batch plug-in MIs."""
    sim = _simulator(scn, plan, regime)
    sizes = _batch_sizes(blocks, batches)
    per_block = scn.n_elements * (plan.rounds + 3)
    mats, counts = [], []
    for rng, size in zip(block_streams(seed, len(sizes)), sizes):
        acc = np.zeros((4, 4), dtype=complex)
        n = 0
        for k in _chunks(size, per_block):
            x = sim.draw(rng, k).quad()
            acc += x.T @ x.conj()
            n += x.shape[0]
        mats.append(acc / n)
        counts.append(n)
    counts = np.array(counts, dtype=float)
    mean = np.tensordot(counts / counts.sum(), np.array(mats), axes=1)
    est = empirical_mi(mean)
    per_batch = np.array([empirical_mi(m) for m in mats])
    # batch estimates each use 1/nb of the data, so their spread over sqrt(nb) is the SE of the pooled one
    se = float(np.std(per_batch, ddof=1) / math.sqrt(len(mats)))
    return MonteCarloReport(f"conditional_mi[{Regime.parse(regime).value}]", est, se, int(counts.sum()))


def gaussianity_check(
    scn: ScenarioConfig,
    regime,
    draws: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
) -> MonteCarloReport:
    """E|c|^4 / (E|c|^2)^2 of the Alice-IRS-Bob composite coefficient.

    2 for a circular complex Gaussian; 4 for the product of two independent
    complex Gaussians (a single element).
    """
    regime = Regime.parse(regime)
    k = irs_kernels(scn)
    kap = (k["a"].kappa, k["b"].kappa, k["e"].kappa)
    C = node_correlation(scn)
    rhos = (C[0, 1], C[0, 2], C[1, 2])
    S = psd_sqrt(k["a"].entries)
    n = scn.n_elements
    sizes = _batch_sizes(draws, batches)
    m2 = np.zeros(len(sizes))
    m4 = np.zeros(len(sizes))
    for i, (rng, size) in enumerate(zip(block_streams(seed, len(sizes)), sizes)):
        for kk in _chunks(size, 4 * n):
            h_a, h_b, _ = draw_correlated_triple(S, *kap, *rhos, rng, size=kk, sqrt_R=S)
            # rescale so moments stay O(1)
            x = (h_a / math.sqrt(kap[0])) * (h_b / math.sqrt(kap[1]))
            if regime is Regime.EPS:
                c = np.exp(1j * rng.uniform(-math.pi, math.pi, kk)) * np.sum(x, axis=1)
            else:
                c = np.sum(np.exp(1j * rng.uniform(-math.pi, math.pi, (kk, n))) * x, axis=1)
            p = np.abs(c) ** 2
            m2[i] += float(np.sum(p))
            m4[i] += float(np.sum(p * p))
        m2[i] /= size
        m4[i] /= size
    w = np.array(sizes, dtype=float) / draws
    est = float(np.dot(w, m4) / np.dot(w, m2) ** 2)
    per = m4 / m2**2
    se = float(np.std(per, ddof=1) / math.sqrt(len(per)))
    return MonteCarloReport(f"fourth_moment[{regime.value},N={n}]", est, se, draws)
