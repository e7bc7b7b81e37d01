"""Closed-form second-order statistics of the probing samples.

Temporal correlation between probing rounds (with and without the direct
path) and the eight-entry covariance vectors of the direct-probe and
reflected-probe sample quadruples (a, b, ae, be).
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .geometry import CorrelationMatrix, clipped_eigh
from .scenario import (
    ProbePlan,
    ScenarioConfig,
    estimation_variances,
    irs_kernels,
    path_gain,
    spatial_rho,
)


class Regime(str, Enum):
    EPS = "eps"  # one random phase per round shared by every element
    RPS = "rps"  # independent random phase per element per round

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown phase regime {value!r}; expected 'eps' or 'rps'") from None


class Traces(NamedTuple):
    hadamard: float
    product: float

    def for_regime(self, regime) -> float:
        return self.product if Regime.parse(regime) is Regime.EPS else self.hadamard


@dataclass(frozen=True)
class CovarianceQuad:
    """Second moments of the sample quadruple (a, b, ae, be).

    x1..x4 are the self-powers. y1 = E[a b*], y2 = E[ae be*], y3 = E[a ae*] = E[b ae*],
    y4 = E[a be*] = E[b be*]: Alice and Bob share their cross-moments with Eve.
    """

    x1: float
    x2: float
    x3: float
    x4: float
    y1: float
    y2: float
    y3: float
    y4: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def matrix(self) -> np.ndarray:
        x1, x2, x3, x4, y1, y2, y3, y4 = astuple(self)
        return np.array(
            [
                [x1, y1, y3, y4],
                [y1, x2, y3, y4],
                [y3, y3, x3, y2],
                [y4, y4, y2, x4],
            ]
        )

    def is_psd(self, tol: float = 1e-10) -> bool:
        M = self.matrix()
        d = np.sqrt(np.clip(np.diag(M), 1e-300, None))
        return bool(np.linalg.eigvalsh(M / np.outer(d, d))[0] >= -tol)

    def satisfies_cauchy_schwarz(self) -> bool:
        x1, x2, x3, x4, y1, y2, y3, y4 = astuple(self)
        return y1**2 <= x1 * x2 and y2**2 <= x3 * x4 and y3**2 <= x1 * x3 and y4**2 <= x2 * x4


class CorrelationCoefficient(NamedTuple):
    value: float
    regime: Regime
    with_direct: bool


def _check_same_shape(Ri: CorrelationMatrix, Rj: CorrelationMatrix):
    if Ri.entries.shape != Rj.entries.shape:
        raise ValueError(f"dimension mismatch: {Ri.entries.shape} vs {Rj.entries.shape}")


def trace_hadamard(Ri: CorrelationMatrix, Rj: CorrelationMatrix) -> float:
    """tr{R_j o R_i}: the sum of products of the diagonals."""
    _check_same_shape(Ri, Rj)
    return Ri.kappa * Rj.kappa * float(np.dot(np.diag(Ri.entries), np.diag(Rj.entries)))


def trace_product(Ri: CorrelationMatrix, Rj: CorrelationMatrix) -> float:
    """tr{R_j R_i} without forming the product."""
    _check_same_shape(Ri, Rj)
    return Ri.kappa * Rj.kappa * float(np.sum(Ri.entries * Rj.entries.T))


def traces(Ri: CorrelationMatrix, Rj: CorrelationMatrix) -> Traces:
    return Traces(trace_hadamard(Ri, Rj), trace_product(Ri, Rj))


def eigen_power_rps(Ri: CorrelationMatrix, Rj: CorrelationMatrix) -> float:
    """kappa_j * sum of squared eigenvalues of R_i^(1/2).

    Variance of the reflected coefficient after whitening the Rose-to-i vector.
    """
    w, _ = clipped_eigh(Ri.entries)
    return Rj.kappa * Ri.kappa * float(np.sum(w))


def eigen_power_eps(Ri: CorrelationMatrix, Rj: CorrelationMatrix) -> float:
    """Sum of squared eigenvalues of R_i^(1/2) R_j^(1/2).

    The product is symmetric only when both kernels commute, which holds for the
    shared-kernel case used throughout; its squared singular values are used so
    the value stays meaningful otherwise.
    """
    wi, Vi = clipped_eigh(Ri.entries)
    wj, Vj = clipped_eigh(Rj.entries)
    Si = (Vi * np.sqrt(wi)) @ Vi.T
    Sj = (Vj * np.sqrt(wj)) @ Vj.T
    Psi = math.sqrt(Ri.kappa * Rj.kappa) * (Si @ Sj)
    if np.allclose(Psi, Psi.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Psi).max())):
        ev = np.linalg.eigvalsh(0.5 * (Psi + Psi.T))
        return float(np.sum(ev**2))
    return float(np.sum(np.linalg.svd(Psi, compute_uv=False) ** 2))


def corr_with_direct(regime, beta: float, trace_values: Traces, sigma2: float) -> CorrelationCoefficient:
    """Correlation of two rounds' composite estimates when the direct path is kept."""
    regime = Regime.parse(regime)
    denom = beta + trace_values.for_regime(regime) + sigma2
    value = 0.0 if beta == 0 else beta / denom
    return CorrelationCoefficient(value, regime, True)


def corr_without_direct(regime, sigma2_direct: float, trace_values: Traces, sigma2_combined: float) -> CorrelationCoefficient:
    """Correlation left after subtracting the step-1 estimate.

    Only the reused step-1 estimation noise ``sigma2_direct`` survives in the
    cross-moment; ``sigma2_combined`` is the total noise of one sample.
    """
    regime = Regime.parse(regime)
    value = sigma2_direct / (trace_values.for_regime(regime) + sigma2_combined)
    return CorrelationCoefficient(value, regime, False)


@dataclass(frozen=True)
class LinkStats:
    """Plan-independent constants of a scenario, cached per scenario."""

    beta_ab: float
    beta_ae: float
    beta_be: float
    kappa_a: float
    kappa_b: float
    kappa_e: float
    rho_ab: float
    rho_ae: float
    rho_be: float
    kernel_traces: Traces  # unit-kernel traces, N and tr{R R}


@lru_cache(maxsize=64)
def link_stats(scn: ScenarioConfig) -> LinkStats:
    k = irs_kernels(scn)
    unit = CorrelationMatrix(k["a"].entries, 1.0)
    return LinkStats(
        beta_ab=path_gain(scn, "ab"),
        beta_ae=path_gain(scn, "ae"),
        beta_be=path_gain(scn, "be"),
        kappa_a=k["a"].kappa,
        kappa_b=k["b"].kappa,
        kappa_e=k["e"].kappa,
        rho_ab=spatial_rho(scn, "ab"),
        rho_ae=spatial_rho(scn, "ae"),
        rho_be=spatial_rho(scn, "be"),
        kernel_traces=traces(unit, unit),
    )


def reflected_power(scn: ScenarioConfig, regime, cross_pairing: bool = True) -> float:
    """E|h_ar^T Phi h_br|^2, the power of the Alice-IRS-Bob composite coefficient.

    With ``cross_pairing`` the rho_ab^2 term from the correlation between the
    Alice- and Bob-side IRS vectors is included.
    """
    s = link_stats(scn)
    t = s.kernel_traces.for_regime(regime)
    factor = 1.0 + s.rho_ab**2 if cross_pairing else 1.0
    return factor * s.kappa_a * s.kappa_b * t


def temporal_correlation(
    scn: ScenarioConfig,
    plan: ProbePlan,
    regime,
    with_direct: bool,
    node: str = "a",
    cross_pairing: bool = True,
) -> CorrelationCoefficient:
    """Correlation between two probing rounds of the samples at Alice (``node='a'``) or Bob."""
    if node not in ("a", "b"):
        raise ValueError(f"node must be 'a' or 'b', got {node!r}")
    regime = Regime.parse(regime)
    ev = estimation_variances(scn, plan)
    p = reflected_power(scn, regime, cross_pairing)
    tr = Traces(p, p)
    if with_direct:
        return corr_with_direct(regime, link_stats(scn).beta_ab, tr, ev.reflected_for(node))
    return corr_without_direct(regime, ev.direct_for(node), tr, ev.combined_for(node))


def build_omega(scn: ScenarioConfig, plan: ProbePlan) -> CovarianceQuad:
    """Covariance of the step-1 estimates at Alice, Bob and Eve (both pilots)."""
    s = link_stats(scn)
    ev = estimation_variances(scn, plan)
    sab, sae, sbe = math.sqrt(s.beta_ab), math.sqrt(s.beta_ae), math.sqrt(s.beta_be)
    return CovarianceQuad(
        x1=s.beta_ab + ev.dir_a2,
        x2=s.beta_ab + ev.dir_b1,
        x3=s.beta_ae + ev.dir_e1,
        x4=s.beta_be + ev.dir_e2,
        y1=s.beta_ab,
        y2=s.rho_ab * sae * sbe,
        y3=s.rho_be * sae * sab,
        y4=s.rho_ae * sab * sbe,
    )


def build_delta(scn: ScenarioConfig, plan: ProbePlan, regime, cross_pairing: bool = True) -> CovarianceQuad:
    """Covariance of the direct-subtracted reflected samples (a, b, ae, be).

    Each entry is a fourth moment of the correlated IRS vectors.  The leading
    pairing gives kappa products times the regime trace (N for RPS, tr{R R}
    for EPS).  ``cross_pairing`` adds the second pairing, which is non-zero
    because the three IRS vectors are correlated through the Bessel
    coefficients; without it the Eve entries are off by a factor 1 + rho_ae^2.
    """
    s = link_stats(scn)
    ev = estimation_variances(scn, plan)
    t = s.kernel_traces.for_regime(regime)
    ka, kb, ke = s.kappa_a, s.kappa_b, s.kappa_e
    r_ab, r_ae, r_be = s.rho_ab, s.rho_ae, s.rho_be
    c = 1.0 if cross_pairing else 0.0
    p_ab = (1.0 + c * r_ab**2) * ka * kb * t
    p_ae = (1.0 + c * r_ae**2) * ka * ke * t
    p_be = (1.0 + c * r_be**2) * kb * ke * t
    return CovarianceQuad(
        x1=p_ab + ev.z_a,
        x2=p_ab + ev.z_b,
        x3=p_ae + ev.z_ae,
        x4=p_be + ev.z_be,
        y1=p_ab,
        y2=(r_ab + c * r_ae * r_be) * math.sqrt(ka * kb) * ke * t,
        y3=(r_be + c * r_ae * r_ab) * math.sqrt(kb * ke) * ka * t,
        y4=(r_ae + c * r_ab * r_be) * math.sqrt(ka * ke) * kb * t,
    )
