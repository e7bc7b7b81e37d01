"""Secret-key-generation rate from Gaussian conditional mutual information."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ProbePlan, ScenarioConfig
from .statistics import CovarianceQuad, Regime, build_delta, build_omega

# Correlation-normalized condition number above which a determinant ratio is refused.
MAX_CONDITION = 1e12


class InvalidCovarianceError(ValueError):
    """The covariance quad is singular or not positive semidefinite."""


def lambda_fn(v: CovarianceQuad) -> float:
    """Closed-form determinant ratio whose log2 is I(a; b | ae, be) in bits."""
    x1, x2, x3, x4 = v.x1, v.x2, v.x3, v.x4
    y1, y2, y3, y4 = v.y1, v.y2, v.y3, v.y4
    eve = x3 * x4 - y2 * y2
    if not eve > 0:
        raise InvalidCovarianceError(f"Eve sub-block is singular or indefinite (det={eve:.3e})")
    cross = 2.0 * y2 * y3 * y4 - y4 * y4 * x3 - y3 * y3 * x4
    num = (x1 * eve + cross) * (x2 * eve + cross)
    den = eve * ((x1 + x2 - 2.0 * y1) * cross - eve * (y1 * y1 - x1 * x2))
    if not den > 0:
        raise InvalidCovarianceError(f"non-positive denominator {den:.3e}")
    return num / den


def _logdet2(M: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise InvalidCovarianceError("covariance block is not positive definite") from None
    return 2.0 * float(np.sum(np.log2(np.abs(np.diag(L)))))


def gaussian_cond_mi(M: np.ndarray) -> float:
    """I(x0; x1 | x2, x3) in bits for a circular complex Gaussian with covariance ``M``.

    ``M`` is 4x4 Hermitian, ordered (a, b, ae, be).  Every determinant is taken
    on the diagonally normalized matrix so the condition check is scale free.
    """
    M = np.asarray(M)
    if M.shape != (4, 4):
        raise ValueError(f"expected a 4x4 covariance, got shape {M.shape}")
    d = np.sqrt(np.real(np.diag(M)))
    if not np.all(d > 0):
        raise InvalidCovarianceError("non-positive self-power")
    C = M / np.outer(d, d)
    C = 0.5 * (C + C.conj().T)
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise InvalidCovarianceError(f"condition number {cond:.3e} exceeds {MAX_CONDITION:g}")
    a_e = C[np.ix_([0, 2, 3], [0, 2, 3])]
    b_e = C[np.ix_([1, 2, 3], [1, 2, 3])]
    e = C[2:, 2:]
    mi = _logdet2(a_e) + _logdet2(b_e) - _logdet2(e) - _logdet2(C)
    # the diagonal normalization cancels between numerator and denominator
    return mi


def cond_mi_determinant(v: CovarianceQuad) -> float:
    """log2 of det(M_a,ae,be) det(M_b,ae,be) / (det(M_ae,be) det(M)), built from sub-matrices."""
    return gaussian_cond_mi(v.matrix())


@dataclass(frozen=True)
class SkgRate:
    direct_term: float
    reflected_term: float
    regime: Regime

    @property
    def total(self) -> float:
        return self.direct_term + self.reflected_term


def skg_rate(scn: ScenarioConfig, plan: ProbePlan, regime, cross_pairing: bool = True) -> SkgRate:
    """Key bits per pilot symbol from the direct probes and one reflected round.

    Rounds are i.i.d., so the per-round sum over P rounds of length 2 t_s
    collapses to a single 1/(2 t_s) weighted term.  With ``t_d == 0`` direct
    probing is disabled: the direct term is 0, and so is the reflected term,
    whose subtraction noise diverges.
    """
    regime = Regime.parse(regime)
    if plan.t_d == 0:
        return SkgRate(0.0, 0.0, regime)
    direct = math.log2(lambda_fn(build_omega(scn, plan))) / (2.0 * plan.t_d)
    reflected = math.log2(lambda_fn(build_delta(scn, plan, regime, cross_pairing))) / (2.0 * plan.t_s)
    return SkgRate(direct, reflected, regime)
