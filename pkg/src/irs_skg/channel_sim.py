"""Monte Carlo generation of correlated channels, IRS phase rounds and probe samples.

All draws are vectorized over coherence blocks.  The cascaded channel through
the IRS is the reciprocal form sum_n h_ir[n] e^{j phi_n} h_jr[n], so the
samples at Alice and Bob share the same composite coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CorrelationMatrix, clipped_eigh
from .scenario import (
    ProbePlan,
    ScenarioConfig,
    direct_correlation,
    estimation_variances,
    irs_kernels,
    node_correlation,
)
from .statistics import Regime

# A pivot below this (relative to the largest diagonal entry) is treated as an exact zero.
_PIVOT_TOL = 1e-12


def psd_sqrt(R) -> np.ndarray:
    """Symmetric square root of a PSD matrix (or of ``kappa * entries`` for a CorrelationMatrix)."""
    if isinstance(R, CorrelationMatrix):
        return math.sqrt(R.kappa) * psd_sqrt(R.entries)
    A = np.asarray(R, dtype=float)
    w, V = clipped_eigh(0.5 * (A + A.T))
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def psd_cholesky(C: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = C for a positive *semi*definite C.

    Zero pivots produce zero columns, so perfectly correlated rows of C give
    bit-identical rows of L.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    scale = max(float(np.max(np.abs(np.diag(C)))), 1e-300)
    L = np.zeros_like(C)
    for j in range(n):
        pivot = C[j, j] - np.dot(L[j, :j], L[j, :j])
        if pivot < -_PIVOT_TOL * scale:
            raise ValueError(f"matrix is not positive semidefinite (pivot {pivot:.3e} at {j})")
        if pivot <= _PIVOT_TOL * scale:
            for i in range(j + 1, n):
                resid = C[i, j] - np.dot(L[i, :j], L[j, :j])
                if abs(resid) > 1e-9 * scale:
                    raise ValueError("matrix is not positive semidefinite")
            continue
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (C[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
    return L


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """CN(0, var) samples."""
    s = math.sqrt(var / 2.0)
    out = np.empty(shape, dtype=complex)
    out.real = rng.standard_normal(shape)
    out.imag = rng.standard_normal(shape)
    out *= s
    return out


def draw_correlated_triple(
    R,
    kappa_ar: float,
    kappa_br: float,
    kappa_er: float,
    rho_ab: float,
    rho_ae: float,
    rho_be: float,
    rng: np.random.Generator,
    size: int = 1,
    sqrt_R: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """IRS vectors of Alice, Bob and Eve, each of shape (size, N).

    Each is CN(0, kappa R) and E[h_i h_j^H] = rho_ij sqrt(kappa_i kappa_j) R.
    ``R`` is the unit-diagonal kernel; pass ``sqrt_R`` to skip its square root.
    """
    entries = R.entries if isinstance(R, CorrelationMatrix) else np.asarray(R)
    S = psd_sqrt(entries) if sqrt_R is None else sqrt_R
    C3 = np.array([[1.0, rho_ab, rho_ae], [rho_ab, 1.0, rho_be], [rho_ae, rho_be, 1.0]])
    try:
        L3 = psd_cholesky(C3)
    except ValueError as exc:
        raise ValueError(f"inter-node correlation matrix is not PSD: {exc}") from None
    n = entries.shape[0]
    w = complex_normal(rng, (3, size, n))
    g = np.einsum("ij,jsn->isn", L3, w)
    # S is symmetric, so g @ S has rows S g_row
    h = g @ S
    return (
        math.sqrt(kappa_ar) * h[0],
        math.sqrt(kappa_br) * h[1],
        math.sqrt(kappa_er) * h[2],
    )


@dataclass(frozen=True)
class PhaseSchedule:
    mode: Regime
    n_elements: int
    rounds: int
    quantization_bits: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Regime.parse(self.mode))
        if self.n_elements < 1 or self.rounds < 1:
            raise ValueError("schedule needs at least one element and one round")
        if self.quantization_bits is not None and self.quantization_bits < 1:
            raise ValueError("quantization needs at least one bit")


def draw_phase_round(schedule: PhaseSchedule, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Diagonals of the phase matrices, shape (size, rounds, N), unit modulus."""
    width = 1 if schedule.mode is Regime.EPS else schedule.n_elements
    shape = (size, schedule.rounds, width)
    if schedule.quantization_bits is None:
        phi = rng.uniform(-math.pi, math.pi, shape)
    else:
        levels = 2**schedule.quantization_bits
        phi = rng.integers(0, levels, shape) * (2.0 * math.pi / levels)
    diag = np.exp(1j * phi)
    if width == 1:
        diag = np.broadcast_to(diag, (size, schedule.rounds, schedule.n_elements)).copy()
    return diag


@dataclass
class ProbeSamples:
    """One batch of coherence blocks; per-round arrays have shape (blocks, rounds).

    ``est_*`` are the step-1 direct estimates, ``hat_*`` the step-2 composite
    estimates and the plain names the direct-subtracted key samples.
    """

    est_ba: np.ndarray  # Alice's estimate of h_ab
    est_ab: np.ndarray  # Bob's estimate of h_ab
    est_ae: np.ndarray
    est_be: np.ndarray
    hat_a: np.ndarray
    hat_b: np.ndarray
    hat_ae: np.ndarray
    hat_be: np.ndarray
    a: np.ndarray
    b: np.ndarray
    ae: np.ndarray
    be: np.ndarray

    def quad(self) -> np.ndarray:
        """Reflected samples stacked to shape (blocks * rounds, 4)."""
        return np.stack([x.reshape(-1) for x in (self.a, self.b, self.ae, self.be)], axis=1)

    def direct_quad(self) -> np.ndarray:
        return np.stack([self.est_ba, self.est_ab, self.est_ae, self.est_be], axis=1)


class ProbeSimulator:
    """Draws probing blocks for a fixed scenario, plan and phase schedule."""

    def __init__(self, scn: ScenarioConfig, plan: ProbePlan, schedule: PhaseSchedule, noise: bool = True):
        plan.check_feasible()
        if schedule.n_elements != scn.n_elements:
            raise ValueError("schedule and IRS disagree on the element count")
        self.scn = scn
        self.plan = plan
        self.schedule = schedule
        self.noise = noise
        k = irs_kernels(scn)
        self.kappa = (k["a"].kappa, k["b"].kappa, k["e"].kappa)
        self.sqrt_R = psd_sqrt(k["a"].entries)
        C = node_correlation(scn)
        self.rhos = (C[0, 1], C[0, 2], C[1, 2])
        self.direct_chol = psd_cholesky(direct_correlation(scn))
        self.var = estimation_variances(scn, plan)

    def _noise(self, rng, shape, var):
        if not self.noise:
            return np.zeros(shape, dtype=complex)
        return complex_normal(rng, shape, var)

    def draw(self, rng: np.random.Generator, blocks: int, phases: Optional[np.ndarray] = None) -> ProbeSamples:
        n, rounds = self.scn.n_elements, self.schedule.rounds
        h_a, h_b, h_e = draw_correlated_triple(
            self.sqrt_R, *self.kappa, *self.rhos, rng, size=blocks, sqrt_R=self.sqrt_R
        )
        d = complex_normal(rng, (blocks, 3)) @ self.direct_chol.T
        h_ab, h_ae, h_be = d[:, 0], d[:, 1], d[:, 2]

        if phases is None:
            phases = draw_phase_round(self.schedule, rng, blocks)
        else:
            phases = np.broadcast_to(np.asarray(phases, dtype=complex), (blocks, rounds, n))

        c_ab = np.einsum("bpn,bn->bp", phases, h_a * h_b)
        c_ae = np.einsum("bpn,bn->bp", phases, h_a * h_e)
        c_be = np.einsum("bpn,bn->bp", phases, h_b * h_e)

        v = self.var
        # step-1 noise: one realization per block, reused by every round
        n_a2 = self._noise(rng, (blocks,), v.dir_a2)
        n_b1 = self._noise(rng, (blocks,), v.dir_b1)
        n_e1 = self._noise(rng, (blocks,), v.dir_e1)
        n_e2 = self._noise(rng, (blocks,), v.dir_e2)
        shape = (blocks, rounds)
        n_a = self._noise(rng, shape, v.ref_a)
        n_b = self._noise(rng, shape, v.ref_b)
        n_ae = self._noise(rng, shape, v.ref_ae)
        n_be = self._noise(rng, shape, v.ref_be)

        est_ba, est_ab = h_ab + n_a2, h_ab + n_b1
        est_ae, est_be = h_ae + n_e1, h_be + n_e2
        hat_a = h_ab[:, None] + c_ab + n_a
        hat_b = h_ab[:, None] + c_ab + n_b
        hat_ae = h_ae[:, None] + c_ae + n_ae
        hat_be = h_be[:, None] + c_be + n_be
        return ProbeSamples(
            est_ba=est_ba,
            est_ab=est_ab,
            est_ae=est_ae,
            est_be=est_be,
            hat_a=hat_a,
            hat_b=hat_b,
            hat_ae=hat_ae,
            hat_be=hat_be,
            a=hat_a - est_ba[:, None],
            b=hat_b - est_ab[:, None],
            ae=hat_ae - est_ae[:, None],
            be=hat_be - est_be[:, None],
        )


def probe_block(
    scn: ScenarioConfig,
    plan: ProbePlan,
    schedule: PhaseSchedule,
    rng: np.random.Generator,
    blocks: int = 1,
    noise: bool = True,
    phases: Optional[np.ndarray] = None,
) -> ProbeSamples:
    """Sample ``blocks`` independent coherence blocks of the two-step probing protocol."""
    return ProbeSimulator(scn, plan, schedule, noise).draw(rng, blocks, phases)


def block_streams(seed: int, batches: int) -> list[np.random.Generator]:
    """Independent child generators, one per batch of blocks.

    Batch boundaries depend only on the requested block count, so any split of
    the batches across workers reproduces the serial stream.
    """
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(batches)]
