import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irs_skg.channel_sim import (
    PhaseSchedule,
    ProbeSimulator,
    block_streams,
    draw_correlated_triple,
    draw_phase_round,
    probe_block,
    psd_cholesky,
    psd_sqrt,
)
from irs_skg.geometry import CorrelationMatrix, IndefiniteMatrixError, IrsGeometry, spatial_correlation
from irs_skg.scenario import ProbePlan, irs_kernels, node_correlation
from irs_skg.statistics import Regime, build_delta


class TestSqrt:
    def test_identity(self):
        np.testing.assert_array_equal(psd_sqrt(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]), atol=1e-15)

    def test_sinc_reconstruction(self):
        R = spatial_correlation(IrsGeometry(4, 2, 0.25, 0.25, 1.0)).entries
        S = psd_sqrt(R)
        np.testing.assert_array_equal(S, S.T)
        assert np.linalg.norm(S @ S - R) / np.linalg.norm(R) < 1e-8

    def test_scaled_kernel(self):
        R = CorrelationMatrix(np.eye(2), 9.0)
        np.testing.assert_allclose(psd_sqrt(R), 3 * np.eye(2))

    def test_indefinite(self):
        with pytest.raises(IndefiniteMatrixError):
            psd_sqrt(np.array([[1.0, 2.0], [2.0, 1.0]]))

    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_reconstruction_random(self, n, seed):
        G = np.random.default_rng(seed).normal(size=(n, n + 1))
        A = G @ G.T
        S = psd_sqrt(A)
        assert np.linalg.norm(S @ S - A) <= 1e-8 * np.linalg.norm(A)


class TestCholesky:
    def test_rank_deficient(self):
        C = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        L = psd_cholesky(C)
        np.testing.assert_allclose(L @ L.T, C, atol=1e-15)
        np.testing.assert_array_equal(L[0], L[1])

    def test_not_psd(self):
        with pytest.raises(ValueError):
            psd_cholesky(np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]]))


class TestCorrelatedTriple:
    R = spatial_correlation(IrsGeometry(4, 4, 0.5, 0.5, 1.0)).entries

    def test_perfect_correlation_gives_identical_vectors(self):
        a, b, _ = draw_correlated_triple(self.R, 2.0, 2.0, 1.0, 1.0, 0.3, 0.3, np.random.default_rng(1), size=5)
        np.testing.assert_array_equal(a, b)

    def test_uncorrelated(self):
        m = 40_000
        a, b, e = draw_correlated_triple(self.R, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, np.random.default_rng(2), size=m)
        for x, y in ((a, b), (a, e), (b, e)):
            cross = x.T @ y.conj() / m
            assert np.max(np.abs(cross)) < 5 / math.sqrt(m)

    def test_cross_covariance_within_four_se(self, desk_scenario):
        k = irs_kernels(desk_scenario)
        kap = (k["a"].kappa, k["b"].kappa, k["e"].kappa)
        C = node_correlation(desk_scenario)
        rhos = (C[0, 1], C[0, 2], C[1, 2])
        m = 100_000
        h = draw_correlated_triple(k["a"].entries, *kap, *rhos, np.random.default_rng(3), size=m)
        R = k["a"].entries
        for (i, j), rho in zip(((0, 1), (0, 2), (1, 2)), rhos):
            prod = h[i][:, :, None] * h[j][:, None, :].conj()
            est = prod.mean(axis=0).real
            se = prod.real.std(axis=0) / math.sqrt(m)
            ref = rho * math.sqrt(kap[i] * kap[j]) * R
            assert np.max(np.abs(est - ref) / se) < 4.5

    def test_marginal_covariance(self, desk_scenario):
        k = irs_kernels(desk_scenario)
        R = k["e"].entries
        m = 100_000
        _, _, e = draw_correlated_triple(R, 1.0, 1.0, 1.0, 0.1, 0.2, 0.3, np.random.default_rng(4), size=m)
        prod = e[:, :, None] * e[:, None, :].conj()
        z = (prod.mean(axis=0).real - R) / (prod.real.std(axis=0) / math.sqrt(m))
        assert np.max(np.abs(z)) < 4.5

    def test_invalid_node_correlation(self):
        with pytest.raises(ValueError):
            draw_correlated_triple(self.R, 1, 1, 1, 0.9, 0.9, -0.9, np.random.default_rng(0))


class TestPhases:
    def test_eps_shared_across_elements(self):
        d = draw_phase_round(PhaseSchedule(Regime.EPS, 7, 3), np.random.default_rng(0), size=4)
        assert d.shape == (4, 3, 7)
        assert np.all(d == d[:, :, :1])
        np.testing.assert_allclose(np.abs(d), 1.0)

    def test_one_bit_rps(self):
        d = draw_phase_round(PhaseSchedule(Regime.RPS, 50, 4, quantization_bits=1), np.random.default_rng(0), size=10)
        np.testing.assert_allclose(d.imag, 0.0, atol=1e-15)
        assert set(np.round(d.real).astype(int).ravel()) == {-1, 1}

    def test_continuous_rps_zero_mean(self):
        n = 1_000_000
        d = draw_phase_round(PhaseSchedule(Regime.RPS, 4, 1), np.random.default_rng(5), size=n)
        assert np.max(np.abs(d.mean(axis=0))) < 4 / math.sqrt(n)

    def test_rounds_independent(self):
        n = 200_000
        d = draw_phase_round(PhaseSchedule(Regime.EPS, 1, 2), np.random.default_rng(6), size=n)
        corr = np.mean(d[:, 0, 0] * d[:, 1, 0].conj())
        assert abs(corr) < 4 / math.sqrt(n)

    def test_invalid_schedule(self):
        with pytest.raises(ValueError):
            PhaseSchedule(Regime.EPS, 4, 0)
        with pytest.raises(ValueError):
            PhaseSchedule(Regime.RPS, 4, 2, quantization_bits=0)


class TestProbeBlock:
    plan = ProbePlan(100, 10, 20)  # two rounds

    def test_equal_phases_without_noise_repeat(self, desk_scenario):
        sched = PhaseSchedule(Regime.EPS, desk_scenario.n_elements, self.plan.rounds)
        s = probe_block(desk_scenario, self.plan, sched, np.random.default_rng(0), blocks=3, noise=False,
                        phases=np.ones((2, 16)))
        np.testing.assert_array_equal(s.hat_a[:, 0], s.hat_a[:, 1])
        np.testing.assert_array_equal(s.a[:, 0], s.a[:, 1])

    def test_reciprocity_without_noise(self, desk_scenario):
        sched = PhaseSchedule(Regime.RPS, desk_scenario.n_elements, self.plan.rounds)
        s = probe_block(desk_scenario, self.plan, sched, np.random.default_rng(1), blocks=50, noise=False)
        np.testing.assert_array_equal(s.a, s.b)
        np.testing.assert_array_equal(s.est_ab, s.est_ba)

    def test_step_one_noise_reused_in_every_round(self, desk_scenario):
        sched = PhaseSchedule(Regime.EPS, desk_scenario.n_elements, self.plan.rounds)
        s = probe_block(desk_scenario, self.plan, sched, np.random.default_rng(2), blocks=4)
        np.testing.assert_allclose(s.hat_a - s.a, np.repeat(s.est_ba[:, None], 2, axis=1), rtol=0, atol=1e-18)

    def test_same_seed_same_samples(self, desk_scenario):
        sched = PhaseSchedule(Regime.RPS, desk_scenario.n_elements, self.plan.rounds)
        a = probe_block(desk_scenario, self.plan, sched, np.random.default_rng(9), blocks=10)
        b = probe_block(desk_scenario, self.plan, sched, np.random.default_rng(9), blocks=10)
        np.testing.assert_array_equal(a.quad(), b.quad())

    def test_infeasible_plan(self, desk_scenario):
        with pytest.raises(ValueError):
            ProbeSimulator(desk_scenario, ProbePlan(100, 40, 20), PhaseSchedule(Regime.EPS, 16, 1))

    def test_schedule_size_mismatch(self, desk_scenario):
        with pytest.raises(ValueError):
            ProbeSimulator(desk_scenario, self.plan, PhaseSchedule(Regime.EPS, 9, 2))

    def test_sample_power_matches_closed_form(self, desk_scenario):
        plan = ProbePlan(100, 10, 2)
        sched = PhaseSchedule(Regime.EPS, 16, plan.rounds)
        sim = ProbeSimulator(desk_scenario, plan, sched)
        powers = []
        for rng in block_streams(11, 50):
            s = sim.draw(rng, 400)
            powers.append(np.mean(np.abs(s.a) ** 2))
        est = np.mean(powers)
        se = np.std(powers, ddof=1) / math.sqrt(len(powers))
        assert abs(est - build_delta(desk_scenario, plan, Regime.EPS).x1) < 4 * se


class TestStreams:
    def test_reproducible(self):
        a = [g.random(3) for g in block_streams(42, 4)]
        b = [g.random(3) for g in block_streams(42, 4)]
        np.testing.assert_array_equal(a, b)

    def test_prefix_stable(self):
        # the first streams do not depend on how many are requested
        a = block_streams(7, 3)[1].random(5)
        b = block_streams(7, 10)[1].random(5)
        np.testing.assert_array_equal(a, b)

    def test_distinct(self):
        a, b = block_streams(7, 2)
        assert not np.array_equal(a.random(5), b.random(5))
