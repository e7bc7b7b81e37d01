import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import LAMBDA
from irs_skg.oracle import (
    MonteCarloReport,
    empirical_correlation,
    empirical_mi,
    empirical_mi_report,
    empirical_quad,
    gaussianity_check,
)
from irs_skg.rate import lambda_fn
from irs_skg.scenario import ProbePlan, dbm_to_watt, reference_scenario
from irs_skg.statistics import Regime, build_delta, build_omega, temporal_correlation

PLAN = ProbePlan(100, 10, 2)


def test_report_check():
    rep = MonteCarloReport("x", 1.0, 0.01, 100)
    assert rep.check(1.03).passed is True
    assert rep.check(1.05).passed is False
    assert rep.check(1.05, abs_floor=0.06).passed is True
    assert rep.check(1.03).tolerance == pytest.approx(0.04)


class TestCorrelation:
    def test_reproducible(self, desk_scenario):
        a = empirical_correlation(desk_scenario, PLAN, "eps", True, 2000, seed=3, batches=10)
        b = empirical_correlation(desk_scenario, PLAN, "eps", True, 2000, seed=3, batches=10)
        assert a == b
        assert a.standard_error > 0
        assert a.sample_count == 2000

    def test_subtracted_rps_matches_closed_form(self, desk_scenario):
        closed = temporal_correlation(desk_scenario, PLAN, "rps", False).value
        rep = empirical_correlation(desk_scenario, PLAN, "rps", False, 20_000, seed=5).check(closed, 4, 0.02)
        assert rep.passed, rep

    def test_static_dominant_channel(self):
        # a 1x1 IRS at very long range leaves only the direct path, which repeats across rounds
        scn = replace(reference_scenario(1, power_w=1e3), d_ar=5e4, d_br=5e4, d_er=5e4)
        rep = empirical_correlation(scn, PLAN, "eps", True, 2000, seed=1, batches=20)
        assert rep.estimate == pytest.approx(1.0, abs=1e-3)

    def test_needs_two_rounds(self, desk_scenario):
        with pytest.raises(ValueError):
            empirical_correlation(desk_scenario, ProbePlan(100, 10, 40), "eps", True, 100, seed=0)


class TestQuad:
    def test_matches_delta(self, desk_scenario):
        for regime in Regime:
            emp = empirical_quad(desk_scenario, PLAN, regime, 20_000, seed=7)
            assert not emp.mismatches(build_delta(desk_scenario, PLAN, regime))

    def test_direct_estimates_match_omega(self, desk_scenario):
        emp = empirical_quad(desk_scenario, PLAN, "eps", 200_000, seed=8, direct=True)
        assert not emp.mismatches(build_omega(desk_scenario, PLAN))

    def test_independent_eve(self):
        zeros = (2.404825557695773, 5.520078110286311, 8.653727912911013)
        d = [z * LAMBDA / (2 * math.pi) for z in zeros]
        scn = replace(reference_scenario(4), d_ab=d[0], d_ae=d[1], d_be=d[2])
        emp = empirical_quad(scn, PLAN, "rps", 20_000, seed=9)
        z = (emp.matrix.real / emp.matrix_se)
        assert abs(z[2, 3]) < 4 and abs(z[0, 2]) < 4 and abs(z[1, 3]) < 4


class TestMutualInformation:
    def test_independent_samples(self):
        rng = np.random.default_rng(0)
        n = 200_000
        x = (rng.normal(size=(n, 4)) + 1j * rng.normal(size=(n, 4))) / math.sqrt(2)
        assert abs(empirical_mi(x)) < 1e-3

    def test_bivariate_without_eve(self):
        rng = np.random.default_rng(1)
        n = 400_000
        w = (rng.normal(size=(n, 4)) + 1j * rng.normal(size=(n, 4))) / math.sqrt(2)
        a = w[:, 0]
        b = 0.9 * w[:, 0] + math.sqrt(1 - 0.81) * w[:, 1]
        mi = empirical_mi(np.stack([a, b, w[:, 2], w[:, 3]], axis=1))
        assert mi == pytest.approx(-math.log2(1 - 0.81), abs=0.02)
        assert -math.log2(1 - 0.81) == pytest.approx(2.3959, abs=1e-4)

    def test_matrix_input(self):
        M = build_delta(reference_scenario(4), PLAN, "eps").matrix()
        assert empirical_mi(M) == pytest.approx(math.log2(lambda_fn(build_delta(reference_scenario(4), PLAN, "eps"))))

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            empirical_mi(np.zeros((5, 3)))

    def test_report_close_to_closed_form(self):
        scn = reference_scenario(4, dbm_to_watt(20))
        closed = math.log2(lambda_fn(build_delta(scn, PLAN, "eps")))
        rep = empirical_mi_report(scn, PLAN, "eps", 20_000, seed=2)
        assert abs(rep.estimate - closed) < max(4 * rep.standard_error, 0.03 * closed)


class TestGaussianity:
    def test_single_element_is_product_of_gaussians(self):
        rep = gaussianity_check(reference_scenario(1), "eps", 200_000, seed=3)
        assert rep.estimate == pytest.approx(4.0, abs=0.1)

    def test_many_elements_near_gaussian(self):
        rep = gaussianity_check(reference_scenario(10), "rps", 50_000, seed=4)
        assert abs(rep.estimate - 2.0) < max(4 * rep.standard_error, 0.05)
        assert rep.standard_error > 0
