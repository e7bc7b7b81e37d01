import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import LAMBDA, sinc_series
from irs_skg.geometry import (
    IndefiniteMatrixError,
    IrsGeometry,
    clipped_eigh,
    element_positions,
    scale_correlation,
    spatial_correlation,
)
from irs_skg.scenario import path_gain, reference_scenario

geometries = st.builds(
    IrsGeometry,
    n_h=st.integers(1, 10),
    n_v=st.integers(1, 10),
    d_h=st.floats(0.05, 2.0),
    d_v=st.floats(0.05, 2.0),
    wavelength=st.just(1.0),
)


class TestPositions:
    def test_single_element_at_origin(self):
        pos = element_positions(IrsGeometry(1, 1, 0.1, 0.1, 1.0))
        np.testing.assert_array_equal(pos, [[0.0, 0.0, 0.0]])

    def test_two_elements_in_a_row(self):
        pos = element_positions(IrsGeometry(2, 1, 0.15, 0.2, 1.0))
        np.testing.assert_array_equal(pos, [[0, 0, 0], [0, 0.15, 0]])

    def test_row_major_order(self):
        pos = element_positions(IrsGeometry(3, 2, 1.0, 2.0, 1.0))
        np.testing.assert_array_equal(pos[:, 1], [0, 1, 2, 0, 1, 2])
        np.testing.assert_array_equal(pos[:, 2], [0, 0, 0, 2, 2, 2])

    def test_thirty_by_thirty_span(self):
        g = IrsGeometry.square(30, LAMBDA)
        pos = element_positions(g)
        assert pos.shape == (900, 3)
        assert np.ptp(pos[:, 1]) == pytest.approx(29 * LAMBDA / 2, rel=1e-14)
        assert np.ptp(pos[:, 2]) == pytest.approx(29 * LAMBDA / 2, rel=1e-14)
        assert np.all(pos[:, 0] == 0)


class TestKernel:
    def test_single_element(self):
        np.testing.assert_array_equal(spatial_correlation(IrsGeometry(1, 1, 0.5, 0.5, 1.0)).entries, [[1.0]])

    def test_half_wavelength_pair_is_identity(self):
        R = spatial_correlation(IrsGeometry(2, 1, 0.5, 0.5, 1.0)).entries
        np.testing.assert_allclose(R, np.eye(2), atol=1e-16)

    def test_quarter_wavelength_pair_matches_series(self):
        R = spatial_correlation(IrsGeometry(2, 1, 0.25, 0.25, 1.0)).entries
        assert R[0, 1] == pytest.approx(sinc_series(0.5), rel=1e-14)
        assert R[0, 1] == pytest.approx(2 / math.pi, rel=1e-14)

    def test_entries_match_series_on_a_grid(self):
        g = IrsGeometry(3, 2, 0.3, 0.45, 1.0)
        R = spatial_correlation(g).entries
        pos = element_positions(g)
        for i in range(g.n_elements):
            for j in range(g.n_elements):
                d = float(np.linalg.norm(pos[i] - pos[j]))
                assert R[i, j] == pytest.approx(sinc_series(2 * d), abs=1e-13)

    def test_half_wavelength_axis_offsets_vanish(self):
        g = IrsGeometry(5, 4, 0.5, 0.5, 1.0)
        R = spatial_correlation(g).entries
        pos = element_positions(g)
        for i in range(g.n_elements):
            for j in range(g.n_elements):
                dy, dz = pos[i, 1:] - pos[j, 1:]
                if i != j and (dy == 0 or dz == 0):
                    assert abs(R[i, j]) < 1e-15

    def test_unscaled(self):
        assert spatial_correlation(IrsGeometry(2, 2, 0.5, 0.5, 1.0)).kappa == 1.0

    def test_invalid_geometry(self):
        with pytest.raises(ValueError):
            IrsGeometry(0, 3, 0.5, 0.5, 1.0)
        with pytest.raises(ValueError):
            IrsGeometry(2, 3, -0.5, 0.5, 1.0)
        with pytest.raises(ValueError):
            IrsGeometry(2, 3, 0.5, 0.5, 0.0)


class TestScaling:
    def test_identity_scaling(self):
        g = IrsGeometry(1, 1, 1.0, 1.0, 1.0)
        assert scale_correlation(spatial_correlation(g), 1.0, g).kappa == 1.0

    def test_arithmetic(self):
        g = IrsGeometry(1, 1, 0.15, 0.15, 1.0)
        assert scale_correlation(spatial_correlation(g), 1e-3, g).kappa == pytest.approx(2.25e-5, rel=1e-12)

    def test_alice_irs_link_by_hand(self):
        scn = reference_scenario(30)
        beta_db = 4 + 0 - 10 * 2.1 * math.log10(4.0) - 30
        d = LAMBDA / 2
        expected = 10 ** (beta_db / 10) * d * d
        kappa = scale_correlation(spatial_correlation(scn.irs), path_gain(scn, "ar"), scn.irs).kappa
        assert kappa == pytest.approx(expected, rel=1e-12)

    def test_entries_unchanged(self):
        g = IrsGeometry(2, 2, 0.3, 0.3, 1.0)
        R = spatial_correlation(g)
        np.testing.assert_array_equal(scale_correlation(R, 0.2, g).entries, R.entries)

    def test_rejects_nonpositive_gain(self):
        g = IrsGeometry(1, 1, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            scale_correlation(spatial_correlation(g), 0.0, g)


class TestClipping:
    def test_rounding_negatives_clipped(self):
        w, _ = clipped_eigh(np.diag([1.0, -1e-10]))
        np.testing.assert_array_equal(w, [0.0, 1.0])

    def test_real_negative_rejected(self):
        with pytest.raises(IndefiniteMatrixError):
            clipped_eigh(np.diag([1.0, -1e-3]))


@given(geometries)
def test_kernel_symmetric_unit_diagonal_bounded(g):
    R = spatial_correlation(g).entries
    np.testing.assert_array_equal(R, R.T)
    np.testing.assert_array_equal(np.diag(R), 1.0)
    assert np.all(np.abs(R) <= 1.0)


@given(geometries)
def test_clipped_spectrum_nonnegative_with_trace_n(g):
    R = spatial_correlation(g).entries
    w, _ = clipped_eigh(R)
    assert np.all(w >= 0)
    assert np.sum(w) == pytest.approx(g.n_elements, rel=1e-9)


@given(geometries)
def test_transposed_grid_is_permutation_similar(g):
    t = IrsGeometry(g.n_v, g.n_h, g.d_v, g.d_h, g.wavelength)
    R, Rt = spatial_correlation(g).entries, spatial_correlation(t).entries
    # element (row r, column c) of g is element (row c, column r) of t
    idx = np.arange(g.n_elements)
    perm = (idx % g.n_h) * g.n_v + idx // g.n_h
    np.testing.assert_allclose(Rt[np.ix_(perm, perm)], R, atol=1e-14)


def test_symmetric_unit_diagonal_up_to_hundred_elements():
    for n_h in range(1, 11):
        for n_v in range(1, 11):
            R = spatial_correlation(IrsGeometry(n_h, n_v, 0.3, 0.4, 1.0)).entries
            assert np.array_equal(R, R.T)
            assert np.all(np.diag(R) == 1.0)
