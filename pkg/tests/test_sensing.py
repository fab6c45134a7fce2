import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmotfs.channel import generate_channel, ground_truth_hddb, representative_doppler
from mmotfs.errors import ConfigurationError, DegenerateColumnError
from mmotfs.estimator import PathInfo
from mmotfs.lattice import OtfsGrid, col_coordinates, col_index, doppler_row, row_coordinates
from mmotfs.modem import dd_oracle
from mmotfs.pilots import PilotLayout, assemble_frame, beam_to_space, design_pilots, make_layout
from mmotfs.sensing import (
    ImplicitSensingMatrix,
    SensingProblem,
    build_phi,
    build_phi_tilde,
    build_pilot_matrix,
    coherence_profile,
    extract_received,
    scatter_received,
    welch_bound,
)

from conftest import crandn


@pytest.fixture
def small():
    g = OtfsGrid(32, 8, 8, N_t=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lay = make_layout(g, 11, 8, 4, 4)
        P = design_pilots(lay, 4)
    return g, lay, assemble_frame(P, lay, None, g)


class TestPilotMatrix:
    def test_zero_shift_is_block(self, small):
        g, lay, fr = small
        X = build_pilot_matrix(fr, lay, g)
        for b in range(-2, 2):
            col = X[:, col_index(0, 0, b, lay, g)]
            np.testing.assert_allclose(col, fr.scale * fr.pilots[:, b + 2])

    def test_doppler_shift_by_one(self, small):
        g, lay, fr = small
        X = build_pilot_matrix(fr, lay, g)
        block = (fr.scale * fr.pilots[:, 1]).reshape(lay.M_p, lay.N_p)
        np.testing.assert_allclose(X[:, col_index(1, 0, -1, lay, g)], np.roll(block, 1, axis=1).ravel())

    def test_direct_definition(self, small):
        g, lay, fr = small
        X = build_pilot_matrix(fr, lay, g)
        k, l = row_coordinates(lay)
        kp, lp, b = col_coordinates(lay, g)
        for r in (0, 17, 87):
            for c in (0, 33, 63):
                assert X[r, c] == fr.beams[b[c] + 2, doppler_row(k[r] - kp[c], g.N), (l[r] - lp[c]) % g.M]


class TestPhaseMatrices:
    def test_phi_tilde_values(self):
        g = OtfsGrid(512, 19, 128)
        lay = PilotLayout(-3, 0, 7, 5, 4, 3)
        phi = build_phi_tilde(lay, g)
        k, l = row_coordinates(lay)
        kp, _, _ = col_coordinates(lay, g)
        np.testing.assert_array_equal(phi[l == 0], 1)
        np.testing.assert_array_equal(phi[:, kp == 0], 1)
        r = np.flatnonzero(l == 1)[0]
        c = np.flatnonzero(kp == 1)[0]
        assert phi[r, c] == pytest.approx(np.exp(2j * np.pi / (640 * 19)))

    def test_empty_path_info(self, small):
        g, lay, fr = small
        phi = build_phi(PathInfo(), lay, g)
        np.testing.assert_array_equal(phi, 1)
        X = build_pilot_matrix(fr, lay, g)
        np.testing.assert_array_equal(SensingProblem(np.zeros(X.shape[0]), X, phi).Theta, X)

    def test_single_path(self, small):
        g, lay, _ = small
        phi = build_phi(PathInfo([2], [3.4]), lay, g)
        _, l = row_coordinates(lay)
        _, lp, _ = col_coordinates(lay, g)
        expected = np.exp(2j * np.pi * l * 3.4 / g.phase_denominator)
        for c in np.flatnonzero(lp == 2):
            np.testing.assert_allclose(phi[:, c], expected)
        np.testing.assert_array_equal(phi[:, lp != 2], 1)

    def test_integer_doppler_matches_tilde_on_support(self, small):
        g, lay, _ = small
        phi = build_phi(PathInfo([1, 3], [1.0, -2.0]), lay, g)
        tilde = build_phi_tilde(lay, g)
        for d, k in ((1, 1), (3, -2)):
            c = col_index(k, d, 0, lay, g)
            np.testing.assert_allclose(phi[:, c], tilde[:, c])

    def test_rejects_duplicates_and_range(self, small):
        g, lay, _ = small

        class Info:
            delays = [1, 1]
            dopplers = [0.0, 0.5]

        with pytest.raises(ConfigurationError):
            build_phi(Info(), lay, g)
        with pytest.raises(ConfigurationError):
            build_phi(PathInfo([9], [0.0]), lay, g)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.floats(-3.5, 3.5)), max_size=4, unique_by=lambda t: t[0]))
    def test_unit_modulus_and_norm_preservation(self, pairs):
        g = OtfsGrid(32, 8, 8, N_t=4)
        lay = PilotLayout(-4, 4, 8, 11, 4, 4)
        info = PathInfo([p[0] for p in pairs], [p[1] for p in pairs])
        phi = build_phi(info, lay, g)
        np.testing.assert_allclose(np.abs(phi), 1.0, atol=1e-12)
        X = crandn(np.random.default_rng(len(pairs)), *phi.shape)
        np.testing.assert_allclose(np.linalg.norm(X * phi, axis=0), np.linalg.norm(X, axis=0), rtol=1e-12)
        _, lp, _ = col_coordinates(lay, g)
        i, j = np.flatnonzero(lp == 1)[:2]
        T = X * phi
        assert abs(np.vdot(T[:, i], T[:, j])) == pytest.approx(abs(np.vdot(X[:, i], X[:, j])))


class TestReceived:
    def test_constant_and_delta(self, small):
        g, lay, _ = small
        np.testing.assert_array_equal(extract_received(np.full((8, 32), 2.5), lay), np.full(88, 2.5))
        y = np.zeros((8, 32))
        y[doppler_row(lay.k_p, 8), lay.l_p] = 1
        e = extract_received(y, lay)
        assert e[0] == 1 and e.sum() == 1

    def test_scatter_round_trip(self, small, rng):
        g, lay, _ = small
        y = crandn(rng, lay.n_rows)
        np.testing.assert_array_equal(extract_received(scatter_received(y, lay, g), lay), y)

    def test_model_fidelity_single_subpath(self):
        rng = np.random.default_rng(7)
        g = OtfsGrid(32, 8, 8, N_t=4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lay = make_layout(g, 11, 8, 8, 4)
            fr = assemble_frame(design_pilots(lay, 4), lay, None, g)
        for _ in range(5):
            ch = generate_channel(g, 2, 1, 400.0, 4e9, 3, rng)
            y = extract_received(dd_oracle(beam_to_space(fr), ch, g), lay)
            info = PathInfo([p.delay_tap for p in ch.paths], [representative_doppler(p, g) for p in ch.paths])
            theta = build_pilot_matrix(fr, lay, g) * build_phi(info, lay, g)
            h = ground_truth_hddb(ch, lay)
            assert np.linalg.norm(theta @ h - y) <= 1e-6 * np.linalg.norm(y)


class TestCoherence:
    def test_identity(self):
        assert coherence_profile(np.eye(5))["max_offdiag"] == 0

    def test_duplicate_columns(self):
        A = np.array([[1.0, 2.0], [1.0, 2.0]])
        assert coherence_profile(A)["max_offdiag"] == pytest.approx(1.0)

    def test_zero_column(self):
        with pytest.raises(DegenerateColumnError):
            coherence_profile(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_histogram_counts_pairs(self):
        prof = coherence_profile(np.eye(4))
        assert prof["histogram"][0].sum() == 6 == len(prof["values"])

    def test_welch(self):
        assert welch_bound(16, 64) == pytest.approx(math.sqrt(48 / (63 * 16)))
        assert welch_bound(16, 64) == pytest.approx(0.21822, abs=1e-5)
        assert welch_bound(16, 16) == 0
        assert welch_bound(143, 10**6) == pytest.approx(1 / math.sqrt(143), rel=1e-3)


class TestSensingProblem:
    def test_shape_checks(self):
        with pytest.raises(ConfigurationError):
            SensingProblem(np.zeros(3), np.zeros((3, 4)), np.ones((3, 5)))
        with pytest.raises(ConfigurationError):
            SensingProblem(np.zeros(2), np.zeros((3, 4)), np.ones((3, 4)))


class TestImplicitOperator:
    @pytest.mark.parametrize("with_info", [False, True])
    def test_matches_dense(self, small, rng, with_info):
        g, lay, fr = small
        info = PathInfo([0, 2], [0.3, -1.6]) if with_info else None
        phi = build_phi(info, lay, g) if with_info else build_phi_tilde(lay, g)
        dense = build_pilot_matrix(fr, lay, g) * phi
        op = ImplicitSensingMatrix(fr, lay, g, info)
        h = crandn(rng, dense.shape[1])
        r = crandn(rng, dense.shape[0])
        np.testing.assert_allclose(op.matvec(h), dense @ h, atol=1e-10)
        np.testing.assert_allclose(op.rmatvec(r), dense.conj().T @ r, atol=1e-10)
        np.testing.assert_allclose(op.column_norms(), np.linalg.norm(dense, axis=0))
