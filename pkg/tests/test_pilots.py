import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmotfs.errors import CapacityError, ConfigurationError, InvalidRootError, LayoutError
from mmotfs.lattice import OtfsGrid, col_index, doppler_row
from mmotfs.pilots import (
    CellType,
    PilotLayout,
    assemble_frame,
    baseline_footprint_cells,
    beam_to_space,
    design_pilots,
    footprint_cells,
    load_pilots,
    make_layout,
    max_supported_antennas,
    nearest_prime,
    random_pilots,
    save_pilots,
    space_to_beam,
    zc_sequence,
)
from mmotfs.sensing import build_pilot_matrix, coherence_profile

from conftest import crandn

PRIMES = [3, 5, 7, 11, 13]


class TestZadoffChu:
    @pytest.mark.parametrize("L,r", [(7, 3), (11, 1), (8, 3)])
    def test_first_element(self, L, r):
        assert zc_sequence(L, r)[0] == pytest.approx(1 / math.sqrt(L))

    def test_length_three(self):
        expected = np.array([1, np.exp(2j * np.pi / 3), 1]) / math.sqrt(3)
        np.testing.assert_allclose(zc_sequence(3, 1), expected, atol=1e-15)

    def test_prime_cyclic_orthogonality(self):
        z0 = zc_sequence(7, 1)
        for c in range(1, 7):
            assert abs(np.vdot(z0, zc_sequence(7, 1, c))) < 1e-12

    def test_shift_is_roll(self):
        np.testing.assert_allclose(zc_sequence(11, 4, 3), np.roll(zc_sequence(11, 4), 3))

    @pytest.mark.parametrize("L,r", [(8, 2), (9, 3), (7, 0), (7, 7)])
    def test_invalid_root(self, L, r):
        with pytest.raises(InvalidRootError):
            zc_sequence(L, r)

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(PRIMES), st.data())
    def test_cross_root_correlation(self, L, data):
        r1 = data.draw(st.integers(1, L - 1))
        r2 = data.draw(st.integers(1, L - 1).filter(lambda r: r != r1))
        c = data.draw(st.integers(0, L - 1))
        assert abs(np.vdot(zc_sequence(L, r1), zc_sequence(L, r2, c))) == pytest.approx(1 / math.sqrt(L), abs=1e-10)

    def test_nearest_prime(self):
        assert nearest_prime(16) == 17
        assert nearest_prime(24) == 23
        assert nearest_prime(9) == 7
        assert nearest_prime(13) == 13


class TestLayout:
    def test_support_larger_than_block(self):
        with pytest.raises(ConfigurationError):
            PilotLayout(0, 0, 3, 5, 4, 2)
        with pytest.raises(ConfigurationError):
            PilotLayout(0, 0, 5, 2, 4, 3)

    def test_out_of_grid(self):
        g = OtfsGrid(32, 8, 8)
        with pytest.raises(LayoutError):
            PilotLayout(-5, 0, 3, 5, 2, 3).validate(g)
        with pytest.raises(LayoutError):
            PilotLayout(0, 30, 3, 5, 2, 3).validate(g)

    def test_footprint_too_large(self):
        g = OtfsGrid(32, 8, 8)
        with pytest.raises(LayoutError):
            make_layout(g, 5, 5, 2, 2)
        with pytest.raises(LayoutError):
            make_layout(g, 23, 8, 2, 5)

    def test_defaults(self, desk_layout):
        assert (desk_layout.l_p, desk_layout.k_p) == (8, -8)

    def test_footprints(self):
        g = OtfsGrid(64, 16, 16)
        full = make_layout(g, 23, 16, 6, 8)
        assert footprint_cells(full, g) == baseline_footprint_cells(full, g) == 16 * 39
        part = make_layout(g, 13, 7, 2, 3, k_p=-3)
        extra = footprint_cells(part, g) - baseline_footprint_cells(part, g)
        assert extra == part.N_g * (part.M_p + 2 * part.M_g)


class TestDesignPilots:
    def test_single_beam(self):
        lay = PilotLayout(0, 0, 5, 7, 2, 3)
        P = design_pilots(lay, 1)
        np.testing.assert_allclose(P[:, 0], np.kron(zc_sequence(7, 6), zc_sequence(5, 4)))
        assert np.linalg.norm(P[:, 0]) == pytest.approx(1.0)

    def test_traced_example(self):
        lay = PilotLayout(0, 0, 3, 5, 1, 2)
        P = design_pilots(lay, 4)
        shifts = [(0, 0), (0, 1), (0, 2), (1, 0)]
        for b, (i, j) in enumerate(shifts):
            np.testing.assert_allclose(P[:, b], np.kron(zc_sequence(5, 4, 2 * i), zc_sequence(3, 2, j)))

    def test_unit_norm_and_coherence_values(self):
        lay = PilotLayout(0, 0, 5, 7, 2, 3)
        P = design_pilots(lay, max_supported_antennas(lay))
        np.testing.assert_allclose(np.linalg.norm(P, axis=0), 1.0, atol=1e-12)
        G = np.abs(P.conj().T @ P)
        off = G[~np.eye(G.shape[0], dtype=bool)]
        near = np.minimum(np.abs(off), np.abs(off - 1 / math.sqrt(35)))
        assert np.all(near < 1e-10)
        per_group = (7 // 3) * (5 // 2)
        for g0 in range(0, P.shape[1], per_group):
            block = G[g0:g0 + per_group, g0:g0 + per_group]
            np.testing.assert_allclose(block, np.eye(per_group), atol=1e-12)

    def test_capacity(self):
        lay = PilotLayout(0, 0, 5, 7, 2, 3)
        cap = max_supported_antennas(lay)
        assert cap == min(6, 4) * 2 * 2
        with pytest.raises(CapacityError) as info:
            design_pilots(lay, cap + 1)
        assert info.value.max_antennas == cap

    def test_non_prime_warns(self):
        with pytest.warns(UserWarning, match="not both prime"):
            design_pilots(PilotLayout(0, 0, 4, 7, 2, 3), 2)

    def test_round_trip_csv(self, tmp_path):
        P = design_pilots(PilotLayout(0, 0, 5, 7, 2, 3), 4)
        save_pilots(P, tmp_path / "p.csv")
        np.testing.assert_array_equal(load_pilots(tmp_path / "p.csv"), P)


class TestRandomPilots:
    def test_deterministic_unit_norm(self):
        lay = PilotLayout(0, 0, 5, 7, 2, 3)
        A, B = random_pilots(lay, 6, 3), random_pilots(lay, 6, 3)
        np.testing.assert_array_equal(A, B)
        np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-12)

    def test_heavier_coherence_tail(self):
        lay = PilotLayout(0, 0, 11, 13, 2, 3)
        det = coherence_profile(design_pilots(lay, 16))["max_offdiag"]
        rnd = coherence_profile(random_pilots(lay, 16, 0))["max_offdiag"]
        assert det < rnd


class TestAssembleFrame:
    def test_cell_partition(self, desk_grid, desk_layout, desk_pilots):
        fr = assemble_frame(desk_pilots, desk_layout, None, desk_grid)
        c = fr.counts()
        assert sum(c.values()) == 64 * 16
        assert c["pilot"] == 23 * 16
        # N_p = N: no Doppler guards, delay extension plus one guard band
        assert c["extension"] == 8 * 16 and c["guard"] == 8 * 16
        assert footprint_cells(desk_layout, desk_grid) == 16 * (23 + 16)

    def test_partial_doppler_extension(self):
        g = OtfsGrid(32, 16, 8, N_t=2)
        lay = make_layout(g, 7, 5, 2, 3)
        fr = assemble_frame(design_pilots(lay, 2), lay, None, g)
        c = fr.counts()
        assert c["pilot"] == 35
        assert c["pilot"] + c["extension"] == (5 + 2) * (7 + 3)
        assert c["pilot"] + c["extension"] + c["guard"] == footprint_cells(lay, g)

    def test_extension_replicates_pilots(self):
        g = OtfsGrid(32, 16, 8, N_t=2)
        lay = make_layout(g, 7, 5, 2, 3)
        fr = assemble_frame(design_pilots(lay, 2), lay, None, g)
        ext = np.argwhere(fr.cells == CellType.EXTENSION)
        for row, col in ext:
            k = row - g.N // 2
            dk = (k - lay.k_p) % lay.N_p
            dl = (col - lay.l_p) % lay.M_p
            src = (doppler_row(lay.k_p + dk, g.N), lay.l_p + dl)
            np.testing.assert_allclose(fr.beams[:, row, col], fr.beams[:, src[0], src[1]])

    def test_shifted_reads_are_kronecker_columns(self):
        g = OtfsGrid(32, 16, 8, N_t=4)
        lay = make_layout(g, 7, 5, 2, 3)
        P = design_pilots(lay, 4)
        fr = assemble_frame(P, lay, None, g, scale=1.0)
        X = build_pilot_matrix(fr, lay, g)
        for b in (-2, 1):
            bi = b + 2
            for kp in (-1, 0):
                for lp in (0, 2):
                    col = X[:, col_index(kp, lp, b, lay, g)]
                    block = P[:, bi].reshape(7, 5)
                    expected = np.roll(np.roll(block, lp, axis=0), kp, axis=1).ravel()
                    np.testing.assert_allclose(col, expected, atol=1e-14)

    def test_designation_shared_and_data_scaled(self, desk_grid, desk_layout, desk_pilots, rng):
        d = crandn(rng, 16, 64)
        fr = assemble_frame(desk_pilots, desk_layout, d, desk_grid)
        m = fr.data_mask
        np.testing.assert_allclose(fr.beams[:, m], np.broadcast_to(d[m] / math.sqrt(8), (8, m.sum())))
        assert not np.any(fr.beams[:, fr.cells == CellType.GUARD])

    def test_data_on_antenna_zero(self, desk_grid, desk_layout, desk_pilots, rng):
        d = crandn(rng, 16, 64)
        fr = assemble_frame(np.zeros_like(desk_pilots), desk_layout, d, desk_grid)
        sp = beam_to_space(fr)
        np.testing.assert_allclose(sp[0][fr.data_mask], d[fr.data_mask])
        assert np.max(np.abs(sp[1:])) < 1e-12

    def test_pilot_power_per_cell(self, desk_grid, desk_layout, desk_pilots):
        fr = assemble_frame(desk_pilots, desk_layout, None, desk_grid)
        pilot = fr.cells == CellType.PILOT
        power = np.sum(np.abs(fr.beams[:, pilot]) ** 2) / pilot.sum()
        assert power == pytest.approx(1.0)

    def test_errors(self, desk_grid, desk_layout, desk_pilots):
        with pytest.raises(ConfigurationError):
            assemble_frame(desk_pilots[:-1], desk_layout, None, desk_grid)
        with pytest.raises(ConfigurationError):
            assemble_frame(desk_pilots[:, :4], desk_layout, None, desk_grid)
        with pytest.raises(ConfigurationError):
            assemble_frame(desk_pilots, desk_layout, np.zeros((3, 3)), desk_grid)


class TestBeamSpace:
    def test_single_beam_constant(self):
        x = np.zeros((8, 2, 3), dtype=complex)
        x[4] = 2.0
        np.testing.assert_allclose(beam_to_space(x), np.full((8, 2, 3), 2 / math.sqrt(8)))

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from([1, 2, 4, 8, 16]), st.integers(0, 2**32 - 1))
    def test_round_trip_and_energy(self, n_t, seed):
        x = crandn(np.random.default_rng(seed), n_t, 3, 4)
        s = beam_to_space(x)
        np.testing.assert_allclose(space_to_beam(s), x, atol=1e-12)
        np.testing.assert_allclose(np.sum(np.abs(s) ** 2, axis=0), np.sum(np.abs(x) ** 2, axis=0), rtol=1e-12)

