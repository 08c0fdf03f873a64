import numpy as np
import pytest

from oracles import brute_mincut, naive_cut_score, random_banded
from sylunits.core import ValidationError
from sylunits.losspred import (
    ConflictError,
    MaskProbabilityRecord,
    assemble_loss_matrix,
    band_mask,
    cut_objective,
    normalized_mincut,
    sliding_window_records,
)


class TestRecord:
    def test_rejects_out_of_mask_timestep(self):
        with pytest.raises(ValidationError):
            MaskProbabilityRecord(2, 3, {4: 0.5})

    def test_rejects_probability_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            MaskProbabilityRecord(2, 3, {2: 1.5})

    def test_rejects_reversed_mask(self):
        with pytest.raises(ValidationError):
            MaskProbabilityRecord(3, 2)


class TestAssemble:
    def test_single_record_band_placement(self):
        rec = MaskProbabilityRecord(2, 3, {2: 0.7, 3: 0.1})
        m = assemble_loss_matrix([rec], T=3, span=2)
        expected = np.zeros((3, 3))
        expected[0, 1] = 0.7
        np.testing.assert_array_equal(m.C, expected)
        # the lower pass would anchor at row 4 > T and is skipped
        assert m.written.sum() == 1

    def test_interior_record_fills_both_triangles(self):
        rec = MaskProbabilityRecord(3, 6, {t: 0.1 * t for t in range(3, 7)})
        m = assemble_loss_matrix([rec], T=8, span=4)
        # upper: row 2, first two masked frames 3, 4
        assert m.C[1, 2] == pytest.approx(0.3) and m.C[1, 3] == pytest.approx(0.4)
        # lower: row 7, last two masked frames 5, 6
        assert m.C[6, 4] == pytest.approx(0.5) and m.C[6, 5] == pytest.approx(0.6)
        assert m.written.sum() == 4

    def test_conflict(self):
        a = MaskProbabilityRecord(2, 3, {2: 0.5})
        b = MaskProbabilityRecord(2, 2, {2: 0.4})
        with pytest.raises(ConflictError):
            assemble_loss_matrix([a, b], T=4, span=2)

    def test_order_independent(self):
        recs = sliding_window_records(12, 6, lambda lo, hi, t: ((lo * 7 + hi * 3 + t) % 10) / 10)
        a = assemble_loss_matrix(recs, 12, 6)
        b = assemble_loss_matrix(recs[::-1], 12, 6)
        np.testing.assert_array_equal(a.C, b.C)

    @pytest.mark.parametrize("span", [0, 3, -2])
    def test_bad_span(self, span):
        with pytest.raises(ValidationError):
            assemble_loss_matrix([], 5, span)

    def test_mask_longer_than_span(self):
        with pytest.raises(ValidationError):
            assemble_loss_matrix([MaskProbabilityRecord(2, 6, {})], 8, 4)

    @pytest.mark.parametrize("T,span", [(20, 4), (15, 6), (9, 50), (30, 10)])
    def test_full_export_writes_each_band_cell_once(self, T, span):
        recs = sliding_window_records(T, span, lambda lo, hi, t: 0.5)
        # enumerate, per cell, how many records satisfy the anchoring rule
        half = span // 2
        count = np.zeros((T, T), dtype=int)
        for rec in recs:
            for r in range(1, T + 1):
                for c in range(1, T + 1):
                    if r < c <= r + half and rec.mask_start == r + 1 and c <= rec.mask_end:
                        count[r - 1, c - 1] += 1
                    if r - half <= c < r and rec.mask_end == r - 1 and c >= rec.mask_start:
                        count[r - 1, c - 1] += 1
        band = band_mask(T, span)
        assert np.all(count[band] == 1)
        assert np.all(count[~band] == 0)
        m = assemble_loss_matrix(recs, T, span)
        np.testing.assert_array_equal(m.written, band)
        assert np.all(m.C[~band] == 0)


class TestMincut:
    def test_block_diagonal(self):
        C = np.zeros((4, 4))
        C[:2, :2] = 1
        C[2:, 2:] = 1
        seg = normalized_mincut(C, 2)
        assert seg.boundaries.tolist() == [1, 3, 5]
        assert seg.objective == pytest.approx(2.0)

    def test_single_group(self):
        C = random_banded(np.random.default_rng(1), 7, 2)
        assert normalized_mincut(C, 1).boundaries.tolist() == [1, 8]

    def test_k_too_large(self):
        with pytest.raises(ValidationError):
            normalized_mincut(np.eye(3), 4)

    def test_zero_matrix_ties_to_smallest_boundaries(self):
        seg = normalized_mincut(np.zeros((5, 5)), 3)
        assert seg.boundaries.tolist() == [1, 2, 3, 6]
        assert seg.objective == 0.0

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        T = int(rng.integers(4, 11))
        C = random_banded(rng, T, int(rng.integers(1, 4)))
        for k in (2, 3, 4):
            if k > T:
                continue
            seg = normalized_mincut(C, k)
            best, _ = brute_mincut(C, k)
            assert seg.objective == pytest.approx(best, rel=1e-9, abs=1e-12)
            assert naive_cut_score(C, seg.boundaries.tolist()) == pytest.approx(best, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("scale", [0.25, 2.0, 3.7, 1000.0])
    def test_scale_invariance(self, scale):
        rng = np.random.default_rng(11)
        C = random_banded(rng, 9, 3)
        for k in (2, 3):
            assert normalized_mincut(C, k) == normalized_mincut(C * scale, k)

    def test_objective_monotone_in_within_group_mass(self):
        rng = np.random.default_rng(5)
        C = random_banded(rng, 8, 2)
        b = [1, 4, 9]
        before = cut_objective(C, b)
        C2 = C.copy()
        C2[1, 2] += 0.5
        assert cut_objective(C2, b) >= before

    def test_accepts_losspred_matrix(self):
        recs = sliding_window_records(10, 4, lambda lo, hi, t: 0.9 if (t - 1) // 5 == (lo - 1) // 5 else 0.1)
        m = assemble_loss_matrix(recs, 10, 4)
        assert normalized_mincut(m, 2) == normalized_mincut(m.C, 2)
