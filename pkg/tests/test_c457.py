import numpy as np
import pytest

from conftest import random_mask
from petroseg.c457 import (
    PASTE_AIR_BRANCH_RATIO,
    AirVoidReport,
    ChordSet,
    PointCountResult,
    air_void_parameters,
    extract_chords,
    make_grid,
    make_traverse,
    parse_report_csv,
    point_count,
    render_report_table,
    report_table_csv,
    spacing_factor_mm,
)
from petroseg.errors import InputError
from petroseg.raster import PhaseLabel, PhaseMask, phase_fractions


class TestMakeGrid:
    def test_ten_by_ten_on_100px(self):
        grid = make_grid(100, 100, 10, 10)
        assert grid.xs.tolist() == [5, 15, 25, 35, 45, 55, 65, 75, 85, 95]
        assert grid.ys.tolist() == grid.xs.tolist()

    def test_single_center_point(self):
        grid = make_grid(101, 57, 1, 1)
        assert grid.xs.tolist() == [50]
        assert grid.ys.tolist() == [28]

    def test_default_grid_on_full_scan(self):
        grid = make_grid(9434, 9434)
        assert grid.total == 10000
        assert 0 <= grid.xs.min() and grid.xs.max() < 9434
        assert 0 <= grid.ys.min() and grid.ys.max() < 9434

    def test_grid_at_pixel_density_is_identity(self):
        grid = make_grid(7, 5, 5, 7)
        assert grid.xs.tolist() == list(range(7))
        assert grid.ys.tolist() == list(range(5))

    def test_too_small_raster(self):
        with pytest.raises(InputError, match="too small"):
            make_grid(9, 10, 10, 10)


class TestPointCount:
    def test_all_paste(self):
        mask = PhaseMask(pitch_um=1.0, labels=np.ones((20, 20), dtype=np.uint8))
        pc = point_count(mask, make_grid(20, 20, 4, 4))
        assert (pc.s_paste, pc.s_total) == (16, 16)

    def test_checkerboard_exact_split(self):
        # 10 px cells; the 10x10 cell-center grid samples each cell once.
        y, x = np.mgrid[0:100, 0:100]
        labels = (((x // 10) + (y // 10)) % 2).astype(np.uint8)  # agg/paste checkerboard
        mask = PhaseMask(pitch_um=1.0, labels=labels)
        pc = point_count(mask, make_grid(100, 100, 10, 10))
        assert (pc.s_agg, pc.s_paste, pc.s_void) == (50, 50, 0)

    def test_grid_at_pixel_density_matches_phase_fractions(self, rng):
        mask = random_mask(rng, width=30, height=20)
        pc = point_count(mask, make_grid(30, 20, 20, 30))
        fr = phase_fractions(mask)
        assert pc.fraction(PhaseLabel.VOID) == fr[PhaseLabel.VOID]
        assert pc.fraction(PhaseLabel.PASTE) == fr[PhaseLabel.PASTE]

    def test_unlabeled_point_is_error_listing_points(self):
        labels = np.ones((20, 20), dtype=np.uint8)
        labels[7, 7] = 255
        mask = PhaseMask(pitch_um=1.0, labels=labels)
        with pytest.raises(InputError, match=r"\(row=1, col=1\)"):
            point_count(mask, make_grid(20, 20, 4, 4))


class TestExtractChords:
    def test_single_run_length(self):
        labels = np.ones((9, 30), dtype=np.uint8)
        labels[4, 10:20] = 2
        mask = PhaseMask(pitch_um=5.3, labels=labels)
        traverse = make_traverse(30, 9, 5.3, spacing_um=9 * 5.3)
        chords = extract_chords(mask, traverse)
        assert traverse.ys == (4,)
        assert chords.all_chords_um() == [10 * 5.3]
        assert chords.n_chords == 1

    def test_void_free(self):
        mask = PhaseMask(pitch_um=1.0, labels=np.ones((10, 10), dtype=np.uint8))
        chords = extract_chords(mask, make_traverse(10, 10, 1.0, spacing_um=2.0))
        assert chords.n_chords == 0 and chords.air_traverse_mm == 0.0

    def test_disk_center_chord_is_diameter(self):
        r = 7
        yy, xx = np.ogrid[-10:11, -15:16]
        labels = np.where(yy * yy + xx * xx <= r * r, 2, 1).astype(np.uint8)
        mask = PhaseMask(pitch_um=1.0, labels=labels)
        traverse = make_traverse(31, 21, 1.0, spacing_um=21)  # one line through the center row
        chords = extract_chords(mask, traverse)
        assert traverse.ys == (10,)
        (chord,) = chords.all_chords_um()
        assert abs(chord - 2 * r) <= 1.0

    def test_border_touching_toggle(self):
        labels = np.ones((3, 10), dtype=np.uint8)
        labels[1, 0:3] = 2
        labels[1, 5:7] = 2
        mask = PhaseMask(pitch_um=1.0, labels=labels)
        traverse = make_traverse(10, 3, 1.0, spacing_um=3.0)
        assert extract_chords(mask, traverse).n_chords == 2
        assert extract_chords(mask, traverse, include_border=False).n_chords == 1

    def test_totals_bounded_by_traverse(self, rng):
        mask = random_mask(rng, width=50, height=40, pitch_um=2.0)
        traverse = make_traverse(50, 40, 2.0, spacing_um=16.0)
        chords = extract_chords(mask, traverse)
        assert chords.air_traverse_mm <= traverse.total_length_mm + 1e-12
        assert chords.n_chords <= chords.air_traverse_mm / (2.0 / 1000.0) + 1e-9


class TestTraverse:
    def test_length_is_lines_times_width(self):
        traverse = make_traverse(2000, 2000, 5.3, spacing_um=2000.0)
        # 2000 px * 5.3 um = 10.6 mm height -> 5 lines; width 10.6 mm
        assert traverse.n_lines == 5
        assert traverse.total_length_mm == pytest.approx(5 * 10.6)

    def test_at_least_one_line(self):
        traverse = make_traverse(100, 10, 1.0, spacing_um=1e6)
        assert traverse.n_lines == 1


class TestAirVoidParameters:
    def test_low_ratio_powers_formula(self):
        # P/A = 3.0 <= 4.342: Lbar = P / (4 n) = 0.30 / 1.2 = 0.250 mm
        assert spacing_factor_mm(0.30, 0.10, 0.3) == pytest.approx(0.250, rel=1e-9)

    def test_high_ratio_powers_formula(self):
        # alpha = 16, P/A = 7, Lbar = (3/16) * (1.4 * 2 - 1) = 0.3375 mm
        assert spacing_factor_mm(0.35, 0.05, 0.2) == pytest.approx(0.3375, rel=1e-9)

    def test_branch_continuity(self):
        p, n = 0.30, 0.25
        a = p / PASTE_AIR_BRANCH_RATIO
        low = p / (4 * n)
        alpha = 4 * n / a
        high = (3 / alpha) * (1.4 * (1 + p / a) ** (1 / 3) - 1)
        assert abs(low - high) / low < 1e-3

    def test_report_identities(self, rng):
        for _ in range(20):
            s_void = int(rng.integers(1, 400))
            s_paste = int(rng.integers(1, 4000))
            s_agg = int(rng.integers(1, 6000))
            pc = PointCountResult(s_agg=s_agg, s_paste=s_paste, s_void=s_void)
            n_chords = int(rng.integers(1, 200))
            chords = ChordSet(chords_um_per_line=(tuple(float(c) for c in rng.uniform(5, 400, n_chords)),))
            t_t = float(rng.uniform(50, 500))
            r = air_void_parameters(pc, chords, t_t)
            assert r.a_pct + r.p_pct + r.agg_pct == pytest.approx(100.0, abs=0.01)
            assert r.alpha_per_mm * (r.a_pct / 100) == pytest.approx(4 * r.n_per_mm, rel=1e-12)
            assert r.chord_mm * r.n_per_mm == pytest.approx(r.a_pct / 100, rel=1e-12)

    def test_zero_air_reports_undefined(self):
        pc = PointCountResult(s_agg=60, s_paste=40, s_void=0)
        r = air_void_parameters(pc, ChordSet(chords_um_per_line=((),)), 100.0)
        assert r.a_pct == 0.0 and r.p_pct == 40.0
        assert r.alpha_per_mm is None and r.chord_mm is None and r.lbar_mm is None
        assert r.n_per_mm == 0.0


class TestReportTable:
    def test_single_row(self):
        r = AirVoidReport(a_pct=10.0, p_pct=30.0, agg_pct=60.0, n_per_mm=0.3, alpha_per_mm=12.0, chord_mm=1 / 3, lbar_mm=0.25)
        text = render_report_table([("sample1", r)])
        assert text.count("\n") == 2  # header + one row
        assert "sample1" in text

    def test_reference_row_formatting(self):
        r = AirVoidReport(a_pct=10.4, p_pct=30.1, agg_pct=59.5, n_per_mm=None, alpha_per_mm=None, chord_mm=None, lbar_mm=0.136)
        row = render_report_table([("Lime_train_1", r)]).splitlines()[1]
        assert "10.4" in row and "30.1" in row and "0.136" in row

    def test_csv_round_trip_identical(self):
        rows = [
            ("a", AirVoidReport(10.4, 30.1, 59.5, 0.30000000001, 11.538461538461538, 0.3466666666666667, 0.2508333333333333)),
            ("b", AirVoidReport(0.0, 40.0, 60.0, 0.0, None, None, None)),
        ]
        text = report_table_csv(rows)
        parsed = parse_report_csv(text)
        assert [label for label, _ in parsed] == ["a", "b"]
        for (_, orig), (_, back) in zip(rows, parsed):
            for name in ("a_pct", "p_pct", "agg_pct", "n_per_mm", "alpha_per_mm", "chord_mm", "lbar_mm"):
                assert getattr(orig, name) == getattr(back, name)

    def test_csv_header_exact(self):
        r = AirVoidReport(1.0, 2.0, 97.0, None, None, None, None)
        assert report_table_csv([("x", r)]).splitlines()[0] == "label,A_pct,P_pct,agg_pct,n_per_mm,alpha_per_mm,chord_mm,Lbar_mm"

    def test_undefined_fields_empty_in_csv(self):
        r = AirVoidReport(0.0, 40.0, 60.0, 0.0, None, None, None)
        row = report_table_csv([("x", r)]).splitlines()[1]
        assert row.endswith(",,,")
