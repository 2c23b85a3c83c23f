import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bathealth.data import (
    CellHistory, Cycle, Phase, PhaseSegment, SampleSeries, compute_soc_series, cumulative_charge,
    discharge_capacity_ah, history_from_json, history_to_json, ingest_cycles, load_history,
    save_history, segment_phases, soc_out_of_range, write_cycles_csv,
)
from bathealth.errors import ArgumentError, DataError, FormatError

from conftest import constant_series


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


TOY = """cycle_index,time_s,current_a,voltage_v,temperature_c
1,0,-2,4.0,25
1,1800,-2,3.6,26
1,3600,-2,3.2,27
2,0,-2,4.0,25
2,1710,-2,3.6,26
2,3420,-2,3.2,27
"""


class TestIngest:
    def test_sidecar_soh(self, tmp_path):
        csv_path = _write(tmp_path / "toy.csv", TOY)
        cap = _write(tmp_path / "cap.csv", "cycle_index,capacity_ah\n1,2.0\n2,1.9\n")
        h = ingest_cycles(csv_path, nominal_capacity=2.0, capacity_path=cap)
        assert [c.index for c in h.cycles] == [1, 2]
        np.testing.assert_allclose(h.soh, [100.0, 95.0])

    def test_coulomb_counted_capacity(self, tmp_path):
        h = ingest_cycles(_write(tmp_path / "toy.csv", TOY), nominal_capacity=2.0)
        assert h.cycles[0].discharge_capacity == pytest.approx(2.0, abs=1e-12)
        assert h.cycles[0].soh == pytest.approx(100.0)
        assert h.cycles[1].discharge_capacity == pytest.approx(1.9)

    def test_missing_voltage_column(self, tmp_path):
        p = _write(tmp_path / "bad.csv", "cycle_index,time_s,current_a,temperature_c\n1,0,1,25\n")
        with pytest.raises(FormatError):
            ingest_cycles(p, nominal_capacity=2.0)

    def test_non_monotone_time(self, tmp_path):
        p = _write(tmp_path / "bad.csv", "cycle_index,time_s,current_a,voltage_v,temperature_c\n"
                   "1,0,1,3.7,25\n1,10,1,3.7,25\n1,5,1,3.7,25\n")
        with pytest.raises(DataError):
            ingest_cycles(p, nominal_capacity=2.0)

    @pytest.mark.parametrize("nominal", [0.0, -1.0])
    def test_bad_nominal(self, tmp_path, nominal):
        with pytest.raises(ArgumentError):
            ingest_cycles(_write(tmp_path / "toy.csv", TOY), nominal_capacity=nominal)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(FormatError):
            ingest_cycles(_write(tmp_path / "toy.csv", TOY), format="nasa-mat", nominal_capacity=2.0)

    def test_rows_sorted_by_cycle(self, tmp_path):
        lines = TOY.strip().splitlines()
        shuffled = "\n".join([lines[0]] + lines[4:] + lines[1:4]) + "\n"
        h = ingest_cycles(_write(tmp_path / "s.csv", shuffled), nominal_capacity=2.0)
        assert [c.index for c in h.cycles] == [1, 2]

    def test_discharge_positive_convention(self, tmp_path):
        flipped = TOY.replace(",-2,", ",2,")
        h = ingest_cycles(_write(tmp_path / "f.csv", flipped), nominal_capacity=2.0,
                          current_sign="discharge-positive")
        assert h.cycles[0].discharge_capacity == pytest.approx(2.0)

    def test_sidecar_disagreement_warns(self, tmp_path, caplog):
        cap = _write(tmp_path / "cap.csv", "cycle_index,capacity_ah\n1,1.5\n2,1.9\n")
        with caplog.at_level(logging.WARNING, logger="bathealth.data"):
            h = ingest_cycles(_write(tmp_path / "toy.csv", TOY), nominal_capacity=2.0, capacity_path=cap)
        assert h.cycles[0].discharge_capacity == 1.5
        assert any("differs from coulomb count" in r.message for r in caplog.records)

    def test_phase_column_overrides_detection(self, tmp_path):
        text = TOY.strip().replace("temperature_c", "temperature_c,phase")
        lines = text.splitlines()
        lines = [lines[0]] + [ln + ",other" for ln in lines[1:]]
        h = ingest_cycles(_write(tmp_path / "p.csv", "\n".join(lines) + "\n"), nominal_capacity=2.0)
        assert [s.kind for s in h.cycles[0].phases] == [Phase.OTHER]


class TestRoundTrip:
    def test_csv_round_trip(self, small_cells, tmp_path):
        h = small_cells[0]
        write_cycles_csv(h, tmp_path / "c.csv", tmp_path / "cap.csv", include_phase=True)
        back = ingest_cycles(tmp_path / "c.csv", nominal_capacity=h.nominal_capacity,
                             capacity_path=tmp_path / "cap.csv", cell_id=h.cell_id,
                             upper_cutoff=h.upper_cutoff_voltage, lower_cutoff=h.lower_cutoff_voltage,
                             cc_charge_current=h.cc_charge_current)
        assert back == h

    def test_json_round_trip_is_bit_identical(self, small_cells, tmp_path):
        h = small_cells[1]
        text = history_to_json(h)
        back = history_from_json(text)
        assert back == h
        assert history_to_json(back) == text
        save_history(h, tmp_path / "h.json")
        assert load_history(tmp_path / "h.json") == h
        assert ingest_cycles(tmp_path / "h.json", format="cellhistory-json") == h
        assert json.loads(text)["schema_version"].startswith("bathealth.cellhistory/")


class TestSegmentation:
    def test_constant_cc(self):
        s = constant_series(1.5, 100, dt=10)
        assert segment_phases(s, 1.5, 4.2) == [PhaseSegment(Phase.CC_CHARGE, 0, len(s) - 1)]

    def test_all_rest(self):
        s = constant_series(0.0, 100, dt=10)
        assert segment_phases(s, 1.5, 4.2) == [PhaseSegment(Phase.REST, 0, len(s) - 1)]

    def test_cc_then_cv_hand_labeled(self):
        # CC at 1.5 A rising to 4.2 V, then CV with decaying current
        t = np.arange(12.0)
        i = np.array([1.5, 1.5, 1.5, 1.5, 1.5, 1.49, 1.2, 0.9, 0.6, 0.4, 0.2, 0.1])
        v = np.array([3.9, 4.0, 4.1, 4.15, 4.19, 4.2, 4.2, 4.2, 4.2, 4.2, 4.2, 4.2])
        s = SampleSeries(t, i, v, np.full(12, 25.0))
        expected = [PhaseSegment(Phase.CC_CHARGE, 0, 5), PhaseSegment(Phase.CV_CHARGE, 6, 11)]
        assert segment_phases(s, 1.5, 4.2) == expected
        # the boundary is the first sample outside the +-2% band
        assert abs(i[6] - 1.5) > 0.03 >= abs(i[5] - 1.5)

    def test_discharge_and_other(self):
        t = np.arange(6.0)
        i = np.array([0.0, 0.0, -2.0, -2.0, 0.7, 0.7])
        s = SampleSeries(t, i, np.full(6, 3.7), np.full(6, 25.0))
        kinds = [(p.kind, p.start_index, p.end_index) for p in segment_phases(s, 1.5, 4.2)]
        assert kinds == [(Phase.REST, 0, 1), (Phase.CC_DISCHARGE, 2, 3), (Phase.OTHER, 4, 5)]

    def test_bad_inputs(self):
        s = constant_series(1.0, 10)
        with pytest.raises(ArgumentError):
            segment_phases(s, 0.0, 4.2)
        with pytest.raises(ArgumentError):
            segment_phases(s, 1.5, 4.2, current_tol=0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.sampled_from([0.0, 1.5, -2.0, 0.5, 1.0]), min_size=1, max_size=60),
           st.lists(st.sampled_from([3.7, 4.2, 4.195]), min_size=60, max_size=60))
    def test_segments_cover_every_sample(self, currents, volts):
        n = len(currents)
        s = SampleSeries(np.arange(float(n)), currents, volts[:n], np.full(n, 25.0))
        segs = segment_phases(s, 1.5, 4.2)
        covered = []
        for seg in segs:
            covered.extend(range(seg.start_index, seg.end_index + 1))
        assert covered == list(range(n))
        for a, b in zip(segs, segs[1:]):
            assert a.kind != b.kind


class TestSoc:
    def test_charge_half(self):
        soc = compute_soc_series(constant_series(1.0, 3600), 2.0, 0.0, 0)
        assert soc[-1] == pytest.approx(50.0, abs=1e-12)

    def test_discharge_half(self):
        soc = compute_soc_series(constant_series(-2.0, 1800), 2.0, 100.0, 0)
        assert soc[-1] == pytest.approx(50.0, abs=1e-12)

    def test_zero_current_constant(self):
        soc = compute_soc_series(constant_series(0.0, 100), 2.0, 37.0, 0)
        assert np.all(soc == 37.0)

    def test_unclamped_and_flagged(self):
        soc = compute_soc_series(constant_series(-2.0, 3600), 1.0, 50.0, 0)
        assert soc.min() < 0
        assert soc_out_of_range(soc).any()

    def test_anchor_in_middle(self):
        soc = compute_soc_series(constant_series(1.0, 3600), 2.0, 20.0, 1800)
        assert soc[1800] == pytest.approx(20.0)
        assert soc[0] == pytest.approx(-5.0)

    @pytest.mark.parametrize("kw", [dict(nominal_capacity=0.0), dict(anchor_soc=101.0), dict(anchor_index=99999)])
    def test_errors(self, kw):
        args = dict(nominal_capacity=2.0, anchor_soc=0.0, anchor_index=0)
        args.update(kw)
        with pytest.raises(ArgumentError):
            compute_soc_series(constant_series(1.0, 10), **args)

    def test_monotone_over_phases(self, clean_cell):
        for c in clean_cell.cycles[:3]:
            soc = compute_soc_series(c.series, clean_cell.nominal_capacity)
            for kind, sign in ((Phase.CC_CHARGE, 1), (Phase.CC_DISCHARGE, -1)):
                seg = c.main_segment(kind)
                d = np.diff(soc[seg.start_index : seg.end_index + 1])
                assert np.all(sign * d >= 0)


class TestCoulombCounting:
    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 10.0), st.floats(1.0, 10000.0), st.integers(2, 200))
    def test_constant_discharge_exact(self, current, duration, n):
        t = np.linspace(0.0, duration, n)
        s = SampleSeries(t, np.full(n, -current), np.full(n, 3.7), np.full(n, 25.0))
        assert discharge_capacity_ah(s) == pytest.approx(current * duration / 3600.0, rel=1e-12)

    def test_cumulative_starts_at_zero(self):
        q = cumulative_charge([0, 1, 2], [3600, 3600, 3600])
        assert q.tolist() == [0.0, 1.0, 2.0]


class TestTypes:
    def test_series_invariants(self):
        with pytest.raises(DataError):
            SampleSeries([0, 0], [1, 1], [3, 3], [25, 25])
        with pytest.raises(DataError):
            SampleSeries([0, 1], [1, 1], [3, 0], [25, 25])
        with pytest.raises(DataError):
            SampleSeries([0, 1], [1], [3, 3], [25, 25])

    def test_soh_must_match_capacity(self):
        s = constant_series(-1.0, 10)
        c = Cycle(1, s, (PhaseSegment(Phase.CC_DISCHARGE, 0, len(s) - 1),), 1.0, 90.0)
        with pytest.raises(DataError):
            CellHistory("x", 2.0, 4.2, 2.7, 1.5, (c,))

    def test_cutoff_order(self):
        with pytest.raises(ArgumentError):
            CellHistory("x", 2.0, 2.7, 4.2, 1.5, ())

    def test_arrays_are_read_only(self, clean_cell):
        with pytest.raises(ValueError):
            clean_cell.cycles[0].series.voltage[0] = 1.0
