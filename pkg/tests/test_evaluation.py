import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bathealth.data import CellHistory, Cycle, Phase, PhaseSegment, SampleSeries
from bathealth.errors import (
    ConfigError, DegenerateInputError, EvaluationError, InsufficientDataError, SearchError,
)
from bathealth.evaluation import (
    EngineConfig, EvaluationRecord, ScreeningConfig, box_summary, evaluate_hi, grid_candidates,
    grid_search_interval, pcc, screen, soc_heatmap,
)
from bathealth.kernels import IntervalSpec, Reference
from bathealth.regression import WoaConfig
from bathealth.registry import ExtractionSettings, builtin_registry

FIXTURES = Path(__file__).parent / "fixtures"
RAW = ExtractionSettings(smooth_window=1, curve_smooth_window=1)


def load_fixture_records():
    data = json.loads((FIXTURES / "reference_evaluation.json").read_text())
    return ([EvaluationRecord.from_dict(r) for r in data["records"]],
            [EvaluationRecord.from_dict(r) for r in data["soc_records"]])


def load_fixture_probabilities():
    return json.loads((FIXTURES / "reference_probabilities.json").read_text())


def discharge_cell(cell_id, sohs, voltage_fn, n=721, duration_fn=lambda soh, k: 3600.0):
    """Cells with one CC discharge per cycle; voltage_fn(t, soh, k) gives V(t)."""
    cycles = []
    for k, soh in enumerate(sohs):
        D = duration_fn(soh, k)
        t = np.linspace(0.0, D, n)
        s = SampleSeries(t, np.full(n, -2.0), voltage_fn(t, soh, k), np.full(n, 25.0))
        cap = 2.0 * soh / 100.0
        cycles.append(Cycle(k + 1, s, (PhaseSegment(Phase.CC_DISCHARGE, 0, n - 1),), cap, 100.0 * cap / 2.0))
    return CellHistory(cell_id, 2.0, 4.2, 2.7, 1.5, tuple(cycles))


def direct_pcc(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


class TestPcc:
    def test_examples(self):
        assert pcc([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)
        assert pcc([1, 2, 3], [-1, -2, -3]) == pytest.approx(-1.0, abs=1e-12)
        assert pcc([1, 2, 3, 4], [1, 2, 4, 8]) == pytest.approx(11.5 / math.sqrt(5 * 28.75), abs=1e-12)

    def test_pairwise_nan_drop(self):
        assert pcc([1, np.nan, 2, 3, 4], [2, 5, 4, 6, np.nan]) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(DegenerateInputError):
            pcc([1, 1, 1], [1, 2, 3])
        with pytest.raises(InsufficientDataError):
            pcc([1, 2], [1, 2])
        with pytest.raises(InsufficientDataError):
            pcc([1, 2, np.nan], [1, 2, 3])

    @settings(max_examples=60)
    @given(arrays(float, 12, elements=st.floats(-100, 100)), arrays(float, 12, elements=st.floats(-100, 100)),
           st.floats(0.1, 10) | st.floats(-10, -0.1), st.floats(-100, 100))
    def test_affine_sign_invariance(self, x, y, a, b):
        assume(np.std(x) > 1e-2 and np.std(y) > 1e-2)
        r = pcc(x, y)
        assert -1 <= r <= 1
        assert pcc(a * x + b, y) == pytest.approx(math.copysign(1, a) * r, abs=1e-12)
        assert r == pytest.approx(direct_pcc(list(x), list(y)), abs=1e-12)


class TestEvaluateHi:
    def test_affine_hi_gives_unit_pcc(self, reg):
        sohs = np.linspace(100, 80, 20)
        h = discharge_cell("A", sohs, lambda t, s, k: 4.1 - 1.1 * t / t[-1], duration_fn=lambda s, k: 36.0 * s)
        rec = evaluate_hi([h], reg["CCDT"], regression=False)
        assert rec.mean_abs_pcc == pytest.approx(1.0, abs=1e-12)
        assert rec.rmse_elm is None and rec.n_cycles_used == {"A": 20}

    def test_constant_hi_excluded(self, reg):
        sohs = np.linspace(100, 80, 20)
        flat = discharge_cell("flat", sohs, lambda t, s, k: 4.1 - 1.1 * t / t[-1])
        good = discharge_cell("good", sohs, lambda t, s, k: 4.1 - 1.1 * t / t[-1], duration_fn=lambda s, k: 36.0 * s)
        rec = evaluate_hi([flat, good], reg["CCDT"], regression=False)
        assert "flat" in rec.excluded and rec.mean_abs_pcc == pytest.approx(1.0)
        with pytest.raises(EvaluationError):
            evaluate_hi([flat], reg["CCDT"], regression=False)

    def test_mean_matches_independent_sum(self, reg, small_cells):
        rec = evaluate_hi(small_cells, reg["ADC"], regression=False)
        vals = [abs(v) for v in rec.per_cell_pcc.values()]
        assert rec.mean_abs_pcc == pytest.approx(sum(vals) / len(vals), abs=1e-15)

    def test_with_regression(self, reg, small_cells):
        engine = EngineConfig(seeds=(0, 1), woa=WoaConfig(6, 4))
        rec = evaluate_hi(small_cells, reg["CCDT"], engine=engine)
        assert rec.mean_abs_pcc > 0.99
        assert 0 <= rec.rmse_woa_elm and 0 <= rec.rmse_elm
        assert set(rec.per_cell_rmse) == {h.cell_id for h in small_cells}
        back = EvaluationRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
        assert back.to_dict() == rec.to_dict()

    def test_fusion_record(self, reg, clean_cell):
        from bathealth.registry import canonical_fusions

        f = canonical_fusions(reg)["Fusion 1"]
        rec = evaluate_hi([clean_cell], f, engine=EngineConfig(seeds=(0,), woa=WoaConfig(4, 2)), registry=reg)
        assert rec.mean_abs_pcc is None and rec.rmse_woa_elm >= 0


@pytest.fixture(scope="module")
def reg():
    return builtin_registry()


def band_cells():
    """SDV correlates with SOH only for voltages in [3.6, 3.9] V."""
    cells = []
    for c in range(2):
        rng = np.random.default_rng(40 + c)
        sohs = np.linspace(100, 80, 25)
        d_hi = rng.uniform(300, 900, len(sohs))
        d_lo = rng.uniform(300, 900, len(sohs))

        def knots(soh, k, d_hi=d_hi, d_lo=d_lo):
            return np.cumsum([0.0, d_hi[k], 1800.0 * soh / 100.0, d_lo[k]])

        def v(t, soh, k):
            return np.interp(t, knots(soh, k), [4.1, 3.9, 3.6, 3.0])

        cells.append(discharge_cell(f"B{c}", sohs, v, n=2001, duration_fn=lambda soh, k: knots(soh, k)[-1]))
    return cells


class TestGridSearch:
    def test_candidate_count(self):
        grid, cands = grid_candidates(IntervalSpec(Reference.VOLTAGE_V, 3.0, 4.0), 10)
        assert len(grid) == 10 and len(cands) == 45
        assert all(c.lower < c.upper for c in cands)

    def test_returns_argmax(self, reg, small_cells):
        res = grid_search_interval(small_cells, reg["TEVD"], IntervalSpec(Reference.VOLTAGE_V, 3.3, 4.1), 10)
        assert len(res.candidates) == 45 and not res.refined
        scores = [s for _, s in res.candidates if s is not None]
        assert res.best_score == max(scores)
        assert dict(res.candidates)[res.best] == res.best_score

    def test_refinement_adds_candidates(self, reg, small_cells):
        res = grid_search_interval(small_cells, reg["SDT"], IntervalSpec(Reference.TEMPERATURE_C, 20, 40), 5,
                                   refine=True, refine_below=1.01)
        assert res.refined and len(res.candidates) == 20
        assert res.best_score == max(s for _, s in res.candidates if s is not None)

    def test_informative_band(self, reg):
        cells = band_cells()
        bounds = IntervalSpec(Reference.VOLTAGE_V, 3.0, 4.1)
        res = grid_search_interval(cells, reg["SDV"], bounds, 10, settings=RAW)
        assert 3.55 <= res.best.lower < res.best.upper <= 3.95
        fine = grid_search_interval(cells, reg["SDV"], bounds, 23, settings=RAW)
        assert 3.55 <= fine.best.lower < fine.best.upper <= 3.95
        assert fine.best_score >= res.best_score - 1e-9

    def test_single_defined_candidate(self, reg):
        sohs = np.linspace(100, 80, 10)
        # curves end at 3.0 V, so of the grid 2.9/3.2/3.5 only [3.2, 3.5] is covered
        cell = discharge_cell("S", sohs, lambda t, s, k: 4.1 - 1.1 * t / t[-1], duration_fn=lambda s, k: 36.0 * s)
        res = grid_search_interval([cell], reg["TEVD"], IntervalSpec(Reference.VOLTAGE_V, 2.9, 3.5), 3,
                                   settings=RAW)
        defined = [iv for iv, s in res.candidates if s is not None]
        assert len(defined) == 1 and res.best == defined[0]
        assert (res.best.lower, res.best.upper) == pytest.approx((3.2, 3.5))

    def test_errors(self, reg, small_cells):
        with pytest.raises(SearchError):
            grid_search_interval(small_cells, reg["CCDT"], IntervalSpec(Reference.TIME_S, 0, 10), 5)
        with pytest.raises(SearchError):
            grid_search_interval(small_cells, reg["TEVD"], IntervalSpec(Reference.VOLTAGE_V, 3.3, 4.1), 2)
        with pytest.raises(SearchError):
            grid_search_interval(small_cells, reg["TEVD"], IntervalSpec(Reference.VOLTAGE_V, 5.0, 6.0), 3)


def soc_cells(voltage_of_soc):
    sohs = np.linspace(100, 80, 12)
    # -2 A on 2 Ah over 3600 s takes SOC from 100 to 0
    return [discharge_cell("H", sohs, lambda t, s, k: voltage_of_soc(100.0 - t / 36.0, s), n=3601)]


class TestHeatmap:
    def test_affine_and_count(self, reg):
        cells = soc_cells(lambda soc, soh: 3.0 + (0.5 + 0.01 * soh) * soc / 100.0)
        hm = soc_heatmap(cells, reg["VDE_SOC"], 5.0, settings=RAW)
        assert len(hm.values) == 210
        assert not hm.missing()
        for v in hm.values.values():
            assert v == pytest.approx(1.0, abs=1e-12)

    def test_dead_band(self, reg):
        def v(soc, soh):
            slope = (0.5 + 0.01 * soh) / 100.0
            clipped = np.where(soc > 70, soc - 10, np.where(soc > 60, 60, soc))
            return 3.0 + slope * clipped

        hm = soc_heatmap(soc_cells(v), reg["VDE_SOC"], 5.0, settings=RAW)
        dead = {(60.0, 65.0), (60.0, 70.0), (65.0, 70.0)}
        assert set(hm.degenerate()) == dead
        assert hm.values[(55.0, 75.0)] == pytest.approx(1.0, abs=1e-9)

    def test_missing_iff_no_cell_covers(self, reg, small_cells):
        hm = soc_heatmap(small_cells, reg["VDE_SOC"], 10.0)
        for key in hm.missing():
            assert hm.values[key] is None
        assert hm.values[(50.0, 90.0)] is not None

    def test_csv(self, reg, tmp_path):
        cells = soc_cells(lambda soc, soh: 3.0 + (0.5 + 0.01 * soh) * soc / 100.0)
        hm = soc_heatmap(cells, reg["VDE_SOC"], 25.0, settings=RAW)
        hm.write_csv(tmp_path / "h.csv")
        rows = (tmp_path / "h.csv").read_text().splitlines()
        assert rows[0] == "start\\end,0,25,50,75,100"
        assert len(rows) == 6 and rows[-1] == "100,,,,,"

    def test_errors(self, reg, small_cells):
        from bathealth.errors import ConversionError

        with pytest.raises(ConversionError):
            soc_heatmap(small_cells, reg["VDET"])
        with pytest.raises(ConfigError):
            soc_heatmap(small_cells, reg["VDE_SOC"], 7.0)


class TestScreening:
    def test_fixture_counts(self, reg):
        records, soc_records = load_fixture_records()
        probs = load_fixture_probabilities()["probabilities"]
        rep = screen(records, reg, probs, soc_records=soc_records)
        assert len(rep.survivors(1)) == 34
        step2 = rep.survivors(2)
        assert len(step2) == 15
        assert sum(reg[h].category.value == "time" for h in step2) == 12
        assert sum(reg[h].category.value == "differential" for h in step2) == 3
        assert set(rep.final) == {"VRE_SOC", "ICP_SOC", "CDE_SOC", "TRE_SOC", "VDE_SOC"}
        assert rep.dropped["DVV"].startswith("step 4")
        assert rep.dropped["CCDT"].startswith("step 2")

    def test_monotone(self, reg):
        records, soc_records = load_fixture_records()
        probs = load_fixture_probabilities()["probabilities"]
        rep = screen(records, reg, probs, soc_records=soc_records)
        for k in range(1, 3):
            assert set(rep.survivors(k + 1)) <= set(rep.survivors(k))
        prev = None
        for th in (0.5, 0.8, 0.9, 0.95, 0.99):
            s = set(screen(records, reg, probs, ScreeningConfig(th), soc_records).survivors(1))
            if prev is not None:
                assert s <= prev
            prev = s

    def test_probability_floor(self, reg):
        records, soc_records = load_fixture_records()
        probs = dict(load_fixture_probabilities()["probabilities"], VDE_SOC=0.01)
        rep = screen(records, reg, probs, soc_records=soc_records)
        assert "VDE_SOC" not in rep.final and "probability" in rep.dropped["VDET"]

    def test_bad_groups(self, reg):
        with pytest.raises(ConfigError):
            ScreeningConfig(redundancy_groups=(("VDET", ("TEVD", "SDV")),))
        records, _ = load_fixture_records()
        with pytest.raises(ConfigError):
            screen(records, reg, {}, ScreeningConfig(redundancy_groups=(("NOPE", ("NOPE",)),)))

    def test_report_dict(self, reg):
        records, soc_records = load_fixture_records()
        rep = screen(records, reg, load_fixture_probabilities()["probabilities"], soc_records=soc_records)
        d = rep.to_dict()
        assert [s["count"] for s in d["steps"]] == [34, 15, 6, 5]


class TestBoxSummary:
    def test_quartiles(self):
        b = box_summary([1, 2, 3, 4, 100])
        assert (b["q1"], b["median"], b["q3"]) == (2.0, 3.0, 4.0)
        assert b["whisker_high"] == 4.0 and b["outliers"] == [100.0]

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            box_summary([])
