import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bathealth.errors import ArgumentError, FormatError, InsufficientDataError
from bathealth.fleet import (
    AcquisitionRule, DrivingSession, Scenario, SessionCategory, SocRequirement, acquisition_probability,
    combine_scenarios, fusion_breakdown, fusion_probability, ingest_sessions, load_sessions,
    soc_usage_histogram, write_sessions,
)
from bathealth.synth import sessions_from_arrays

C, D = SessionCategory.CHARGING, SessionCategory.DRIVING
FULL = AcquisitionRule.full()
ANY5 = AcquisitionRule.any_subwindow(5)

three = [DrivingSession(20, 60, C), DrivingSession(50, 90, C), DrivingSession(10, 15, C)]

spans = st.tuples(st.integers(0, 100), st.integers(0, 100)).map(sorted)


def fleet_strategy():
    return st.lists(st.tuples(spans, st.sampled_from([C, D])), min_size=1, max_size=40).map(
        lambda rows: [DrivingSession(a, b, c) if c == C else DrivingSession(b, a, c) for (a, b), c in rows]
        + [DrivingSession(0, 1, C), DrivingSession(1, 0, D)]
    )


class TestIngest:
    def test_rows(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("start_soc,end_soc,category\n20,60,30\n80,35,10\n60,20,30\n40,90,50\n30,20,driving\n"
                     "20,30,99\nx,1,10\n")
        sessions, quarantined = load_sessions(p)
        assert [(s.start_soc, s.end_soc, s.category) for s in sessions] == [
            (20, 60, C), (80, 35, D), (40, 90, C), (30, 20, D)]
        assert [q.line for q in quarantined] == [4, 7, 8]
        assert quarantined[0].reason == "charging session loses SOC"

    def test_quarantine_sidecar(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("start_soc,end_soc,category\n60,20,30\n")
        assert ingest_sessions(p, tmp_path / "q.csv") == []
        assert "charging session loses SOC" in (tmp_path / "q.csv").read_text()

    def test_missing_column(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("start_soc,category\n20,30\n")
        with pytest.raises(FormatError):
            load_sessions(p)

    def test_round_trip(self, tmp_path):
        write_sessions(three, tmp_path / "s.csv")
        assert ingest_sessions(tmp_path / "s.csv") == three

    def test_invariants(self):
        with pytest.raises(ArgumentError):
            DrivingSession(60, 20, C)
        with pytest.raises(ArgumentError):
            DrivingSession(20, 60, D)
        with pytest.raises(ArgumentError):
            DrivingSession(-1, 60, C)


class TestHistogram:
    def test_single(self):
        h = soc_usage_histogram([DrivingSession(20, 23, C)])
        assert np.flatnonzero(h.counts[C]).tolist() == [20, 21, 22]
        assert h.counts[D].sum() == 0

    def test_empty_span(self):
        h = soc_usage_histogram([DrivingSession(40, 40, D)])
        assert h.total.sum() == 0

    def test_no_sessions(self):
        with pytest.raises(InsufficientDataError):
            soc_usage_histogram([])

    def test_share_fixture(self):
        rng = np.random.default_rng(8)
        n = 20000
        inside = rng.random(n) < 0.82
        lo = np.where(inside, rng.integers(35, 95, n), rng.choice(np.r_[0:35, 95:100], n))
        sessions = sessions_from_arrays(lo + 1, lo, ["driving"] * n)
        assert soc_usage_histogram(sessions).share(35, 95) == pytest.approx(0.82, abs=0.01)

    @settings(max_examples=40)
    @given(fleet_strategy())
    def test_mass_equals_span(self, sessions):
        h = soc_usage_histogram(sessions)
        assert h.total.sum() == sum(int(np.ceil(s.span[1]) - np.floor(s.span[0])) for s in sessions)


class TestProbability:
    def test_full_interval(self):
        assert acquisition_probability(three, SocRequirement(Scenario.CHARGE, 25, 55, FULL)) == 1 / 3

    def test_any_subwindow(self):
        assert acquisition_probability(three, SocRequirement(Scenario.CHARGE, 25, 55, ANY5)) == 2 / 3

    def test_whole_range(self):
        assert acquisition_probability(three, SocRequirement(Scenario.CHARGE, 0, 100, FULL)) == 0

    def test_scenario_denominator(self):
        sessions = three + [DrivingSession(90, 10, D)]
        assert acquisition_probability(sessions, SocRequirement(Scenario.CHARGE, 25, 55, FULL)) == 1 / 3
        assert acquisition_probability(sessions, SocRequirement(Scenario.DISCHARGE, 25, 55, FULL)) == 1.0

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            acquisition_probability(three, SocRequirement(Scenario.DISCHARGE, 25, 55, FULL))
        with pytest.raises(ArgumentError):
            SocRequirement(Scenario.CHARGE, 30, 30, FULL)
        with pytest.raises(ArgumentError):
            SocRequirement(Scenario.CHARGE, 30, 32, ANY5)
        with pytest.raises(ArgumentError):
            fusion_probability(three, [])

    def test_product_identity(self):
        assert combine_scenarios([0.1108, 0.0859]) == pytest.approx(0.00951772, abs=1e-12)

    def test_fusion_single_scenario_consistency(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 100, 3000)
        b = rng.integers(0, 100, 3000)
        sessions = sessions_from_arrays(np.minimum(a, b), np.maximum(a, b), ["charging"] * 3000)
        full = SocRequirement(Scenario.CHARGE, 20, 31, FULL)
        any5 = SocRequirement(Scenario.CHARGE, 20, 50, ANY5)
        assert fusion_probability(sessions, [full, any5]) == acquisition_probability(sessions, full)
        assert fusion_probability(sessions, [any5]) == acquisition_probability(sessions, any5)

    def test_cross_scenario_breakdown(self):
        sessions = three + [DrivingSession(90, 10, D), DrivingSession(50, 45, D)]
        reqs = [SocRequirement(Scenario.CHARGE, 25, 55, FULL), SocRequirement(Scenario.DISCHARGE, 20, 60, FULL)]
        parts = fusion_breakdown(sessions, reqs)
        assert [(p.numerator, p.denominator) for p in parts] == [(1, 3), (1, 2)]
        assert fusion_probability(sessions, reqs) == pytest.approx(1 / 6)

    @settings(max_examples=40)
    @given(fleet_strategy(), st.integers(0, 40), st.integers(1, 20), st.integers(1, 20))
    def test_monotone_sweeps(self, sessions, lo, width, grow):
        hi = lo + width + 10
        narrow = SocRequirement(Scenario.CHARGE, lo, hi, FULL)
        wide = SocRequirement(Scenario.CHARGE, max(0, lo - grow), min(100, hi + grow), FULL)
        assert acquisition_probability(sessions, wide) <= acquisition_probability(sessions, narrow)
        small = SocRequirement(Scenario.DISCHARGE, lo, hi, AcquisitionRule.any_subwindow(min(width, 5)))
        big = SocRequirement(Scenario.DISCHARGE, lo, hi, AcquisitionRule.any_subwindow(width + 5))
        assert acquisition_probability(sessions, big) <= acquisition_probability(sessions, small)
        both = fusion_probability(sessions, [narrow, SocRequirement(Scenario.CHARGE, lo, hi, ANY5)])
        assert both <= acquisition_probability(sessions, narrow)

    @settings(max_examples=30)
    @given(fleet_strategy(), st.randoms(use_true_random=False))
    def test_order_invariant(self, sessions, rnd):
        req = SocRequirement(Scenario.CHARGE, 20, 50, ANY5)
        shuffled = list(sessions)
        rnd.shuffle(shuffled)
        assert acquisition_probability(sessions, req) == acquisition_probability(shuffled, req)
