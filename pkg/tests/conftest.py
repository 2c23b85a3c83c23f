import numpy as np
import pytest

from bathealth.data import CellHistory, Cycle, SampleSeries, segment_phases
from bathealth.synth import FadeModel, NoiseModel, SynthCellParams, gen_cell, gen_dataset


@pytest.fixture(scope="session")
def small_cells():
    """Two short, fast-fading noisy cells."""
    base = SynthCellParams(cycles=30, fade=FadeModel(rate=0.3))
    return gen_dataset(2, base, seed=3)


@pytest.fixture(scope="session")
def clean_cell():
    return gen_cell(SynthCellParams(cycles=20, fade=FadeModel(rate=0.5), noise=NoiseModel.none()))


def make_history(series_list, capacities, nominal=2.0, cc=1.5, upper=4.2, lower=2.7):
    cycles = []
    for k, (s, cap) in enumerate(zip(series_list, capacities), start=1):
        cycles.append(Cycle(k, s, tuple(segment_phases(s, cc, upper)), cap, 100.0 * cap / nominal))
    return CellHistory("T", nominal, upper, lower, cc, tuple(cycles))


def constant_series(current, duration, dt=1.0, voltage=3.7, temperature=25.0):
    t = np.arange(0.0, duration + dt / 2, dt)
    n = len(t)
    return SampleSeries(t, np.full(n, current), np.full(n, voltage), np.full(n, temperature))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
