import time

import pytest

from oodpac.experiments import ExperimentConfig, TrainingCache, figure1

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def desk_figure1(tmp_path_factory):
    """Desk-scale benchmark curves for the far and the overlapping OOD gap.

    Both gaps reuse the same trained networks, so the pair costs one round
    of training.  Returns ``({gap: Figure1Result}, out_dir, seconds)``.
    """
    out = tmp_path_factory.mktemp("figure1")
    cache = TrainingCache()
    t0 = time.perf_counter()
    results = {g: figure1(ExperimentConfig(gap_io=g, out_dir=str(out)), cache) for g in (100.0, -2.0)}
    return results, out, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
