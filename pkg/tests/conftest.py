import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dppintensity.kernel import KernelSpec  # noqa: E402
from dppintensity.sampler import Window, build_spectral_model  # noqa: E402


@pytest.fixture(scope="session")
def dpp1():
    return KernelSpec.from_fraction(50.0, 0.25)


@pytest.fixture(scope="session")
def dpp2():
    return KernelSpec.from_fraction(50.0, 0.75)


@pytest.fixture(scope="session")
def model1_n1(dpp1):
    return build_spectral_model(dpp1, Window.square(1))


@pytest.fixture(scope="session")
def model2_n1(dpp2):
    return build_spectral_model(dpp2, Window.square(1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


DRAWS_SEED = 777


@pytest.fixture(scope="session")
def dpp1_draws(model1_n1):
    """2000 independent DPP1 patterns on [-1, 1]^2 (one stream each)."""
    from dppintensity.sampler import sample_dpp
    seq = np.random.SeedSequence(DRAWS_SEED)
    return [sample_dpp(model1_n1, np.random.default_rng(s)) for s in seq.spawn(2000)]


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if any(acceptance_log.RESULTS.values()):
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.summary_lines():
            terminalreporter.write_line(line)
    for title, lines in acceptance_log.REPORTS.items():
        terminalreporter.section(title)
        for line in lines:
            terminalreporter.write_line(line)


_PATTERNS: dict = {}


@pytest.fixture(scope="session")
def pattern_bank():
    """``get(model, n, count)``: the first ``count`` uncontaminated patterns of
    the table configuration for ``(model, n)``, cached for the session."""
    import published_tables
    from dppintensity.harness import simulate_pattern

    def get(model, n, count):
        cfg = published_tables.config(model, n)
        pats = _PATTERNS.setdefault((model, n), [])
        while len(pats) < count:
            pats.append(simulate_pattern(cfg, len(pats)))
        return pats[:count]

    return get


_REPORTS: dict = {}


@pytest.fixture(scope="session")
def table_report(pattern_bank):
    """``get(model, n)``: the 500-replication report of the table configuration."""
    import published_tables
    from dppintensity.harness import run_experiment

    def get(model, n):
        if (model, n) not in _REPORTS:
            cfg = published_tables.config(model, n)
            _REPORTS[(model, n)] = run_experiment(cfg, patterns=pattern_bank(model, n, cfg.reps))
        return _REPORTS[(model, n)]

    return get
