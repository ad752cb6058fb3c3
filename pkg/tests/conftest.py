import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("phaserx", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("phaserx")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record and print one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def record(number: int, title: str, passed: bool, seconds: float, budget: float, detail: str = ""):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({seconds:.1f}s, budget {budget:g}s)"
        if detail:
            line += f" {detail}"
        lines.append(line)
        with capman.global_and_fixture_disabled():
            print(f"\n{line}", flush=True)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
