import pytest

from decoy_timing.config import load_config
from decoy_timing.delays import analyze_session
from decoy_timing.simulate import simulate_pass

OCT31_DELAYS = {"H_s": 0, "V_s": -10, "D_s": 29, "A_s": 139, "H_d": 246, "V_d": 302, "D_d": 223, "A_d": 176}


@pytest.fixture(scope="session")
def oct31_config():
    return load_config("oct31")


@pytest.fixture(scope="session")
def oct31_sim(oct31_config):
    cfg = oct31_config
    return simulate_pass(cfg.emission, cfg.channel, cfg.n_slots, cfg.seed)


@pytest.fixture(scope="session")
def oct31_analysis(oct31_config, oct31_sim):
    return analyze_session(oct31_sim.events, oct31_sim.announcements, oct31_config.emission.period)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
