import pytest

from tiltmott.model import Envelope, ModelParams, Protocol

# (criterion, passed, detail) lines collected by the acceptance tests
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def near_critical():
    return ModelParams.near_critical(1.0, 0.05, 2)


@pytest.fixture
def short_protocol():
    """Fast switch-on/tilt/switch-off sequence, strong enough to create pairs."""
    J = Envelope.ramped(1.0, 0.0, 10.0, 25.0, ramp="smooth")
    G = Envelope.ramped(0.4, 10.0, 5.0, 15.0, ramp="smooth")
    return Protocol(J, G, J.t3)
