import os

from hypothesis import HealthCheck, settings

settings.register_profile("dbarforge", deadline=None, max_examples=int(os.environ.get("HYPOTHESIS_EXAMPLES", 12)),
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dbarforge")

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
