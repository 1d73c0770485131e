import pytest

from nmforce import BathSpec

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def default_spec():
    return BathSpec(gamma=0.1, cutoff=10.0, temperature=0.0)


@pytest.fixture(scope="session")
def ideal_spec():
    return BathSpec(gamma=0.0, cutoff=10.0, temperature=0.0)


@pytest.fixture
def acceptance_report():
    """Call with (label, passed, detail); the line is echoed and summarized at the end."""

    def report(label: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
