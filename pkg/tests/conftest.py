import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(pytestconfig, capsys):
    """Record one PASS/FAIL line per acceptance criterion and echo it live."""
    lines = pytestconfig.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
