import pytest

SMALL_CONFIG = """\
# tiny sweep used by the harness and CLI tests
seed = 3
loss = logistic
[model]
classes = 3
dim = 5
sigma = 0.5
[data]
n = 20
k_grid = 2, 4
[feature]
kind = linear
d = 3
p = 2
Lambda = 1.0
R = 1.0
[train]
steps = 10
[mc]
sign_draws = 20
population_draws = 200
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text(SMALL_CONFIG)
    return path


_ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Log one pass/fail line for an acceptance criterion, then return the verdict."""
    def _record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
