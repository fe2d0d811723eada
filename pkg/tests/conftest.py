import pytest

from hbnscreen.config import RunConfig
from hbnscreen.params import default_params


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def small_cfg():
    # 3x3 cell with coarse grids: fast enough for CLI and plumbing tests.
    return RunConfig(supercell=3, scf_grid=3, dense_grid=5)


_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(criterion, ok, detail):
        _ACCEPTANCE.append((criterion, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
