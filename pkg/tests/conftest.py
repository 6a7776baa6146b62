from pathlib import Path

import pytest

from xai_idps import synth
from xai_idps.data_ingest import load_unsw

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def small_unsw():
    return load_unsw(DATA / "unsw_small.csv")


@pytest.fixture(scope="session")
def desk_unsw_path(tmp_path_factory) -> Path:
    """28k-row synthetic UNSW-NB15-layout file (about 20k train / 8k test at a 0.3 split)."""
    path = tmp_path_factory.mktemp("desk") / "unsw_desk.csv"
    synth.write_unsw(path, n_rows=28000, seed=7)
    return path


@pytest.fixture(scope="session")
def desk_unsw(desk_unsw_path):
    return load_unsw(desk_unsw_path)


ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def verdicts():
    """Collector for acceptance verdicts, echoed in the terminal summary."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
