import pytest

from geoexplore.graph import fixture_dataset_dir, load_dataset


@pytest.fixture(scope="session")
def fixture_dir():
    return fixture_dataset_dir()


@pytest.fixture(scope="session")
def fixture_graphs():
    return load_dataset(fixture_dataset_dir())



# --- acceptance summary --------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    num, title = mark.args
    if call.excinfo is None:
        _CRITERIA[num] = ("PASS", title, "")
    else:
        msg = call.excinfo.exconly().splitlines()[0]
        _CRITERIA[num] = ("FAIL", title, msg[:160])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, title, msg = _CRITERIA[num]
        line = f"{status} criterion {num:>2}: {title}"
        terminalreporter.write_line(line + (f" -- {msg}" if msg else ""))
