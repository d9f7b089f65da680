import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_CRITERIA = {}
_DETAILS = {}


@pytest.fixture
def detail(request):
    """Attach a short measurement to the criterion line in the summary."""
    mark = request.node.get_closest_marker("criterion")

    def put(text):
        _DETAILS.setdefault(mark.args[0], []).append(text)

    return put


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    ok, _ = _CRITERIA.get(number, (True, title))
    if rep.failed or (rep.when == "call" and rep.skipped):
        ok = False
    _CRITERIA[number] = (ok, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, title = _CRITERIA[number]
        extra = "; ".join(_DETAILS.get(number, []))
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{extra}]" if extra else line)
