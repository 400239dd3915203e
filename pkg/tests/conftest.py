import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from biokey.steward import BackgroundSteward, StewardEndpoint  # noqa: E402


class Cluster:
    def __init__(self, root: Path, count: int, token: str | None = None):
        self.nodes = [BackgroundSteward(root / f"s{i}", token=token).start() for i in range(count)]
        self.token = token

    @property
    def endpoints(self) -> list[StewardEndpoint]:
        return [StewardEndpoint(f"steward-{i + 1}", n.url, self.token) for i, n in enumerate(self.nodes)]

    def config(self, n: int, k: int) -> dict:
        return {"stewards": [{"name": e.name, "url": e.url} for e in self.endpoints], "n": n, "k": k}

    def stop(self, *indices: int) -> None:
        for i in indices:
            self.nodes[i].stop()

    def close(self) -> None:
        for node in self.nodes:
            node.stop()


@pytest.fixture
def cluster(tmp_path):
    made = []

    def make(count=6, token=None):
        c = Cluster(tmp_path, count, token)
        made.append(c)
        return c

    yield make
    for c in made:
        c.close()


# one line per exit criterion, printed after the run
_criteria: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, [title, True, ""])
    if rep.failed:
        entry[1] = False
        entry[2] = entry[2] or rep.longreprtext.strip().splitlines()[-1][:120]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, why = _criteria[number]
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({why})" if why else ""))
