import numpy as np
import pytest

from fmatrack.fmf import BoxMatch
from fmatrack.geometry import BBox


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def disjoint_scene(rng, k, tile=16, tiles=4):
    """``k`` matches whose former boxes share no pixel, nor do their latter boxes.

    Each box sits inside its own tile of a ``tiles x tiles`` grid, so the
    matching field is ``tile * tiles`` pixels on a side.
    """
    cells = rng.permutation(tiles * tiles)
    cells2 = rng.permutation(tiles * tiles)
    out = []
    for n in range(k):
        w, h = rng.uniform(2.0, tile - 1.0, 2)
        boxes = []
        for c in (cells[n], cells2[n]):
            ox, oy = (c % tiles) * tile, (c // tiles) * tile
            boxes.append(BBox(ox + rng.uniform(0, tile - w), oy + rng.uniform(0, tile - h), w, h))
        out.append(BoxMatch(boxes[0], boxes[1], n + 1))
    return out, tile * tiles


ACCEPTANCE = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, detail)``; the outcome comes from the test result."""
    def record(number, title, detail=""):
        ACCEPTANCE[request.node.nodeid] = [number, title, detail, None]
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    entry = ACCEPTANCE.get(item.nodeid)
    if entry is not None and rep.when == "call":
        entry[3] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, detail, ok in sorted(ACCEPTANCE.values(), key=lambda e: e[0]):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}: {detail}")
