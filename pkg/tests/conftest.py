import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xraymix.geometry import BoundingBox, ImageExtent
from xraymix.imageops import Annotation, PixelImage
from xraymix.pipeline import derive_stream
from xraymix.synthetic import make_corpus


@pytest.fixture
def stream():
    return derive_stream(1234, "fixture", 0)


@pytest.fixture
def photo():
    """Textured 96x64 image standing in for a natural photo."""
    rng = np.random.default_rng(5)
    yy, xx = np.mgrid[0:64, 0:96]
    base = np.stack([120 + 80 * np.sin(xx / 7.0), 100 + 60 * np.cos(yy / 5.0), 90 + 0.8 * xx], axis=-1)
    base += rng.normal(0, 12, size=base.shape)
    return PixelImage(np.clip(np.floor(base + 0.5), 0, 255).astype(np.uint8))


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus(12, 96, 80, seed=3)


def random_image(rng, w, h):
    return PixelImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def ann(x, y, w, h, cls=1):
    return Annotation(BoundingBox(x, y, w, h), cls)


# Acceptance criteria report: one PASS/FAIL line per criterion at the end of the run.

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = marker.args
        detail = getattr(item, "acceptance_detail", "")
        _ACCEPTANCE.append((number, title, report.passed, detail, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail, duration in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {number:>2}. {title} ({duration:.1f}s)"
        if detail:
            line += f" :: {detail}"
        terminalreporter.write_line(line)
