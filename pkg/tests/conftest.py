import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pat_ynet.geometry import ImagingGeometry
from pat_ynet.ynet import YNetConfig

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# miniature network: 32x32 images, 640x32 signals; the 20x3 bottleneck
# still maps 40x2 onto 2x2 exactly as at full size
MINI_IMAGE = (32, 32)
MINI_SIGNAL = (640, 32)


def mini_config(**kw) -> YNetConfig:
    kw.setdefault("base_channels", 2)
    return YNetConfig(signal_shape=MINI_SIGNAL, image_shape=MINI_IMAGE, **kw)


@pytest.fixture(scope="session")
def geom():
    return ImagingGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting -----------------------------------------------------------------------

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA.append((status, mark.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
