import numpy as np
import pytest

from psodr.preprocess import SynthConfig, synth_subject

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, text = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _criteria[number] = (text, rep.outcome, round(rep.duration, 2))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        text, outcome, duration = _criteria[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {text} ({duration}s)")


@pytest.fixture
def small_cfg():
    return SynthConfig(n_channels=8, n_super_epochs=40, sample_rate=100, sub_epoch_seconds=1.0,
                       informative_channels=(1, 5), informative_bins=(6, 11, 20), effect_size=3.0)


@pytest.fixture
def small_record(small_cfg):
    return synth_subject(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
