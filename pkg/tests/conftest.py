import numpy as np
import pytest

from bitmark import INFINITY_2B, parse_green_list
from bitmark.synth import REFERENCE_PROFILE, SynthLogitSource, SynthSourceConfig


@pytest.fixture(scope="session")
def parity():
    return parse_green_list("01,10")


@pytest.fixture(scope="session")
def ref_config():
    return SynthSourceConfig.calibrated(REFERENCE_PROFILE)


@pytest.fixture(scope="session")
def make_ref_source(ref_config):
    def make(seed):
        return SynthLogitSource(SynthSourceConfig(
            ref_config.profile, ref_config.sigma_per_scale, seed))
    return make


@pytest.fixture(scope="session")
def schedule():
    return INFINITY_2B


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
