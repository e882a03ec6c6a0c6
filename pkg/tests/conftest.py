import random

import pytest
from _support import ACCEPTANCE

from otpbox.teesim import TpmState


@pytest.fixture
def state(tmp_path):
    return TpmState.create(tmp_path / "tpm.state")


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
