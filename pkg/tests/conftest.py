import numpy as np
import pytest

from oranslice.config import NetworkConfig


@pytest.fixture
def tiny_cfg():
    return NetworkConfig(num_rus=1, num_ues_embb=1, num_ues_urllc=1, num_prbs=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import VERDICTS
    if not VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in range(1, 13):
        if number in VERDICTS:
            title, ok, detail = VERDICTS[number]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:2d}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"----  {number:2d}  not run or errored")
