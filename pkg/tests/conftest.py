import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from support import ACCEPTANCE, ASSOC_CFG, CLEAN_MOTION_CFG, MOTION_CFG  # noqa: E402

from rnntrack.train import train_assoc, train_motion  # noqa: E402


@pytest.fixture(scope="session")
def motion_net():
    """Motion model trained on default noisy, cluttered scenes."""
    return train_motion(MOTION_CFG)[0]


@pytest.fixture(scope="session")
def clean_motion_net():
    """Motion model trained on noise-free constant-velocity scenes."""
    return train_motion(CLEAN_MOTION_CFG)[0]


@pytest.fixture(scope="session")
def unsmoothed_motion_net():
    """Same as ``motion_net`` with the existence smoothness weight at zero."""
    return train_motion(MOTION_CFG.replace(loss_smoothness=0.0))[0]


@pytest.fixture(scope="session")
def assoc_net():
    return train_assoc(ASSOC_CFG)[0]


@pytest.fixture(scope="session")
def motion_ckpt(motion_net, tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "motion.ckpt"
    motion_net.save(path, MOTION_CFG.iterations)
    return path


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
