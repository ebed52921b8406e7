# conftest.py
import sys
from pathlib import Path

import pytest
from loguru import logger

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core.config   import Config, SystemParams  # noqa: E402
from core.protocol import QubitEncoding         # noqa: E402

PROGRAMS = ROOT / "programs"


@pytest.fixture(autouse=True)
def _isolated_config(monkeypatch, tmp_path):
    """No stray parameter file from the environment; logs go to a temp dir."""
    monkeypatch.setattr(Config, "PARAMS_PATH", None)
    monkeypatch.setattr(Config, "LOG_FILE", str(tmp_path / "logs" / "endospin.log"))
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def params_no_coupling():
    return SystemParams(j_eff_kelvin=0.0)


@pytest.fixture
def outer():
    return QubitEncoding.OUTER


@pytest.fixture
def inner():
    return QubitEncoding.INNER


@pytest.fixture
def programs_dir():
    return PROGRAMS
