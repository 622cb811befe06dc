import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from calibnet.calibration import build_calibration  # noqa: E402
from calibnet.fixtures import FLAT_FIXTURES  # noqa: E402


@functools.lru_cache(maxsize=None)
def flat_fixture(name):
    return FLAT_FIXTURES[name]()


@functools.lru_cache(maxsize=None)
def field_for(name):
    return build_calibration(flat_fixture(name))


@pytest.fixture(params=sorted(FLAT_FIXTURES))
def fixture_name(request):
    return request.param
