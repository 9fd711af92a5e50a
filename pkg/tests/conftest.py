import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import fixturegen  # noqa: E402


@pytest.fixture(scope="session")
def keys():
    return fixturegen.all_keys()


@pytest.fixture(scope="session")
def fixture_apks():
    return {spec.name: (fixturegen.APKS / f"{spec.name}.apk").read_bytes() for spec in fixturegen.FIXTURE_SPECS}
