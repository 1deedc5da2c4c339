from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rrf_dir():
    return FIXTURES / "rrf"


@pytest.fixture
def pipeline_config():
    return FIXTURES / "pipeline.toml"
