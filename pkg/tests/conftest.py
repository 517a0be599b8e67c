"""Session-wide fixtures shared across test modules."""

import pytest

from betaquant.simulate import fixture_design


@pytest.fixture(scope="session")
def fixture_bundle():
    """The 187-region demo dataset with its design matrix and weights."""
    return fixture_design()
