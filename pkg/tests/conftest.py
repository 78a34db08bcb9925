import numpy as np
import pytest

from csfq.circuit import paper_device

GHZ = 2 * np.pi * 1e9


@pytest.fixture(scope="session")
def device():
    return paper_device()
