import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from idcm.config import CascadeConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Small dimensions for fast tests; window geometry at paper defaults."""
    return CascadeConfig(
        d_emb=8,
        d_out=8,
        k=4,
        l=3,
        kernel_mus=(1.0, 0.5, 0.0, -0.5),
        kernel_sigmas=(1e-3, 0.2, 0.2, 0.2),
    ).validate()
