import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)


@pytest.fixture
def gradient_stack(tmp_path):
    """A 4-slice 8-bit stack of 8x6 gradients; returns (dir, arrays)."""
    from helpers import make_stack

    arrays = []
    for k in range(4):
        row = np.arange(8, dtype=np.uint8)[None, :]
        arr = np.tile(row * 30 + k, (6, 1)).astype(np.uint8)
        arrays.append(arr)
    d = tmp_path / "stack8"
    d.mkdir()
    make_stack(d, arrays, bit_depth=8)
    return d, arrays
