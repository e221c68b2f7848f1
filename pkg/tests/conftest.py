from __future__ import annotations

import numpy as np
import pytest

from stap.fixtures import generate_fixtures
from stap.model import Frame, SequenceWindow


def make_frame(index: int, pixels: np.ndarray | None = None, size: int = 112, value: int = 0, fps: float = 30.0) -> Frame:
    if pixels is None:
        pixels = np.full((size, size, 3), value, dtype=np.uint8)
    return Frame(index, index * 1000.0 / fps, pixels)


def make_window(window_index: int = 0, n: int = 15, start: int = 0, size: int = 112, value: int = 0) -> SequenceWindow:
    return SequenceWindow(window_index, tuple(make_frame(start + i, size=size, value=value) for i in range(n)))


@pytest.fixture(scope="session")
def fixtures_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures")
    generate_fixtures(out, seed=0)
    return out
