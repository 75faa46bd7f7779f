import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import random_rotation  # noqa: E402

from aegis.geometry import Ellipsoid  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_ellipsoid(rng, center_scale=0.5, axis_lo=0.03, axis_hi=0.15) -> Ellipsoid:
    return Ellipsoid(
        rng.normal(size=3) * center_scale,
        rng.uniform(axis_lo, axis_hi, 3),
        random_rotation(rng),
    )
