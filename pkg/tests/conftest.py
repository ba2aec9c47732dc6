import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from collegeda.model import Market  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=120, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def markets(draw, max_students=6, max_colleges=3, max_cap=3, min_students=1):
    n_s = draw(st.integers(min_students, max_students))
    n_c = draw(st.integers(1, max_colleges))
    sp = [draw(st.permutations(range(n_c))) for _ in range(n_s)]
    cp = [draw(st.permutations(range(n_s))) for _ in range(n_c)]
    caps = [draw(st.integers(1, max_cap)) for _ in range(n_c)]
    return Market.from_lists(sp, cp, caps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
