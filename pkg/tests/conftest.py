import numpy as np
import pytest

from hyrel import Hkg, HyperFact


@pytest.fixture
def einstein_fact() -> HyperFact:
    return HyperFact(
        "AlbertEinstein", "educated_at", "ETH_Zurich",
        (("academic_degree", "BSc"), ("academic_major", "math_education")),
    )


@pytest.fixture
def small_kg() -> Hkg:
    return Hkg([
        HyperFact("a", "r", "b", (("k", "c"),)),
        HyperFact("b", "s", "c"),
        HyperFact("a", "r", "d", (("k", "b"), ("k2", "c"))),
    ])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
