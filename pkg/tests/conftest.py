import json
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from hormander.expr import parse
from hormander.vf import VectorField, WeightedSystem

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLE = json.loads((Path(__file__).parent / "data" / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


def poly_source(rng: random.Random, p: int, degree: int, terms: int = 3) -> str:
    """Random rational polynomial in ``x1..xp`` as parser input."""
    out = []
    for _ in range(rng.randint(0, terms)):
        c = Fraction(rng.randint(-4, 4), rng.randint(1, 3))
        if c == 0:
            continue
        mono = []
        budget = rng.randint(0, degree)
        for _ in range(budget):
            mono.append(f"x{rng.randint(1, p)}")
        out.append("*".join([f"({c})"] + mono))
    return " + ".join(out) if out else "0"


def random_poly_system(seed: int, p: int | None = None, n: int | None = None, degree: int = 3,
                       drift: bool | None = None, r: int = 3) -> WeightedSystem:
    rng = random.Random(seed)
    p = p or rng.randint(1, 4)
    n = n or rng.randint(1, 2)
    if drift is None:
        drift = rng.random() < 0.3

    def field():
        return VectorField(tuple(parse(poly_source(rng, p, degree), p) for _ in range(p)))

    return WeightedSystem(tuple(field() for _ in range(n)), field() if drift else None, r=r)


seeds = st.integers(min_value=0, max_value=2**31 - 1)

_leaf = st.one_of(
    st.integers(1, 3).map(lambda i: f"x{i}"),
    st.fractions(min_value=-3, max_value=3, max_denominator=4).map(lambda q: f"({q})"),
)


def _extend(children):
    return st.one_of(
        st.tuples(children, children).map(lambda t: f"({t[0]} + {t[1]})"),
        st.tuples(children, children).map(lambda t: f"({t[0]})*({t[1]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: f"{t[0]}({t[1]})"),
    )


smooth_sources = st.recursive(_leaf, _extend, max_leaves=6)
"""Random smooth expressions in ``x1..x3`` (no exp, to keep values moderate)."""
