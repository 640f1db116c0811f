"""Named example systems."""

from __future__ import annotations

import re
from fractions import Fraction

from .expr import parse
from .vf import VectorField, WeightedSystem

NAMES = ("abelian(p)", "heisenberg", "grushin", "kolmogorov", "perturbed-heisenberg", "perturbed-heisenberg(alpha)")


def _field(*coeffs: str) -> VectorField:
    return VectorField(tuple(parse(c) for c in coeffs))


def _box(p: int, half: float = 2.0):
    return ((-half,) * p, (half,) * p)


def abelian(p: int) -> WeightedSystem:
    if p < 1:
        raise ValueError("p must be positive")
    fields = [_field(*("1" if k == i else "0" for k in range(p))) for i in range(p)]
    return WeightedSystem(tuple(fields), r=2, region=_box(p))


def heisenberg() -> WeightedSystem:
    return WeightedSystem((_field("1", "0", "-x2/2"), _field("0", "1", "x1/2")), r=2, region=_box(3))


def grushin() -> WeightedSystem:
    return WeightedSystem((_field("1", "0"), _field("0", "x1")), r=2, region=_box(2))


def kolmogorov() -> WeightedSystem:
    return WeightedSystem((_field("1", "0"),), drift=_field("0", "x1"), r=3, region=_box(2))


def perturbed_heisenberg(alpha: Fraction | float | None = None) -> WeightedSystem:
    """Heisenberg with a perturbed ``X1``.

    Without ``alpha`` the perturbation is the cubic ``x1^3 d2 + x1^2 x2 d3``.
    With ``alpha`` it is ``|x1|^(1 + alpha) d3``, a field of class ``C^{1, alpha}``.
    """
    if alpha is None:
        X1 = _field("1", "x1^3", "-x2/2 + x1^2*x2")
        return WeightedSystem((X1, _field("0", "1", "x1/2")), r=2, region=_box(3))
    a = Fraction(alpha).limit_denominator(10**6)
    if not 0 < a <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    beta = 1 + a
    text = f"abs(x1)^({beta.numerator}/{beta.denominator})"
    X1 = _field("1", "0", f"-x2/2 + {text}")
    return WeightedSystem((X1, _field("0", "1", "x1/2")), r=2, alpha=a, region=_box(3))


_PATTERN = re.compile(r"^\s*([a-z-]+)\s*(?:\(\s*([0-9.]+)\s*\))?\s*$")


def builtin(name: str) -> WeightedSystem:
    """Look up ``abelian(3)``, ``heisenberg``, ``perturbed-heisenberg(0.5)`` and so on."""
    m = _PATTERN.match(name)
    if not m:
        raise KeyError(f"unknown builtin system {name!r}")
    base, arg = m.group(1), m.group(2)
    if base == "abelian":
        if arg is None or not arg.isdigit():
            raise KeyError("abelian needs an integer dimension, e.g. abelian(3)")
        return abelian(int(arg))
    if base == "perturbed-heisenberg":
        return perturbed_heisenberg(None if arg is None else Fraction(arg))
    table = {"heisenberg": heisenberg, "grushin": grushin, "kolmogorov": kolmogorov}
    if base in table and arg is None:
        return table[base]()
    raise KeyError(f"unknown builtin system {name!r}")
