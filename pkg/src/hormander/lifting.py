"""Lifting a weighted system to one that is free up to its step.

Each step adds one variable ``t`` and a polynomial correction ``u_j d/dt``
to a single field, chosen so that one non-universal linear relation among
the brackets at the base point is broken.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Mapping, Sequence

import numpy as np

from . import assoc
from ._linalg import exact_min_norm_solve
from .expr import ONE, ZERO, Expr, Var, as_expr, evaluate, simplify, to_string
from .vf import (
    VectorField,
    WeightedSystem,
    apply_word,
    freeness_check,
    multiindices,
    span_rank,
)


class LiftingError(RuntimeError):
    """The lifting iteration did not terminate within the dimension bound."""


def _monomials(p: int, degree: int) -> list[tuple[int, ...]]:
    out = [()]
    for d in range(1, degree + 1):
        out.extend(combinations_with_replacement(range(p), d))
    return out


def _shifted_monomial(vars_: tuple[int, ...], x0) -> Expr:
    e = ONE
    for v in vars_:
        c = x0[v]
        e = e * (Var(v) - as_expr(c) if c else Var(v))
    return simplify(e)


def _point(x0, exact: bool):
    return [Fraction(v) for v in x0] if exact else [float(v) for v in x0]


def interpolation_polynomial(
    sys: WeightedSystem,
    targets: Mapping[tuple[int, ...], object],
    x0: Sequence,
    s: int,
    check: bool = True,
) -> Expr:
    """Polynomial ``u`` of degree ``<= s`` with ``(X_I u)(x0) = c_I`` for ``|I| <= s``.

    Words ``I`` are all multiindices of weight ``<= s``; the empty word stands
    for ``u(x0)`` itself.  Unspecified targets are zero.  The minimum-norm
    vector of Taylor coefficients at ``x0`` is returned.

    Raises
    ------
    ValueError
        If the system is not free up to weight ``s`` at ``x0``.
    numpy.linalg.LinAlgError
        If the interpolation conditions are numerically dependent.
    """
    if check and s >= 1 and not freeness_check(sys, x0, s, check_hormander=False):
        raise ValueError(f"system is not free up to weight {s} at {list(x0)}")
    words = [()] + (multiindices(sys.n, sys.with_x0, s) if s >= 1 else [])
    unknown = [w for w in targets if tuple(w) not in set(words)]
    if unknown:
        raise ValueError(f"targets outside weight {s}: {unknown}")
    exact = sys.is_polynomial() and all(isinstance(v, (int, Fraction)) for v in x0)
    exact = exact and all(isinstance(c, (int, Fraction)) for c in targets.values())
    pt = _point(x0, exact)
    monos = [_shifted_monomial(m, pt) for m in _monomials(sys.p, s)]
    rows = [[evaluate(apply_word(sys, w, m), pt) if w else evaluate(m, pt) for m in monos] for w in words]
    rhs = [targets.get(w, 0) for w in words]
    if exact:
        coef = exact_min_norm_solve(rows, [Fraction(v) for v in rhs])
    else:
        M = np.array(rows, dtype=float)
        if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) < M.shape[0]:
            raise np.linalg.LinAlgError("interpolation system is row-rank deficient")
        coef = [Fraction(float(c)) for c in np.linalg.lstsq(M, np.array(rhs, dtype=float), rcond=None)[0]]
    u = ZERO
    for c, m in zip(coef, monos):
        if c:
            u = u + as_expr(c) * m
    return simplify(u)


@dataclass(frozen=True)
class LiftStep:
    """Record of one lifting step."""

    s: int
    certificate: dict
    word: tuple[int, ...]
    field_index: int
    polynomials: tuple[Expr, ...]

    def to_json(self, nx: int) -> dict:
        return {
            "failing_weight": self.s,
            "certificate": [{"I": list(I), "a": _num(a)} for I, a in self.certificate.items()],
            "word": list(self.word),
            "field": self.field_index,
            "u": [to_string(u, nx) for u in self.polynomials],
        }


def _num(a):
    if isinstance(a, Fraction):
        return [a.numerator, a.denominator]
    return float(a)


@dataclass(frozen=True)
class LiftResult:
    system: WeightedSystem
    original: WeightedSystem
    steps: tuple[LiftStep, ...] = field(default_factory=tuple)

    @property
    def m(self) -> int:
        return self.system.p - self.original.p

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "p": self.original.p,
            "lifted_dim": self.system.p,
            "system": self.system.to_json(),
            "steps": [st.to_json(self.system.nx) for st in self.steps],
        }


def first_failing_weight(sys: WeightedSystem, x0) -> tuple[int, object] | None:
    """Smallest ``s <= r`` where freeness fails, with its verdict; None if free at ``r``."""
    for s in range(1, sys.r + 1):
        v = freeness_check(sys, x0, s, check_hormander=False)
        if not v.free:
            return s, v
    return None


def _violating_word(sys: WeightedSystem, certificate: dict, s: int):
    """Word ``J`` with maximal ``|sum_I a_I A_IJ|`` (first in canonical order on ties)."""
    total: dict = {}
    for I, a in certificate.items():
        total = assoc.add(total, assoc.right_nested(I), a)
    order = {J: k for k, J in enumerate(multiindices(sys.n, sys.with_x0, s))}
    best = max(total.items(), key=lambda kv: (abs(kv[1]), -order[kv[0]]))
    return best[0]


def lift_one_step(sys: WeightedSystem, x0) -> tuple[WeightedSystem, LiftStep]:
    """Add one variable ``t`` and a correction ``u_j d/dt`` to a single field ``X_j``."""
    if span_rank(sys, x0) < sys.p:
        from .vf import HormanderError

        raise HormanderError("bracket-generating condition fails at the base point")
    found = first_failing_weight(sys, x0)
    if found is None:
        raise ValueError("system is already free up to weight r")
    s, verdict = found
    J = _violating_word(sys, verdict.certificate, s)
    j, Jp = J[-1], J[:-1]
    deg = s - 1
    one = Fraction(1) if verdict.exact else 1.0
    u = interpolation_polynomial(sys, {Jp: one}, x0, deg, check=False)
    polys = []
    new_fields = []
    for k in range(1, sys.n + 1):
        uk = u if k == j else ZERO
        polys.append(uk)
        new_fields.append(VectorField(sys.field(k).coeffs + (uk,), 1))
    drift = None
    if sys.with_x0:
        u0 = u if j == 0 else ZERO
        polys.insert(0, u0)
        drift = VectorField(sys.drift.coeffs + (u0,), 2)
    lo, hi = sys.region
    lifted = sys.with_fields(new_fields, drift, region=(tuple(lo) + (-1.0,), tuple(hi) + (1.0,)))
    return lifted, LiftStep(s, dict(verdict.certificate), J, j, tuple(polys))


def free_dimension(sys: WeightedSystem) -> int:
    from .liealg import graded_basis

    return graded_basis(sys.n, sys.with_x0, sys.r).dim


def lift(sys: WeightedSystem, x0) -> LiftResult:
    """Iterate single-variable lifts until the system is free up to weight ``r`` and spans."""
    bound = free_dimension(sys)
    cur, x, steps = sys, list(x0), []
    if span_rank(sys, x) < sys.p:
        from .vf import HormanderError

        raise HormanderError("bracket-generating condition fails at the base point")
    while True:
        if first_failing_weight(cur, x) is None and span_rank(cur, x) == cur.p:
            return LiftResult(cur, sys, tuple(steps))
        if cur.p >= bound:
            raise LiftingError(
                f"dimension {cur.p} reached the free nilpotent bound {bound} without freeness; "
                f"steps so far: {[st.word for st in steps]}"
            )
        before = span_rank(cur, x)
        nxt, step = lift_one_step(cur, x)
        x = x + [0]
        if span_rank(nxt, x) != before + 1:
            raise LiftingError(f"span did not grow by one at step {len(steps) + 1}")
        cur = nxt
        steps.append(step)
