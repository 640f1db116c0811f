"""Weighted vector fields, nested brackets and the freeness test.

Multiindices are plain tuples over ``{0, 1, ..., n}``; index ``0`` is the
drift field (weight 2), the others have weight 1.  Enumeration order is by
weight first, then lexicographic with the drift letter sorted last, so that
for example ``(1, 0)`` precedes ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import qr

from . import assoc
from ._linalg import exact_nullspace, exact_rank, numeric_nullspace, numeric_rank
from .expr import (
    Expr,
    ZERO,
    as_expr,
    differentiate,
    evaluate,
    is_polynomial,
    lambdify,
    simplify,
    substitute,
    to_string,
)

FREENESS_ATOL = 1e-8


class HormanderError(ValueError):
    """The bracket-generating condition fails at the requested point."""


class WeightError(ValueError):
    """A bracket weight exceeds the smoothness bound ``r`` of the system."""


def weight(I: Sequence[int]) -> int:
    return sum(2 if i == 0 else 1 for i in I)


def length(I: Sequence[int]) -> int:
    return len(I)


def _order_key(I, n):
    return (weight(I), tuple(n + 1 if i == 0 else i for i in I))


def multiindices(n: int, with_x0: bool, max_weight: int, min_weight: int = 1) -> list[tuple[int, ...]]:
    """All multiindices with ``min_weight <= |I| <= max_weight`` in canonical order."""
    letters = list(range(1, n + 1)) + ([0] if with_x0 else [])
    out = []
    for k in range(1, max_weight + 1):
        for I in product(letters, repeat=k):
            w = weight(I)
            if min_weight <= w <= max_weight:
                out.append(I)
    out.sort(key=lambda I: _order_key(I, n))
    return out


@dataclass(frozen=True)
class VectorField:
    """``sum_k coeffs[k] * d/dx_k``, with an assigned weight (1 or 2)."""

    coeffs: tuple[Expr, ...]
    weight: int = 1

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(simplify(as_expr(c)) for c in self.coeffs))

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def apply(self, f: Expr) -> Expr:
        """The derivative ``X f`` as a simplified expression."""
        out = ZERO
        for k, c in enumerate(self.coeffs):
            if c == ZERO:
                continue
            out = out + c * differentiate(f, k)
        return simplify(out)

    def is_zero(self) -> bool:
        return all(c == ZERO for c in self.coeffs)

    def evaluate(self, x):
        return [evaluate(c, x) for c in self.coeffs]

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_dims(self, other)
        return VectorField(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.weight)

    def scaled(self, s) -> "VectorField":
        s = as_expr(s)
        return VectorField(tuple(s * c for c in self.coeffs), self.weight)

    def to_strings(self, nx: int | None = None) -> list[str]:
        return [to_string(c, nx) for c in self.coeffs]

    def substitute(self, mapping) -> "VectorField":
        return VectorField(tuple(substitute(c, mapping) for c in self.coeffs), self.weight)


def _check_dims(X: VectorField, Y: VectorField):
    if X.dim != Y.dim:
        raise ValueError(f"dimension mismatch: {X.dim} vs {Y.dim}")


def bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Lie bracket ``XY - YX``; its weight is the sum of the weights."""
    _check_dims(X, Y)
    coeffs = []
    for k in range(X.dim):
        ck = ZERO
        for j in range(X.dim):
            if X.coeffs[j] != ZERO:
                ck = ck + X.coeffs[j] * differentiate(Y.coeffs[k], j)
            if Y.coeffs[j] != ZERO:
                ck = ck - Y.coeffs[j] * differentiate(X.coeffs[k], j)
        coeffs.append(simplify(ck))
    return VectorField(tuple(coeffs), X.weight + Y.weight)


@dataclass(frozen=True)
class WeightedSystem:
    """Fields ``X_1..X_n`` (weight 1) and an optional drift ``X_0`` (weight 2).

    ``nx`` is the number of original coordinates; coordinates beyond it are
    lifted variables printed ``t1, t2, ...``.
    """

    fields: tuple[VectorField, ...]
    drift: VectorField | None = None
    r: int = 2
    alpha: Fraction = Fraction(1)
    region: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    nx: int | None = None
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        fields = tuple(VectorField(f.coeffs, 1) for f in self.fields)
        object.__setattr__(self, "fields", fields)
        if self.drift is not None:
            object.__setattr__(self, "drift", VectorField(self.drift.coeffs, 2))
        if not fields:
            raise ValueError("at least one weight-1 field is required")
        dims = {f.dim for f in self.all_fields()}
        if len(dims) != 1:
            raise ValueError("all fields must share the ambient dimension")
        if self.r < 2:
            raise ValueError("r must be >= 2")
        alpha = Fraction(self.alpha)
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        object.__setattr__(self, "alpha", alpha)
        if self.nx is None:
            object.__setattr__(self, "nx", self.p)
        if self.region is None:
            object.__setattr__(self, "region", ((-1.0,) * self.p, (1.0,) * self.p))

    @property
    def p(self) -> int:
        return self.fields[0].dim

    @property
    def n(self) -> int:
        return len(self.fields)

    @property
    def with_x0(self) -> bool:
        return self.drift is not None

    def all_fields(self) -> list[VectorField]:
        return list(self.fields) + ([self.drift] if self.drift is not None else [])

    def field(self, i: int) -> VectorField:
        if i == 0:
            if self.drift is None:
                raise KeyError("system has no drift field X0")
            return self.drift
        return self.fields[i - 1]

    def indices(self, max_weight: int | None = None) -> list[tuple[int, ...]]:
        return multiindices(self.n, self.with_x0, self.r if max_weight is None else max_weight)

    def is_polynomial(self) -> bool:
        return all(is_polynomial(c) for f in self.all_fields() for c in f.coeffs)

    def with_fields(self, fields, drift=None, **kw) -> "WeightedSystem":
        params = dict(r=self.r, alpha=self.alpha, region=self.region, nx=self.nx)
        params.update(kw)
        return WeightedSystem(tuple(fields), drift, **params)

    def to_json(self) -> dict:
        out = {
            "p": self.p,
            "n": self.n,
            "r": self.r,
            "alpha": float(self.alpha),
            "x0_present": self.with_x0,
            "fields": [f.to_strings(self.nx) for f in self.fields],
            "region": {"min": list(self.region[0]), "max": list(self.region[1])},
        }
        if self.drift is not None:
            out["drift"] = self.drift.to_strings(self.nx)
        if self.nx != self.p:
            out["nx"] = self.nx
        return out


def nested_bracket(sys: WeightedSystem, I: Sequence[int]) -> VectorField:
    """Right-nested bracket ``[X_{i1}, [X_{i2}, ... X_{ik}]]``."""
    I = tuple(I)
    if not I:
        raise ValueError("empty multiindex")
    if weight(I) > sys.r:
        raise WeightError(f"weight {weight(I)} of {I} exceeds r = {sys.r}")
    cache = sys._cache.setdefault("brackets", {})
    if I in cache:
        return cache[I]
    if len(I) == 1:
        out = sys.field(I[0])
    else:
        out = bracket(sys.field(I[0]), nested_bracket(sys, I[1:]))
    cache[I] = out
    return out


def apply_word(sys: WeightedSystem, word: Sequence[int], f: Expr) -> Expr:
    """``X_{i1} X_{i2} ... X_{ik} f`` (the rightmost letter acts first)."""
    out = as_expr(f)
    for i in reversed(tuple(word)):
        out = sys.field(i).apply(out)
    return out


def a_matrix(s: int, n: int, with_x0: bool) -> dict[tuple[int, ...], dict[tuple[int, ...], int]]:
    """Word expansion of every right-nested bracket of weight ``<= s``.

    ``X_[I] = sum_J A[I][J] X_J``; only words of the same weight and length
    as ``I`` occur.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    return {I: assoc.right_nested(I) for I in multiindices(n, with_x0, s)}


def a_rank(s: int, n: int, with_x0: bool) -> int:
    """``rank [A_IJ]`` over ``|I|, |J| <= s``; the free nilpotent dimension."""
    A = a_matrix(s, n, with_x0)
    words = sorted({w for row in A.values() for w in row})
    col = {w: k for k, w in enumerate(words)}
    rows = []
    for row in A.values():
        vec = [Fraction(0)] * len(words)
        for w, c in row.items():
            vec[col[w]] = Fraction(c)
        rows.append(vec)
    return exact_rank(rows)


def _exact_point(x) -> list[Fraction] | None:
    try:
        return [Fraction(v) for v in x]
    except (TypeError, ValueError):
        return None


def evaluation_matrix(sys: WeightedSystem, Is, x, exact: bool):
    """Columns ``(X_[I])_x``; Fractions if ``exact`` else a float array."""
    cols = []
    for I in Is:
        F = nested_bracket(sys, I)
        vals = F.evaluate(x)
        cols.append(vals)
    if exact:
        return [[Fraction(cols[j][i]) for j in range(len(Is))] for i in range(sys.p)]
    return np.array([[float(v) for v in c] for c in cols], dtype=float).T.reshape(sys.p, len(Is))


def _use_exact(sys: WeightedSystem, x) -> bool:
    return sys.is_polynomial() and _exact_point(x) is not None


def span_rank(sys: WeightedSystem, x, max_weight: int | None = None) -> int:
    """``dim span {(X_[I])_x : |I| <= max_weight}``."""
    Is = sys.indices(max_weight)
    exact = _use_exact(sys, x)
    xx = _exact_point(x) if exact else [float(v) for v in x]
    M = evaluation_matrix(sys, Is, xx, exact)
    return exact_rank(M) if exact else numeric_rank(M)


def hormander_constant(sys: WeightedSystem, x) -> float:
    """``max |det((X_[I1])_x, ..., (X_[Ip])_x)|`` over ``|Ik| <= r``.

    Computed as the largest determinant over greedy-independent column sets,
    a lower bound of the true maximum that is exact for small systems.
    """
    Is = [I for I in sys.indices() if not nested_bracket(sys, I).is_zero()]
    M = evaluation_matrix(sys, Is, [float(v) for v in x], exact=False)
    p = sys.p
    if len(Is) < p:
        return 0.0
    best = 0.0
    if len(Is) <= 14:
        for cols in combinations(range(len(Is)), p):
            best = max(best, abs(np.linalg.det(M[:, cols])))
        return float(best)
    # greedy column pivoting on the scaled matrix
    _, _, piv = qr(M, pivoting=True, mode="economic")
    return float(abs(np.linalg.det(M[:, piv[:p]])))


@dataclass(frozen=True)
class FreenessVerdict:
    free: bool
    weight: int
    kernel_dim: int
    rank: int
    certificate: dict[tuple[int, ...], object] | None = None
    exact: bool = False

    def __bool__(self):
        return self.free


def _a_rows(Is, s, n, with_x0):
    A = a_matrix(s, n, with_x0)
    words = sorted({w for I in Is for w in A[I]}, key=lambda w: (assoc.word_weight(w), w))
    col = {w: k for k, w in enumerate(words)}
    rows = []
    for I in Is:
        vec = [0] * len(words)
        for w, c in A[I].items():
            vec[col[w]] = c
        rows.append(vec)
    return rows, words


def freeness_check(sys: WeightedSystem, x0, s: int, check_hormander: bool = True) -> FreenessVerdict:
    """Test whether the fields are free up to weight ``s`` at ``x0``.

    Every linear relation ``sum a_I (X_[I])_{x0} = 0`` (``|I| <= s``) must be a
    universal one, ``sum a_I A_IJ = 0`` for all words ``J``.  On failure a
    violating ``a`` is returned as certificate, scaled to unit max-norm.
    """
    if s < 1 or s > sys.r:
        raise ValueError(f"s must lie in [1, r={sys.r}]")
    if check_hormander and span_rank(sys, x0) < sys.p:
        raise HormanderError(f"brackets of weight <= {sys.r} do not span R^{sys.p} at {list(x0)}")
    Is = sys.indices(s)
    exact = _use_exact(sys, x0)
    arows, words = _a_rows(Is, s, sys.n, sys.with_x0)
    if exact:
        M = evaluation_matrix(sys, Is, _exact_point(x0), True)
        kernel = exact_nullspace(M, len(Is))
        rank = len(Is) - len(kernel)
        best, best_norm = None, Fraction(0)
        for a in kernel:
            v = [sum(a[i] * arows[i][k] for i in range(len(Is))) for k in range(len(words))]
            norm = max((abs(c) for c in v), default=Fraction(0))
            scale = max(abs(c) for c in a)
            if scale and norm / scale > best_norm:
                best, best_norm = a, norm / scale
        if best is None:
            return FreenessVerdict(True, s, len(kernel), rank, None, True)
        m = max(abs(c) for c in best)
        sign = 1 if next(c for c in best if c) > 0 else -1
        cert = {I: sign * c / m for I, c in zip(Is, best) if c}
        return FreenessVerdict(False, s, len(kernel), rank, cert, True)
    M = evaluation_matrix(sys, Is, [float(v) for v in x0], False)
    K = numeric_nullspace(M)
    A = np.array(arows, dtype=float)
    rank = len(Is) - K.shape[1]
    if K.shape[1] == 0:
        return FreenessVerdict(True, s, 0, rank, None, False)
    V = K.T @ A
    norms = np.max(np.abs(V), axis=1) / np.max(np.abs(K), axis=0)
    k = int(np.argmax(norms))
    if norms[k] <= FREENESS_ATOL:
        return FreenessVerdict(True, s, K.shape[1], rank, None, False)
    a = K[:, k] / np.max(np.abs(K[:, k]))
    nz = np.flatnonzero(np.abs(a) > 1e-14)
    if a[nz[0]] < 0:
        a = -a
    cert = {I: float(c) for I, c in zip(Is, a) if abs(c) > 1e-14}
    return FreenessVerdict(False, s, K.shape[1], rank, cert, False)


def combination_field(sys: WeightedSystem, coeffs: Mapping[tuple[int, ...], object]) -> VectorField:
    """``sum_I a_I X_[I]`` as a simplified vector field."""
    out = None
    for I, a in coeffs.items():
        F = nested_bracket(sys, I).scaled(a)
        out = F if out is None else out + F
    if out is None:
        return VectorField((ZERO,) * sys.p)
    return out


def compile_fields(fields: Sequence[VectorField]):
    """``f(x) -> array (..., p, m)`` stacking the field values column-wise."""
    p = fields[0].dim
    flat = [c for F in fields for c in F.coeffs]
    g = lambdify(flat)
    m = len(fields)

    def f(x):
        out = g(x)
        return np.swapaxes(out.reshape(out.shape[:-1] + (m, p)), -1, -2)

    return f
