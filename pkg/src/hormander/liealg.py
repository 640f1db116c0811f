"""Free nilpotent Lie algebras of type II and their homogeneous groups.

The group is ``R^p`` with coordinates indexed by a graded basis of brackets.
The product is the truncated Baker-Campbell-Hausdorff series, generated
exactly in the free associative algebra and projected onto the basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix
from sympy.polys.rings import ring

from . import assoc
from ._linalg import exact_rank
from .expr import ZERO, from_polynomial_terms
from .vf import VectorField, WeightedSystem, multiindices, weight


def _frac(v) -> Fraction:
    return Fraction(int(v.numerator), int(v.denominator))


@dataclass(frozen=True)
class GradedBasis:
    """Right-nested brackets spanning the free nilpotent algebra."""

    n: int
    with_x0: bool
    r: int
    elements: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.elements)

    @property
    def weights(self) -> tuple[int, ...]:
        return tuple(weight(I) for I in self.elements)

    @property
    def Q(self) -> int:
        return sum(self.weights)

    def index(self, I) -> int:
        return self.elements.index(tuple(I))


def _rows_for(words_of_weight, exps):
    col = {w: k for k, w in enumerate(words_of_weight)}
    rows = []
    for e in exps:
        vec = [0] * len(words_of_weight)
        for w, c in e.items():
            vec[col[w]] = c
        rows.append(vec)
    return rows


@lru_cache(maxsize=None)
def graded_basis(n: int, with_x0: bool, r: int) -> GradedBasis:
    """Greedy basis: scan brackets in canonical order, keep those that raise the rank."""
    if n < 1 or r < 1:
        raise ValueError("need n >= 1 and r >= 1")
    chosen = []
    for w in range(1, r + 1):
        Is = multiindices(n, with_x0, w, min_weight=w)
        exps = [assoc.right_nested(I) for I in Is]
        words = sorted({word for e in exps for word in e})
        rows = _rows_for(words, exps)
        kept, rank = [], 0
        for I, row in zip(Is, rows):
            trial = kept + [row]
            if exact_rank(trial) > rank:
                kept.append(row)
                rank += 1
                chosen.append(I)
    return GradedBasis(n, with_x0, r, tuple(chosen))


class _PolyMap:
    """A vector of rational polynomials with exact and vectorized evaluation."""

    def __init__(self, polys: Sequence[dict], nvars: int):
        self.nvars = nvars
        self.terms = [dict(p) for p in polys]
        self._np = []
        for p in self.terms:
            if not p:
                self._np.append(None)
                continue
            E = np.zeros((len(p), nvars), dtype=np.int64)
            C = np.empty(len(p))
            for t, (mono, c) in enumerate(p.items()):
                for v, k in mono:
                    E[t, v] = k
                C[t] = float(c)
            self._np.append((E, C))

    def exact(self, vals: Sequence[Fraction]) -> list[Fraction]:
        out = []
        for p in self.terms:
            acc = Fraction(0)
            for mono, c in p.items():
                m = c
                for v, k in mono:
                    m *= vals[v] ** k
                acc += m
            out.append(acc)
        return out

    def numeric(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1] + (len(self.terms),))
        for j, data in enumerate(self._np):
            if data is None:
                continue
            E, C = data
            mons = np.prod(X[..., None, :] ** E, axis=-1)
            out[..., j] = mons @ C
        return out


def _sparse_terms(poly) -> dict:
    """``{((var, exp), ...): coeff}`` for a sympy ring element."""
    return {tuple((v, k) for v, k in enumerate(mono) if k): _frac(c) for mono, c in poly.terms()}


@dataclass(frozen=True)
class GroupStructure:
    """Homogeneous group on ``R^p`` built from a graded basis.

    Attributes
    ----------
    basis : GradedBasis
    bch : list of dict
        ``S_j(x, y)`` as sparse polynomials in ``2p`` variables, ``x`` first.
    structure : dict
        ``structure[(i, j)] = {k: c}`` meaning ``[b_i, b_j] = sum_k c b_k``.
    """

    basis: GradedBasis
    bch: tuple[dict, ...]
    structure: dict
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def p(self) -> int:
        return self.basis.dim

    @property
    def weights(self) -> tuple[int, ...]:
        return self.basis.weights

    @property
    def Q(self) -> int:
        return self.basis.Q

    def product_map(self) -> _PolyMap:
        if "pm" not in self._cache:
            self._cache["pm"] = _PolyMap(self.bch, 2 * self.p)
        return self._cache["pm"]

    def to_json(self) -> dict:
        def q(c):
            return [c.numerator, c.denominator]

        return {
            "n": self.basis.n,
            "x0_present": self.basis.with_x0,
            "r": self.basis.r,
            "basis": [list(I) for I in self.basis.elements],
            "weights": list(self.weights),
            "Q": self.Q,
            "structure_constants": [
                {"i": i, "j": j, "k": k, "value": q(c)}
                for (i, j), comb in sorted(self.structure.items())
                for k, c in sorted(comb.items())
            ],
            "bch": [
                [{"monomial": [list(vk) for vk in mono], "coeff": q(c)} for mono, c in sorted(S.items())]
                for S in self.bch
            ],
        }


def _projector(basis: GradedBasis):
    """Per weight: basis slots, pivot words and the inverse of the pivot block."""
    out = {}
    for w in range(1, basis.r + 1):
        slots = [k for k, I in enumerate(basis.elements) if weight(I) == w]
        if not slots:
            continue
        exps = [assoc.right_nested(basis.elements[k]) for k in slots]
        words = sorted({word for e in exps for word in e})
        rows = _rows_for(words, exps)
        dm = DomainMatrix([[QQ(v) for v in row] for row in rows], (len(rows), len(words)), QQ)
        _, pivots = dm.rref()
        pwords = [words[j] for j in pivots]
        block = DomainMatrix(
            [[QQ(rows[i][j]) for j in pivots] for i in range(len(rows))], (len(rows), len(pivots)), QQ
        )
        inv = block.inv().to_list()
        out[w] = (slots, pwords, inv, exps)
    return out


def _project(elem: dict, proj, p: int, zero):
    """Coordinates of a Lie element on the basis; raises if it is not in the span."""
    coords = [zero] * p
    for slots, pwords, inv, _ in proj.values():
        z = [elem.get(word, zero) for word in pwords]
        for a, k in enumerate(slots):
            acc = zero
            for j in range(len(pwords)):
                if inv[j][a]:
                    acc = acc + z[j] * inv[j][a]
            coords[k] = acc
    recon = {}
    for slots, _, _, exps in proj.values():
        for a, k in enumerate(slots):
            if coords[k]:
                recon = assoc.add(recon, exps[a], coords[k])
    residual = assoc.add(recon, elem, -1)
    if residual:
        raise ArithmeticError("element is not in the span of the graded basis")
    return coords


@lru_cache(maxsize=None)
def group_structure(n: int, with_x0: bool, r: int) -> GroupStructure:
    """Build the group law ``S(x, y) = log(exp X exp Y)`` truncated at weight ``r``."""
    basis = graded_basis(n, with_x0, r)
    p = basis.dim
    R, *gens = ring([f"x{k}" for k in range(p)] + [f"y{k}" for k in range(p)], QQ)
    xs, ys = gens[:p], gens[p:]
    X, Y = {}, {}
    for k, I in enumerate(basis.elements):
        X = assoc.add(X, assoc.right_nested(I), xs[k])
        Y = assoc.add(Y, assoc.right_nested(I), ys[k])

    def div(c, k):
        return c * QQ(1, k)

    prod = assoc.mul(assoc.exp_series(X, r, R.one, div), assoc.exp_series(Y, r, R.one, div), r)
    Z = assoc.log_series(prod, r, div)
    proj = _projector(basis)
    S = _project(Z, proj, p, R.zero)
    bch = tuple(_sparse_terms(s) for s in S)

    structure = {}
    for i, I in enumerate(basis.elements):
        for j, J in enumerate(basis.elements):
            if i == j or weight(I) + weight(J) > r:
                continue
            c = assoc.commutator(assoc.right_nested(I), assoc.right_nested(J), r)
            coords = _project({w: Fraction(v) for w, v in c.items()}, proj, p, Fraction(0))
            comb = {k: _frac(QQ(v)) for k, v in enumerate(coords) if v}
            if comb:
                structure[(i, j)] = comb
    g = GroupStructure(basis, bch, structure)
    g._cache["ring"] = (R, xs, ys, S)
    return g


def _exact_input(*vs):
    return all(isinstance(v, (int, Fraction)) for u in vs for v in u)


def bch_product(g: GroupStructure, u, v):
    """``u o v``; exact when both points have rational entries."""
    u, v = list(u), list(v)
    if len(u) != g.p or len(v) != g.p:
        raise ValueError("points must have the group dimension")
    if _exact_input(u, v):
        return g.product_map().exact([Fraction(a) for a in u + v])
    return g.product_map().numeric(np.array(u + v, dtype=float))


def bch_product_batch(g: GroupStructure, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    return g.product_map().numeric(np.concatenate([np.asarray(U, float), np.asarray(V, float)], axis=-1))


def inverse(g: GroupStructure, u):
    return [-a for a in u]


def dilate(g: GroupStructure, lam, u):
    """``delta_lambda u``; exact for rational input."""
    if isinstance(u, np.ndarray):
        return u * np.asarray(lam, dtype=float) ** np.array(g.weights, dtype=float)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return [lam**w * a for w, a in zip(g.weights, u)]


def homogeneous_norm_w(weights: Sequence[int], u) -> np.ndarray | float:
    """``sum_k (sum_{|J|=k} |u_J|)^(1/k)``, vectorized over leading axes."""
    U = np.abs(np.asarray(u, dtype=float))
    w = np.asarray(weights)
    out = 0.0
    for k in sorted(set(weights)):
        out = out + np.sum(U[..., w == k], axis=-1) ** (1.0 / k)
    return out


def homogeneous_norm(g: GroupStructure, u):
    return homogeneous_norm_w(g.weights, u)


def left_invariant_field(g: GroupStructure, I) -> VectorField:
    """``Y_[I]``: the coefficient on ``d/du_J`` is ``dS_J/dy_I`` at ``y = 0``."""
    k = g.basis.index(I)
    key = ("Y", k)
    if key not in g._cache:
        R, xs, ys, S = g._cache["ring"]
        sub = [(y, 0) for y in ys]
        coeffs = []
        for s in S:
            d = s.diff(ys[k])
            d = d.evaluate(sub) if d else d
            if not d:
                coeffs.append(ZERO)
                continue
            terms = {}
            for mono, c in d.terms():
                terms[tuple((v, e) for v, e in enumerate(mono) if e)] = _frac(c)
            coeffs.append(from_polynomial_terms(terms))
        g._cache[key] = VectorField(tuple(coeffs), weight(I))
    return g._cache[key]


def group_system(g: GroupStructure, region=None) -> WeightedSystem:
    """The generators ``Y_i`` (and ``Y_0``) as a weighted system on the group."""
    n = g.basis.n
    fields = tuple(left_invariant_field(g, (i,)) for i in range(1, n + 1))
    drift = left_invariant_field(g, (0,)) if g.basis.with_x0 else None
    return WeightedSystem(fields, drift, r=max(g.basis.r, 2), region=region)
