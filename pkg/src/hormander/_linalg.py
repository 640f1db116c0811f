"""Exact rational and tolerance-based linear algebra used across modules."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

RANK_RTOL = 1e-9


def _to_dm(rows: Sequence[Sequence[Fraction]], ncols: int | None = None) -> DomainMatrix:
    rows = [list(r) for r in rows]
    nr = len(rows)
    nc = ncols if ncols is not None else (len(rows[0]) if rows else 0)
    return DomainMatrix([[QQ(Fraction(v)) for v in r] for r in rows], (nr, nc), QQ)


def _from_qq(v) -> Fraction:
    return Fraction(int(v.numerator), int(v.denominator))


def exact_rank(rows) -> int:
    if not rows or not len(rows[0]):
        return 0
    return _to_dm(rows).rank()


def exact_nullspace(rows, ncols: int) -> list[list[Fraction]]:
    """Basis of ``{a : M a = 0}`` for the matrix with the given rows."""
    if ncols == 0:
        return []
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    ns = _to_dm(rows, ncols).nullspace()
    return [[_from_qq(v) for v in r] for r in ns.to_list()]


def exact_min_norm_solve(rows, rhs) -> list[Fraction]:
    """Minimum Euclidean-norm solution of ``M c = rhs`` for full-row-rank ``M``.

    Raises ``np.linalg.LinAlgError`` when ``M`` is row-rank deficient.
    """
    m = _to_dm(rows)
    nr = m.shape[0]
    gram = m * m.transpose()
    if gram.rank() < nr:
        raise np.linalg.LinAlgError("interpolation system is row-rank deficient")
    b = DomainMatrix([[QQ(Fraction(v))] for v in rhs], (nr, 1), QQ)
    y = gram.lu_solve(b)
    c = m.transpose() * y
    return [_from_qq(r[0]) for r in c.to_list()]


def numeric_rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def numeric_nullspace(mat: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Columns spanning the numerical kernel of ``mat`` (shape ``(ncols, k)``)."""
    mat = np.asarray(mat, dtype=float)
    ncols = mat.shape[1]
    if mat.shape[0] == 0:
        return np.eye(ncols)
    _, s, vt = np.linalg.svd(mat)
    rank = 0 if s.size == 0 or s[0] == 0 else int(np.sum(s > rtol * s[0]))
    return vt[rank:].T.copy()
