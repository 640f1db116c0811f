"""Truncated free associative algebra on letters ``0..n``.

Elements are dicts mapping words (tuples of letters) to coefficients.  The
coefficients may be any ring elements supporting ``+``, ``*`` and comparison
with zero (Fractions, ints, sympy polynomial ring elements).  Letter ``0`` has
weight 2, every other letter weight 1.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable


def letter_weight(i: int) -> int:
    return 2 if i == 0 else 1


def word_weight(word) -> int:
    return sum(2 if i == 0 else 1 for i in word)


def add(a: dict, b: dict, scale=1) -> dict:
    out = dict(a)
    for w, c in b.items():
        v = out[w] + scale * c if w in out else scale * c
        if v:
            out[w] = v
        else:
            out.pop(w, None)
    return out


def scale(a: dict, s) -> dict:
    if not s:
        return {}
    return {w: s * c for w, c in a.items()}


def mul(a: dict, b: dict, max_weight: int | None = None) -> dict:
    out: dict = {}
    for w1, c1 in a.items():
        k1 = word_weight(w1)
        for w2, c2 in b.items():
            if max_weight is not None and k1 + word_weight(w2) > max_weight:
                continue
            w = w1 + w2
            v = out[w] + c1 * c2 if w in out else c1 * c2
            if v:
                out[w] = v
            else:
                out.pop(w, None)
    return out


def commutator(a: dict, b: dict, max_weight: int | None = None) -> dict:
    return add(mul(a, b, max_weight), mul(b, a, max_weight), -1)


def letter(i: int, coeff=1) -> dict:
    return {(i,): coeff}


def right_nested(word, max_weight: int | None = None) -> dict:
    """Expansion of ``[xi_{i1}, [xi_{i2}, ... xi_{ik}]]`` over words, integer coefficients."""
    elem = letter(word[-1])
    for i in reversed(word[:-1]):
        elem = commutator(letter(i), elem, max_weight)
    return elem


def truncate(a: dict, max_weight: int) -> dict:
    return {w: c for w, c in a.items() if word_weight(w) <= max_weight}


def exp_series(x: dict, max_weight: int, one=1, div: Callable = None) -> dict:
    """``exp(x)`` truncated at ``max_weight`` for ``x`` without constant term."""
    div = div or (lambda c, k: c * Fraction(1, k))
    result = {(): one}
    power = {(): one}
    k = 1
    while True:
        power = mul(power, x, max_weight)
        if not power:
            break
        power = {w: div(c, k) for w, c in power.items()}
        result = add(result, power)
        k += 1
    return result


def log_series(y: dict, max_weight: int, div: Callable = None) -> dict:
    """``log(y)`` truncated at ``max_weight`` for ``y`` with constant term 1."""
    div = div or (lambda c, k: c * Fraction(1, k))
    w = {word: c for word, c in y.items() if word != ()}
    result: dict = {}
    power = {(): 1}
    k = 1
    while True:
        power = mul(power, w, max_weight)
        if not power:
            break
        term = {word: div(c, k) for word, c in power.items()}
        result = add(result, term, 1 if k % 2 else -1)
        k += 1
    return result
