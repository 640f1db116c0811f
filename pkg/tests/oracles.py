"""Independent reference computations, written with sympy only.

Nothing here imports the package.  Running this file regenerates
``data/oracle_values.json``; the test suite checks both that the frozen values
are still reproduced by these oracles and that the package agrees with them.
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import sympy as sp

DATA = Path(__file__).parent / "data" / "oracle_values.json"


def sym_bracket(X, Y, xs):
    """Lie bracket of coefficient lists by the textbook formula."""
    return [sp.expand(sum(X[j] * sp.diff(Y[k], xs[j]) - Y[j] * sp.diff(X[k], xs[j]) for j in range(len(xs))))
            for k in range(len(xs))]


def sym_nested(fields, I, xs):
    out = fields[I[-1]]
    for i in reversed(I[:-1]):
        out = sym_bracket(fields[i], out, xs)
    return out


def word_expansion(I):
    """Expand the right-nested commutator of noncommutative letters."""
    letters = {i: sp.Symbol(f"L{i}", commutative=False) for i in set(I)}
    e = letters[I[-1]]
    for i in reversed(I[:-1]):
        e = letters[i] * e - e * letters[i]
    e = sp.expand(e)
    out = {}
    for term in sp.Add.make_args(e):
        coeff, nc = term.args_cnc()
        c = sp.Mul(*coeff) if coeff else sp.Integer(1)
        word = []
        for f in nc:
            base, exp = f.as_base_exp()
            word.extend([int(str(base)[1:])] * int(exp))
        out[tuple(word)] = out.get(tuple(word), 0) + int(c)
    return {w: c for w, c in out.items() if c}


def weight(I):
    return sum(2 if i == 0 else 1 for i in I)


def all_indices(n, with_x0, s):
    letters = list(range(1, n + 1)) + ([0] if with_x0 else [])
    out = []
    for k in range(1, s + 1):
        out.extend(I for I in itertools.product(letters, repeat=k) if weight(I) <= s)
    return out


def free_oracle(fields, xs, x0, s, n, with_x0):
    """True iff every kernel vector of the evaluation matrix is a universal relation."""
    Is = all_indices(n, with_x0, s)
    subs = dict(zip(xs, x0))
    cols = [[sp.nsimplify(c).subs(subs) for c in sym_nested(fields, I, xs)] for I in Is]
    M = sp.Matrix(cols).T
    words = sorted({w for I in Is for w in word_expansion(I)})
    A = sp.Matrix([[word_expansion(I).get(w, 0) for w in words] for I in Is])
    for v in M.nullspace():
        if any(sp.simplify(x) != 0 for x in (v.T * A)):
            return False
    return True


def span_dim(fields, xs, x0, r, n, with_x0):
    subs = dict(zip(xs, x0))
    cols = [[sp.sympify(c).subs(subs) for c in sym_nested(fields, I, xs)] for I in all_indices(n, with_x0, r)]
    return sp.Matrix(cols).rank()


def free_dim(n, with_x0, r):
    """Dimension and homogeneous dimension of the free nilpotent algebra by brute-force span."""
    dim = Q = 0
    for w in range(1, r + 1):
        Is = [I for I in all_indices(n, with_x0, w) if weight(I) == w]
        exps = [word_expansion(I) for I in Is]
        words = sorted({x for e in exps for x in e})
        if not words:
            continue
        rank = sp.Matrix([[e.get(x, 0) for x in words] for e in exps]).rank()
        dim += rank
        Q += w * rank
    return dim, Q


def heisenberg_law(u, v):
    a, b, c = u
    a2, b2, c2 = v
    return [a + a2, b + b2, c + c2 + sp.Rational(1, 2) * (a * b2 - a2 * b)]


def heisenberg_left_fields():
    """Y_i coefficients by differentiating the closed-form law at the identity."""
    x = sp.symbols("u1:4")
    t = sp.Symbol("t")
    out = []
    for k in range(3):
        e = [0, 0, 0]
        e[k] = t
        prod = heisenberg_law(list(x), e)
        out.append([str(sp.expand(sp.diff(c, t).subs(t, 0))) for c in prod])
    return out


def heisenberg_flow():
    """Closed-form time-one flow of sum u_I X_[I] from 0 for the Heisenberg pair."""
    tau = sp.Symbol("tau")
    u1, u2, u3 = sp.symbols("u1 u2 u3")
    x1, x2 = tau * u1, tau * u2
    rhs3 = u3 + (x1 * u2 - x2 * u1) / 2
    x3 = sp.integrate(sp.expand(rhs3), (tau, 0, tau))
    return [str(sp.expand(e.subs(tau, 1))) for e in (x1, x2, x3)]


def interpolation_check(u_text):
    """Values (X_I u)(0) for the Heisenberg pair and all words of weight <= 2."""
    xs = sp.symbols("x1:4")
    X = {1: [1, 0, -xs[1] / 2], 2: [0, 1, xs[0] / 2]}
    u = sp.sympify(u_text, locals=dict(zip(["x1", "x2", "x3"], xs)))

    def app(F, f):
        return sum(F[k] * sp.diff(f, xs[k]) for k in range(3))

    out = {}
    for I in all_indices(2, False, 2):
        f = u
        for i in reversed(I):
            f = app(X[i], f)
        out["".join(map(str, I))] = str(sp.simplify(f.subs(dict(zip(xs, [0, 0, 0])))))
    return out


def compute() -> dict:
    xs = sp.symbols("x1:4")
    x, y, t = sp.symbols("x y t")
    heis = {1: [1, 0, -xs[1] / 2], 2: [0, 1, xs[0] / 2]}
    out = {
        "bracket_heisenberg": [str(c) for c in sym_bracket(heis[1], heis[2], xs)],
        "bracket_kolmogorov": [str(c) for c in sym_bracket([1, 0], [0, x], [x, y])],
        "a_112": {"".join(map(str, w)): c for w, c in sorted(word_expansion((1, 1, 2)).items())},
        "a_12": {"".join(map(str, w)): c for w, c in sorted(word_expansion((1, 2)).items())},
        "free_heisenberg_s2": free_oracle(heis, xs, [0, 0, 0], 2, 2, False),
        "free_grushin_s1": free_oracle({1: [1, 0], 2: [0, x]}, [x, y], [0, 0], 1, 2, False),
        "free_single_s1": free_oracle({1: [1, 0]}, [x, y], [0, 0], 1, 1, False),
        "free_dims": {
            f"{n},{int(w0)},{r}": list(free_dim(n, w0, r))
            for n, w0, r in [(2, False, 2), (1, True, 3), (2, False, 3), (3, False, 2), (2, False, 4), (1, True, 4)]
        },
        "heisenberg_product_example": [str(v) for v in heisenberg_law([1, 2, 3], [4, 5, 6])],
        "heisenberg_left_fields": heisenberg_left_fields(),
        "heisenberg_flow": heisenberg_flow(),
        "interpolation_heisenberg": interpolation_check("x3 + x1*x2/2"),
        # lifted systems: Grushin with X2 + d/dt, Kolmogorov with X0 + d/dt
        "lifted_grushin": {
            "free_r": free_oracle({1: [1, 0, 0], 2: [0, x, 1]}, [x, y, t], [0, 0, 0], 2, 2, False),
            "span": span_dim({1: [1, 0, 0], 2: [0, x, 1]}, [x, y, t], [0, 0, 0], 2, 2, False),
        },
        "lifted_kolmogorov": {
            "free_r": free_oracle({1: [1, 0, 0], 0: [0, x, 1]}, [x, y, t], [0, 0, 0], 3, 1, True),
            "span": span_dim({1: [1, 0, 0], 0: [0, x, 1]}, [x, y, t], [0, 0, 0], 3, 1, True),
        },
        "simplex_volume_R3_r0.2": float((2 * sp.Rational(1, 5)) ** 3 / math.factorial(3)),
    }
    return out


if __name__ == "__main__":
    DATA.parent.mkdir(exist_ok=True)
    DATA.write_text(json.dumps(compute(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {DATA}")
