"""Exponential charts, the inverse map Theta, and Taylor regularization.

A chart at ``xbar`` is ``u -> E(u, xbar)``, the time-one flow of
``sum_I u_I F_I`` started at ``xbar``, where ``F_I`` runs over a fixed basis
``B`` of brackets.  In regularized mode the brackets are those of the Taylor
polynomial fields of the system at ``xbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from ._linalg import numeric_rank
from .expr import (
    ZERO,
    Const,
    Expr,
    Var,
    as_expr,
    differentiate,
    evaluate,
    holder_nodes,
    lambdify,
    simplify,
)
from .liealg import homogeneous_norm_w
from .ode import CHUNK, IntegrationError, integrate
from .vf import VectorField, WeightedSystem, compile_fields, nested_bracket, weight

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 40
ROUNDTRIP_TOL = 1e-8
VALIDITY_PROBES = 32


class ChartError(ArithmeticError):
    """Flow left the region, Newton failed, or the Jacobian became singular."""


class RegularizationError(ValueError):
    """A Taylor coefficient does not exist at the requested centre."""


# ---------------------------------------------------------------------------
# basis selection


def select_basis(sys: WeightedSystem, x, tol: float = 1e-9) -> tuple[tuple[int, ...], ...]:
    """Greedy basis: brackets in canonical order, kept when the rank at ``x`` grows."""
    x = [float(v) for v in x]
    chosen, cols = [], []
    for I in sys.indices():
        v = np.array([float(c) for c in nested_bracket(sys, I).evaluate(x)])
        trial = cols + [v]
        if numeric_rank(np.array(trial).T, tol) > len(cols):
            cols.append(v)
            chosen.append(I)
            if len(chosen) == sys.p:
                break
    if len(chosen) < sys.p:
        raise ChartError(f"brackets span only {len(chosen)} of {sys.p} directions at {x}")
    return tuple(chosen)


# ---------------------------------------------------------------------------
# Taylor regularization


@dataclass(frozen=True)
class RegularizedFields:
    """Taylor polynomial fields ``S_i`` of order ``r - p_i`` centred at ``xbar``."""

    xbar: tuple[float, ...]
    system: WeightedSystem


def _check_holder(e: Expr, xbar, order: int):
    for h in holder_nodes(e):
        base = float(evaluate(h.base, xbar))
        if base != 0.0:
            continue
        even = h.beta.denominator == 1 and h.beta.numerator % 2 == 0
        if order >= h.beta and not even:
            raise RegularizationError(
                f"|.|^{float(h.beta)} has vanishing base at the centre; "
                f"order {order} derivatives do not exist"
            )


def taylor_polynomial(e: Expr, xbar: Sequence, order: int) -> Expr:
    """Taylor polynomial of ``e`` at ``xbar`` of total degree ``order``."""
    p = len(xbar)
    _check_holder(e, xbar, order)
    exact = all(isinstance(v, (int, Fraction)) for v in xbar)
    centre = [Fraction(v) if exact else Fraction(float(v)) for v in xbar]
    shifts = [simplify(Var(k) - as_expr(c)) if c else Var(k) for k, c in enumerate(centre)]
    out = ZERO
    derivs = {(): e}
    for d in range(order + 1):
        for alpha in product(range(d + 1), repeat=p):
            if sum(alpha) != d:
                continue
            if d > 0:
                k = next(i for i, a in enumerate(alpha) if a)
                prev = list(alpha)
                prev[k] -= 1
                derivs[alpha] = differentiate(derivs[tuple(prev) if d > 1 else ()], k)
                _check_holder(derivs[alpha], xbar, order - d)
            else:
                derivs[alpha] = e
            val = evaluate(derivs[alpha], centre)
            if isinstance(val, float):
                if not math.isfinite(val):
                    raise RegularizationError("non-finite derivative at the centre")
                val = Fraction(val)
            if not val:
                continue
            term = as_expr(val / math.prod(math.factorial(a) for a in alpha))
            for k, a in enumerate(alpha):
                for _ in range(a):
                    term = term * shifts[k]
            out = out + term
    return simplify(out)


def taylor_regularize(sys: WeightedSystem, xbar: Sequence) -> RegularizedFields:
    """Replace each coefficient by its Taylor polynomial of order ``r - p_i`` at ``xbar``."""

    def reg(F: VectorField, pi: int) -> VectorField:
        return VectorField(tuple(taylor_polynomial(c, xbar, sys.r - pi) for c in F.coeffs), pi)

    fields = [reg(F, 1) for F in sys.fields]
    drift = reg(sys.drift, 2) if sys.with_x0 else None
    return RegularizedFields(tuple(float(v) for v in xbar), sys.with_fields(fields, drift))


# ---------------------------------------------------------------------------
# flows


class FlowModel:
    """Compiled basis fields ``F_I`` and their Jacobians for batched flows."""

    def __init__(self, fields: Sequence[VectorField], atol: float = 1e-12, rtol: float = 1e-12):
        self.fields = tuple(fields)
        self.p = fields[0].dim
        self.m = len(fields)
        self.atol, self.rtol = atol, rtol
        self._F = compile_fields(self.fields)
        flat = [differentiate(c, l) for F in self.fields for c in F.coeffs for l in range(self.p)]
        g = lambdify(flat)
        m, p = self.m, self.p

        def dF(x):
            out = g(x)
            return out.reshape(out.shape[:-1] + (m, p, p))

        self._dF = dF
        self.constant = all(isinstance(c, Const) for F in self.fields for c in F.coeffs)

    def values(self, x: np.ndarray) -> np.ndarray:
        """Field values, shape ``(..., p, m)``."""
        return self._F(x)

    def _rhs(self, U):
        F = self._F

        def f(y):
            return np.einsum("bpm,bm->bp", F(y), U)

        return f

    def _rhs_jac(self, U):
        p, F, dF = self.p, self._F, self._dF

        def f(state):
            y = state[:, :p]
            J = state[:, p:].reshape(-1, p, p)
            Fy = F(y)
            DF = np.einsum("bmkl,bm->bkl", dF(y), U)
            dy = np.einsum("bpm,bm->bp", Fy, U)
            dJ = DF @ J + Fy
            return np.concatenate([dy, dJ.reshape(len(y), -1)], axis=1)

        return f

    def flow(self, x0: np.ndarray, U: np.ndarray, jac: bool = False):
        """Time-one flow of ``sum_I U_I F_I`` from ``x0``; optionally ``dE/dU``.

        ``x0`` and ``U`` have shapes ``(B, p)`` and ``(B, m)``.  Work is split
        into fixed chunks of rows so results do not depend on the caller's
        batching beyond chunk boundaries.
        """
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        B = len(U) if len(x0) == 1 else len(x0)
        x0 = np.broadcast_to(x0, (B, self.p))
        U = np.broadcast_to(U, (B, self.m))
        p = self.p
        if self.constant:
            # constant fields: the flow is affine in U
            A = self._F(np.zeros(p))
            X = x0 + U @ A.T
            return (X, np.broadcast_to(A, (B, p, self.m)).copy()) if jac else X
        X = np.empty((B, p))
        J = np.empty((B, p, self.m)) if jac else None
        for s in range(0, B, CHUNK):
            sl = slice(s, s + CHUNK)
            if jac:
                state0 = np.concatenate([x0[sl], np.zeros((len(x0[sl]), p * self.m))], axis=1)
                out = integrate(self._rhs_jac(U[sl]), state0, atol=self.atol, rtol=self.rtol)
                X[sl] = out[:, :p]
                J[sl] = out[:, p:].reshape(-1, p, self.m)
            else:
                X[sl] = integrate(self._rhs(U[sl]), x0[sl], atol=self.atol, rtol=self.rtol)
        return (X, J) if jac else X


def _as_batch(x, p):
    arr = np.asarray(x, dtype=float)
    return arr.reshape(-1, p), arr.ndim == 1


# ---------------------------------------------------------------------------
# charts


@dataclass
class Chart:
    """Exponential chart at ``xbar`` over the bracket basis ``basis``.

    Attributes
    ----------
    xbar : ndarray
    basis : tuple of multiindices
    model : FlowModel
        Compiled flow fields, shared between charts of the same system.
    mode : {"smooth", "regularized"}
    """

    xbar: np.ndarray
    basis: tuple
    model: FlowModel
    mode: str
    region: tuple
    fields_system: WeightedSystem
    system: WeightedSystem | None = None
    newton_tol: float = NEWTON_TOL
    newton_maxiter: int = NEWTON_MAXITER
    _validity: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.system is None:
            self.system = self.fields_system
        self.xbar = np.asarray(self.xbar, dtype=float)
        self.A = self.model.values(self.xbar)
        if abs(np.linalg.det(self.A)) < 1e-12:
            raise ChartError("basis fields are dependent at the base point")
        self.Ainv = np.linalg.inv(self.A)

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def weights(self) -> tuple[int, ...]:
        return tuple(weight(I) for I in self.basis)

    @property
    def Q(self) -> int:
        return sum(self.weights)

    def norm(self, u):
        return homogeneous_norm_w(self.weights, u)

    def in_region(self, X: np.ndarray) -> np.ndarray:
        lo, hi = (np.asarray(b, dtype=float) for b in self.region)
        return np.all((X >= lo) & (X <= hi), axis=-1)

    def exp_flow(self, u) -> np.ndarray:
        """``E(u, xbar)``; accepts one point or a batch ``(B, p)``."""
        U, single = _as_batch(u, self.p)
        X = self.model.flow(self.xbar[None, :], U)
        if single:
            if not np.all(np.isfinite(X)) or not self.in_region(X[0]):
                raise ChartError(f"flow left the region: {X[0]}")
            return X[0]
        return X

    def exp_flow_jac(self, u):
        U, single = _as_batch(u, self.p)
        X, J = self.model.flow(self.xbar[None, :], U, jac=True)
        return (X[0], J[0]) if single else (X, J)

    def theta_batch(self, X, u0=None, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Newton solve of ``E(u) = x`` for a batch; returns ``(U, converged)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return newton_theta(self.model, np.broadcast_to(self.xbar, X.shape), X,
                            np.broadcast_to(self.Ainv, X.shape[:1] + self.Ainv.shape),
                            self.newton_tol if tol is None else tol, self.newton_maxiter, u0)

    def theta(self, x) -> np.ndarray:
        """``Theta(xbar, x)``; raises ChartError on non-convergence."""
        X, single = _as_batch(x, self.p)
        U, ok = self.theta_batch(X)
        if not np.all(ok):
            raise ChartError("Newton iteration for Theta did not converge")
        return U[0] if single else U

    def pushforward(self, F: VectorField, u, method: str = "variational", h: float = 1e-6) -> np.ndarray:
        """Components of ``F`` in the chart coordinates at ``u``: ``(dE/du)^{-1} F(E(u))``."""
        U, single = _as_batch(u, self.p)
        if method == "variational":
            X, J = self.exp_flow_jac(U)
        elif method == "fd":
            X = self.exp_flow(U)
            J = np.empty((len(U), self.p, self.p))
            for k in range(self.p):
                e = np.zeros(self.p)
                e[k] = h
                J[:, :, k] = (self.exp_flow(U + e) - self.exp_flow(U - e)) / (2 * h)
        else:
            raise ValueError(f"unknown method {method!r}")
        vals = compile_fields([F])(X)[..., 0]
        dets = np.linalg.det(J)
        if np.any(np.abs(dets) < 1e-14):
            raise ChartError("flow Jacobian is singular")
        out = np.linalg.solve(J, vals[..., None])[..., 0]
        return out[0] if single else out

    def validity_radius(self, r_max: float = 1.0, levels: int = 14) -> float:
        """Largest dyadic ``R <= r_max`` whose box-boundary probes round-trip."""
        if self._validity is None:
            rng = np.random.default_rng(20240917)
            V = rng.uniform(-1, 1, size=(VALIDITY_PROBES, self.p))
            face = rng.integers(0, self.p, VALIDITY_PROBES)
            V[np.arange(VALIDITY_PROBES), face] = np.sign(V[np.arange(VALIDITY_PROBES), face])
            w = np.array(self.weights, dtype=float)
            R = r_max
            for _ in range(levels):
                if self._probe(V * R**w):
                    break
                R /= 2
            else:
                raise ChartError("no valid chart radius found")
            self._validity = R
        return self._validity

    def _probe(self, U) -> bool:
        try:
            X, J = self.exp_flow_jac(U)
        except IntegrationError:
            return False
        if not np.all(np.isfinite(X)) or not np.all(self.in_region(X)):
            return False
        d0 = np.linalg.det(self.A)
        if np.any(np.linalg.det(J) * d0 <= 0):
            return False
        Ub, ok = self.theta_batch(X)
        if not np.all(ok):
            return False
        scale = np.maximum(1.0, np.abs(U))
        return bool(np.all(np.abs(Ub - U) <= ROUNDTRIP_TOL * scale))

    def diagnostics(self) -> dict:
        sv = np.linalg.svd(self.A, compute_uv=False)
        return {
            "mode": self.mode,
            "base_point": [float(v) for v in self.xbar],
            "basis": [list(I) for I in self.basis],
            "weights": list(self.weights),
            "Q": self.Q,
            "det_basis": float(np.linalg.det(self.A)),
            "condition_number": float(sv[0] / sv[-1]),
            "validity_radius": self.validity_radius(),
            "newton_tol": self.newton_tol,
            "ode_atol": self.model.atol,
        }


def newton_theta(model: FlowModel, X0, X, Ainv, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER, u0=None):
    """Batched Newton for ``E(u, x0) = x`` with contraction fallback.

    When a Newton step fails to reduce the residual the point takes the step
    ``u - A^{-1}(E(u) - x)`` instead, ``A`` being the flow Jacobian at ``u = 0``.
    """
    X0 = np.asarray(X0, dtype=float)
    X = np.asarray(X, dtype=float)
    U = np.einsum("bij,bj->bi", Ainv, X - X0) if u0 is None else np.array(u0, dtype=float)
    U = np.array(U)
    B = len(X)
    ok = np.zeros(B, dtype=bool)
    active = np.arange(B)
    res_norm = np.full(B, np.inf)
    for _ in range(maxiter):
        if active.size == 0:
            break
        try:
            E, J = model.flow(X0[active], U[active], jac=True)
        except IntegrationError:
            break
        R = E - X[active]
        rn = np.max(np.abs(R), axis=1)
        rn[~np.isfinite(rn)] = np.inf
        done = rn <= tol
        ok[active[done]] = True
        improved = rn < res_norm[active]
        res_norm[active] = np.minimum(rn, res_norm[active])
        keep = ~done
        a, R, J, improved = active[keep], R[keep], J[keep], improved[keep]
        if a.size == 0:
            active = a
            break
        step = np.empty_like(R)
        with np.errstate(all="ignore"):
            dets = np.abs(np.linalg.det(J))
            good = np.isfinite(dets) & (dets > 1e-14) & improved & np.all(np.isfinite(R), axis=1)
            if np.any(good):
                step[good] = np.linalg.solve(J[good], R[good][..., None])[..., 0]
            bad = ~good
            step[bad] = np.einsum("bij,bj->bi", Ainv[a[bad]], np.nan_to_num(R[bad]))
            step[bad] *= 0.5
        U[a] = U[a] - step
        active = a
    return U, ok


class ChartFactory:
    """Charts of one system sharing a basis and, in smooth mode, compiled flows."""

    def __init__(self, sys: WeightedSystem, mode: str = "smooth", reference=None,
                 atol: float = 1e-12, rtol: float = 1e-12):
        if mode not in ("smooth", "regularized"):
            raise ValueError(f"unknown mode {mode!r}")
        self.sys, self.mode = sys, mode
        self.atol, self.rtol = atol, rtol
        ref = np.zeros(sys.p) if reference is None else np.asarray(reference, dtype=float)
        self.reference = ref
        base_sys = taylor_regularize(sys, _exactify(ref)).system if mode == "regularized" else sys
        self.basis = select_basis(base_sys, ref)
        self._model = None
        if mode == "smooth":
            self._model = FlowModel([nested_bracket(sys, I) for I in self.basis], atol, rtol)
        self._charts: dict = {}

    @property
    def model(self) -> FlowModel:
        if self._model is None:
            raise ValueError("regularized charts carry their own flow models")
        return self._model

    def chart(self, xbar) -> Chart:
        key = tuple(float(v) for v in xbar)
        if key not in self._charts:
            if self.mode == "smooth":
                fsys, model = self.sys, self._model
            else:
                fsys = taylor_regularize(self.sys, _exactify(xbar)).system
                model = FlowModel([nested_bracket(fsys, I) for I in self.basis], self.atol, self.rtol)
            self._charts[key] = Chart(np.array(key), self.basis, model, self.mode, self.sys.region, fsys,
                                      self.sys)
        return self._charts[key]

    def theta_many(self, bases, X) -> tuple[np.ndarray, np.ndarray]:
        """``Theta(base_k, x_k)`` for many base points (smooth mode, one batch)."""
        bases = np.atleast_2d(np.asarray(bases, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.mode == "smooth":
            Ainv = np.linalg.inv(self.model.values(bases))
            return newton_theta(self.model, bases, X, Ainv)
        U = np.empty_like(X)
        ok = np.empty(len(X), dtype=bool)
        for k, (b, x) in enumerate(zip(bases, X)):
            u, o = self.chart(b).theta_batch(x[None, :])
            U[k], ok[k] = u[0], o[0]
        return U, ok

    def flow_from(self, starts, U) -> np.ndarray:
        """Flows with the basis fields from arbitrary start points (smooth mode)."""
        return self.model.flow(starts, U)


def _exactify(x):
    return [Fraction(float(v)) for v in x]


def make_chart(sys: WeightedSystem, xbar, mode: str = "smooth", **kw) -> Chart:
    """Chart at ``xbar`` with the basis selected at ``xbar`` itself."""
    return ChartFactory(sys, mode, reference=xbar, **kw).chart(xbar)
