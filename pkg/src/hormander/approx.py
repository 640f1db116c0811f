"""Approximation-order diagnostics in exponential charts.

In a chart at ``xbar`` the pushed-forward bracket ``X_[I]`` is compared with
the left-invariant field ``Y_[I]`` of the model group.  The difference is
expected to have weight at least ``1 - |I|`` (``alpha - |I|`` for Hölder
fields), which is checked by fitting decay slopes along dilation rays.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geom import Chart, ChartError
from .liealg import GroupStructure, dilate, group_system
from .vf import compile_fields, nested_bracket, weight

NOISE_FLOOR = 1e-12
SLOPE_MARGIN = 0.2
LAMBDAS = tuple(2.0**-k for k in range(2, 8))


def _group_bracket(g: GroupStructure, I):
    key = ("Ysys",)
    if key not in g._cache:
        g._cache[key] = group_system(g)
    return nested_bracket(g._cache[key], I)


def _check_basis(chart: Chart, g: GroupStructure):
    if tuple(chart.basis) != tuple(g.basis.elements):
        raise ValueError(f"chart basis {chart.basis} differs from the group basis {g.basis.elements}")


def remainder_field(chart: Chart, g: GroupStructure, I, u) -> np.ndarray:
    """``X_[I]^u - Y_[I]`` evaluated at ``u`` (one point or a batch)."""
    _check_basis(chart, g)
    X = nested_bracket(chart.system, I)
    Y = compile_fields([_group_bracket(g, I)])
    U = np.asarray(u, dtype=float)
    return chart.pushforward(X, U) - Y(U)[..., 0]


@dataclass(frozen=True)
class OrderEstimate:
    I: tuple
    J: tuple
    slope: float | None
    floor: float
    residual: float
    fitted: int
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "vanishing")


def _fit_slope(lams, vals):
    x, y = np.log(lams), np.log(vals)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((y - A @ coef) ** 2)))
    return float(coef[0]), resid


def weight_order_estimate(chart: Chart, g: GroupStructure, I, J, direction,
                          lambdas: Sequence[float] = LAMBDAS, smooth: bool | None = None) -> OrderEstimate:
    """Decay slope of the ``J`` component of the remainder along ``delta_lambda(direction)``.

    The floor is ``1 - |I| + |J|`` for smooth systems and ``alpha - |I| + |J|``
    otherwise.  Samples below the noise floor are dropped; with fewer than two
    samples left the component is reported as vanishing.
    """
    if len(lambdas) < 6:
        raise ValueError("at least six dilation factors are required")
    d = np.asarray(direction, dtype=float)
    if abs(float(chart.norm(d)) - 1.0) > 1e-9:
        raise ValueError("direction must have unit homogeneous norm")
    if smooth is None:
        smooth = chart.mode == "smooth"
    lead = 1.0 if smooth else float(chart.system.alpha)
    floor = lead - weight(I) + weight(J)
    k = chart.basis.index(tuple(J))
    U = np.array([dilate(g, lam, d) for lam in lambdas])
    vals = np.abs(remainder_field(chart, g, I, U)[:, k])
    keep = vals > NOISE_FLOOR
    if keep.sum() < 2:
        return OrderEstimate(tuple(I), tuple(J), None, floor, 0.0, int(keep.sum()), "vanishing")
    slope, resid = _fit_slope(np.asarray(lambdas)[keep], vals[keep])
    verdict = "pass" if slope >= floor - SLOPE_MARGIN else "fail"
    return OrderEstimate(tuple(I), tuple(J), slope, floor, resid, int(keep.sum()), verdict)


def unit_directions(g: GroupStructure, count: int, seed: int) -> np.ndarray:
    """Random directions rescaled by dilation to unit homogeneous norm."""
    from .liealg import homogeneous_norm

    V = np.random.default_rng([seed, 17]).normal(size=(count, g.p))
    out = []
    for v in V:
        lam = 1.0 / float(homogeneous_norm(g, v))
        out.append(dilate(g, lam, v))
    return np.array(out)


def order_table(chart: Chart, g: GroupStructure, directions, smooth: bool | None = None) -> list[OrderEstimate]:
    """Estimates for every ``I, J`` in the basis and every direction."""
    rows = []
    for d in directions:
        for I in chart.basis:
            for J in chart.basis:
                rows.append(weight_order_estimate(chart, g, I, J, d, smooth=smooth))
    return rows


def orders_csv(rows: Sequence[OrderEstimate]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["I", "J", "slope", "floor", "residual", "verdict"])
    for e in rows:
        wr.writerow([
            "".join(map(str, e.I)), "".join(map(str, e.J)),
            "" if e.slope is None else repr(e.slope), repr(e.floor), repr(e.residual), e.verdict,
        ])
    return buf.getvalue()


@dataclass(frozen=True)
class HolderEstimate:
    exponent: float | None
    exact: bool
    residual: float
    pairs: int


def holder_exponent_estimate(f: Callable[[np.ndarray], np.ndarray], probes) -> HolderEstimate:
    """Slope of ``log |f(a) - f(b)|`` against ``log |a - b|`` over probe pairs.

    The exponent is capped at 1.  Identical values at every pair give ``exact``.
    """
    probes = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in probes]
    if len(probes) < 20:
        raise ValueError("at least 20 probe pairs are required")
    seps = np.array([np.linalg.norm(a - b) for a, b in probes])
    if np.allclose(seps, seps[0], rtol=1e-12):
        raise ValueError("probe separations must vary")
    diffs = np.array([np.linalg.norm(np.atleast_1d(f(a)) - np.atleast_1d(f(b))) for a, b in probes])
    if np.all(diffs == 0):
        return HolderEstimate(None, True, 0.0, len(probes))
    keep = diffs > 0
    slope, resid = _fit_slope(seps[keep], diffs[keep])
    return HolderEstimate(min(1.0, slope), False, resid, len(probes))


def geometric_probes(centre, direction, count: int = 24, smax: float = 0.1, smin: float = 1e-4):
    """Pairs ``(centre, centre + s * direction)`` with geometrically spaced ``s``."""
    c = np.asarray(centre, dtype=float)
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    return [(c, c + s * e) for s in np.geomspace(smax, smin, count)]


def theta_jacobian(chart: Chart, x) -> np.ndarray:
    """``dTheta/dx`` at ``x``, the inverse of the flow Jacobian at ``Theta(x)``."""
    u = chart.theta(x)
    _, J = chart.exp_flow_jac(u)
    return np.linalg.inv(J)


def theta_jacobian_fd(chart: Chart, x, h: float = 1e-3) -> np.ndarray:
    """Four-point central differences of ``Theta`` at ``x``."""
    x = np.asarray(x, dtype=float)
    p = chart.p
    pts = []
    for k in range(p):
        for s in (2, 1, -1, -2):
            y = x.copy()
            y[k] += s * h
            pts.append(y)
    U, ok = chart.theta_batch(np.array(pts), tol=1e-14)
    if not np.all(np.abs(chart.exp_flow(U) - np.array(pts)) <= 1e-12):
        raise ChartError("Theta did not converge for the difference stencil")
    U = U.reshape(p, 4, p)
    D = (-U[:, 0] + 8 * U[:, 1] - 8 * U[:, 2] + U[:, 3]) / (12 * h)
    return D.T


@dataclass(frozen=True)
class JacobianReport:
    c: float
    K: float
    max_deviation: float
    theta_det: float
    product_error: float
    points: int

    def to_json(self) -> dict:
        return {
            "c": self.c, "K": self.K, "max_deviation": self.max_deviation,
            "theta_jacobian_det": self.theta_det, "c_times_J_minus_1": self.product_error,
            "points": self.points,
        }


def jacobian_check(chart: Chart, U) -> JacobianReport:
    """Compare ``det dE/du(u)`` with ``c = det dE/du(0)`` on a grid of ``u``.

    ``K`` is the smallest constant with ``|det(u) - c| <= K ||u||`` on the grid.
    The Theta Jacobian at the base point is formed by finite differences and
    ``c * det`` is compared with 1.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    c = float(np.linalg.det(chart.A))
    _, J = chart.exp_flow_jac(U)
    dets = np.linalg.det(J)
    if np.any(np.abs(dets) < 1e-14):
        raise ChartError("singular flow Jacobian on the grid")
    dev = np.abs(dets - c)
    norms = np.asarray(chart.norm(U))
    nz = norms > 0
    if np.any(~nz & (dev > 1e-12)):
        raise ChartError("nonzero deviation at u = 0")
    K = float(np.max(dev[nz] / norms[nz])) if np.any(nz) else 0.0
    Jt = float(np.linalg.det(theta_jacobian_fd(chart, chart.xbar)))
    return JacobianReport(c, K, float(dev.max()), Jt, abs(c * Jt - 1.0), len(U))


def box_grid(chart: Chart, R: float, per_axis: int = 5) -> np.ndarray:
    """Tensor grid on ``Box(R)`` in chart coordinates."""
    w = np.array(chart.weights, dtype=float)
    axes = [np.linspace(-1, 1, per_axis) * R**wi for wi in w]
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(chart.p, -1).T
