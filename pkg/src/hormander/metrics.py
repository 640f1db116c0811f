"""Quasidistance, boxes, control-distance upper bounds and ball volumes."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .geom import Chart, ChartError, ChartFactory
from .ode import CHUNK, IntegrationError

ENDPOINT_TOL = 1e-8


def _rng(seed: int, counter: int) -> np.random.Generator:
    """Independent stream per (seed, counter); counter-based so scheduling cannot matter."""
    return np.random.default_rng([int(seed), int(counter)])


# ---------------------------------------------------------------------------
# quasidistance and boxes


def quasidistance(factory: ChartFactory, xi, eta) -> float:
    """``rho(xi, eta) = ||Theta(eta, xi)||`` using the chart at ``eta``."""
    chart = factory.chart(eta)
    return float(chart.norm(chart.theta(xi)))


def quasidistance_many(factory: ChartFactory, XI, ETA) -> np.ndarray:
    U, ok = factory.theta_many(ETA, XI)
    if not np.all(ok):
        raise ChartError(f"Theta failed for {int(np.sum(~ok))} pairs")
    return np.asarray(factory.chart(factory.reference).norm(U))


def box_membership(chart: Chart, R: float, x) -> bool:
    """``|Theta(x)_I| < R^{|I|}`` for every basis element ``I``."""
    u = chart.theta(x)
    return bool(np.all(np.abs(u) < R ** np.array(chart.weights, dtype=float)))


def box_scale(weights, U) -> np.ndarray:
    """Smallest ``R`` with ``U`` in the closed box of radius ``R``."""
    w = np.asarray(weights, dtype=float)
    return np.max(np.abs(np.atleast_2d(U)) ** (1.0 / w), axis=-1)


# ---------------------------------------------------------------------------
# control distance


@dataclass(frozen=True)
class CCBound:
    value: float
    segments: int
    residual: float
    success: bool


def _endpoint(factory: ChartFactory, x, A: np.ndarray) -> np.ndarray:
    """End of the curve driven by piecewise-constant controls ``A`` (shape ``(B, N, p)``)."""
    B, N, _ = A.shape
    X = np.broadcast_to(np.asarray(x, dtype=float), (B, factory.sys.p)).copy()
    for k in range(N):
        X = factory.flow_from(X, A[:, k, :] / N)
    return X


def _feasible(factory, x, y, delta, w, a0, N):
    bound = np.tile(delta ** w, N)
    lo, hi = -bound, bound
    start = np.clip(a0, lo * (1 - 1e-12), hi * (1 - 1e-12))
    p = len(w)
    h = 1e-7

    def fun(a):
        return _endpoint(factory, x, a.reshape(1, N, p))[0] - y

    def jac(a):
        k = len(a)
        P = np.repeat(a[None, :], 2 * k, axis=0)
        P[np.arange(k), np.arange(k)] += h
        P[k + np.arange(k), np.arange(k)] -= h
        E = _endpoint(factory, x, P.reshape(2 * k, N, p))
        return ((E[:k] - E[k:]) / (2 * h)).T

    try:
        sol = least_squares(fun, start, jac=jac, bounds=(lo, hi), xtol=1e-14, ftol=1e-14,
                            gtol=1e-14, max_nfev=60, method="trf")
    except (IntegrationError, ValueError):
        return False, None, np.inf
    res = float(np.max(np.abs(sol.fun)))
    return res <= ENDPOINT_TOL, sol.x, res


def cc_distance_upper(factory: ChartFactory, x, y, segments: int = 1, bisections: int = 8,
                      starts: int = 4, seed: int = 0) -> CCBound:
    """Upper bound on the control distance from ``x`` to ``y``.

    Controls are constant on each of ``N`` equal segments and act on the basis
    fields; ``N`` runs over ``1, 2, 4, ... <= segments`` and the smallest
    certified radius is kept, so the bound never increases with ``segments``.
    For ``N = 1`` the control is ``Theta(x, y)`` itself.  Each bisection
    radius is tried from the previous solution and ``starts - 1`` random
    controls drawn from a generator seeded with ``seed``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return CCBound(0.0, 1, 0.0, True)
    chart = factory.chart(x)
    w = np.array(chart.weights, dtype=float)
    u = chart.theta(y)
    best = float(np.max(np.abs(u) ** (1.0 / w)))
    res_best = float(np.max(np.abs(chart.exp_flow(u) - y)))
    used = 1
    N = 2
    rng = np.random.default_rng(seed)
    while N <= segments:
        warm = np.tile(u, N)
        lo, hi = 0.0, best
        for _ in range(bisections):
            mid = 0.5 * (lo + hi)
            bound = np.tile(mid**w, N)
            tries = [warm] + [rng.uniform(-1, 1, size=warm.shape) * bound for _ in range(starts - 1)]
            for a0 in tries:
                ok, a, res = _feasible(factory, x, y, mid, w, a0, N)
                if ok:
                    break
            if ok:
                hi, warm, used, res_best = mid, a, N, res
            else:
                lo = mid
        best = hi
        N *= 2
    return CCBound(best, used, res_best, True)


# ---------------------------------------------------------------------------
# ball volumes


def _bounding_box(chart: Chart, R: float, seed: int, pad: float = 0.1):
    """Box around the image of sampled points of the ``R``-ball in chart coordinates."""
    w = np.array(chart.weights, dtype=float)
    scale = R**w
    V = _rng(seed, 2**31).uniform(-1, 1, size=(8192, chart.p)) * scale
    V = V[chart.norm(V) < R]
    axes = np.vstack([np.eye(chart.p), -np.eye(chart.p)]) * scale * (1 - 1e-9)
    X = chart.exp_flow(np.vstack([axes, V]))
    lo, hi = X.min(axis=0), X.max(axis=0)
    margin = pad * (hi - lo) + 1e-12
    return lo - margin, hi + margin


def _count(chart: Chart, R: float, lo, hi, samples: int, seed: int):
    hits = fails = 0
    hit_lo = np.full(chart.p, np.inf)
    hit_hi = np.full(chart.p, -np.inf)
    for c, start in enumerate(range(0, samples, CHUNK)):
        k = min(CHUNK, samples - start)
        X = lo + (hi - lo) * _rng(seed, c).uniform(size=(k, chart.p))
        U, ok = chart.theta_batch(X)
        inside = ok & (chart.norm(U) < R)
        hits += int(inside.sum())
        fails += int((~ok).sum())
        if inside.any():
            hit_lo = np.minimum(hit_lo, X[inside].min(axis=0))
            hit_hi = np.maximum(hit_hi, X[inside].max(axis=0))
    return hits, fails, hit_lo, hit_hi


def ball_volume_mc(chart: Chart, R: float, samples: int, seed: int) -> tuple[float, float, int]:
    """Monte-Carlo volume of ``{x : ||Theta(xbar, x)|| < R}``.

    The sampling box surrounds the image of the ball with a 10% margin; if a
    hit lands in the outer half of that margin the box is enlarged and the
    count repeated.  Returns ``(estimate, stderr, failures)`` where
    ``failures`` counts samples whose Newton solve did not converge (counted
    as outside).
    """
    lo, hi = _bounding_box(chart, R, seed)
    for _ in range(6):
        hits, fails, hlo, hhi = _count(chart, R, lo, hi, samples, seed)
        guard = 0.05 / 1.2 * (hi - lo)
        if hits == 0 or (np.all(hlo > lo + guard) and np.all(hhi < hi - guard)):
            break
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        lo, hi = mid - 1.5 * half, mid + 1.5 * half
    else:
        raise ChartError("ball touches the sampling box after repeated enlargement")
    vol_box = float(np.prod(hi - lo))
    f = hits / samples
    return vol_box * f, vol_box * math.sqrt(f * (1 - f) / samples), fails


@dataclass(frozen=True)
class ExponentFit:
    Q: float | None
    stderr: float | None
    intercept: float | None
    residual: float | None


def fit_exponent(radii, volumes, stderrs) -> ExponentFit:
    """Weighted least squares of ``log V`` on ``log R`` with inverse-variance weights."""
    x = np.log(np.asarray(radii, dtype=float))
    V = np.asarray(volumes, dtype=float)
    if np.any(V <= 0):
        raise ValueError("every volume must be positive to fit an exponent")
    y = np.log(V)
    sig = np.asarray(stderrs, dtype=float) / V
    sig = np.where(sig > 0, sig, 1e-12)
    wts = 1.0 / sig**2
    X = np.stack([x, np.ones_like(x)], axis=1)
    W = X * wts[:, None]
    cov = np.linalg.inv(X.T @ W)
    beta = cov @ (W.T @ y)
    resid = y - X @ beta
    rms = float(np.sqrt(np.sum(wts * resid**2) / max(1, len(x) - 2)))
    return ExponentFit(float(beta[0]), float(np.sqrt(cov[0, 0])), float(beta[1]), rms)


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    base_point: list
    radii: list
    volumes: list
    stderrs: list
    samples: int
    seed: int
    Q_expected: int
    Q_hat: float | None
    Q_stderr: float | None
    fit_residual: float | None
    doubling: list = field(default_factory=list)
    mc_failures: int = 0
    pairs: int = 0
    rho_over_d: list = field(default_factory=list)
    fefferman_phong: list = field(default_factory=list)
    quasi_triangle: float | None = None
    box_in_ball: float | None = None
    ball_in_box: float | None = None
    segments: int = 1

    def to_json(self) -> dict:
        return asdict(self)

    def volume_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["radius", "volume", "stderr", "samples"])
        for R, V, s in zip(self.radii, self.volumes, self.stderrs):
            wr.writerow([repr(float(R)), repr(float(V)), repr(float(s)), self.samples])
        return buf.getvalue()


def sample_pairs(factory: ChartFactory, xbar, count: int, seed: int, spread: float):
    """Points ``eta = E(v, xbar)`` and ``xi = E(u, eta)`` with ``u, v`` in ``Box(spread)``."""
    chart = factory.chart(xbar)
    w = np.array(chart.weights, dtype=float)
    rng = _rng(seed, 2**32 + 1)
    V = rng.uniform(-1, 1, size=(count, chart.p)) * spread**w
    U = rng.uniform(-1, 1, size=(count, chart.p)) * spread**w
    ETA = chart.exp_flow(V)
    XI = factory.flow_from(ETA, U)
    return XI, ETA, U


def fit_reports(factory: ChartFactory, xbar, radii, samples: int, seed: int, pairs: int = 200,
                triples: int = 200, segments: int = 1, workers: int = 1) -> MetricReport:
    """Volumes, fitted exponent, doubling ratios and the distance comparisons.

    Radii are processed by ``workers`` threads; each radius has its own seed,
    so the report does not depend on the worker count.
    """
    chart = factory.chart(xbar)
    radii = [float(R) for R in radii]
    Rv = chart.validity_radius()
    if max(radii) > Rv:
        raise ChartError(f"radius {max(radii)} exceeds the validity radius {Rv}")
    jobs = [(R, seed + 7919 * k) for k, R in enumerate(radii)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda job: ball_volume_mc(chart, job[0], samples, job[1]), jobs))
    vols = [r[0] for r in results]
    ses = [r[1] for r in results]
    fails = sum(r[2] for r in results)
    try:
        fit = fit_exponent(radii, vols, ses)
    except ValueError:
        # a radius without hits: no exponent, the report still records the counts
        fit = ExponentFit(None, None, None, None)
    doubling = []
    for i, R in enumerate(radii):
        if 2 * R in radii:
            j = radii.index(2 * R)
            ratio = vols[j] / vols[i] if vols[i] > 0 else None
            doubling.append({"R": R, "ratio": ratio, "expected": 2.0**chart.Q})
    rep = MetricReport(
        base_point=[float(v) for v in chart.xbar], radii=radii, volumes=vols, stderrs=ses,
        samples=samples, seed=seed, Q_expected=chart.Q, Q_hat=fit.Q, Q_stderr=fit.stderr,
        fit_residual=fit.residual, doubling=doubling, mc_failures=fails, segments=segments,
    )
    if pairs and factory.mode == "smooth":
        spread = Rv / 4
        XI, ETA, U = sample_pairs(factory, xbar, pairs, seed, spread)
        rho = quasidistance_many(factory, XI, ETA)
        d = np.array([cc_distance_upper(factory, e, x, segments).value for x, e in zip(XI, ETA)])
        eu = np.linalg.norm(XI - ETA, axis=1)
        ratio = rho / d
        rep.pairs = pairs
        rep.rho_over_d = [float(ratio.min()), float(ratio.max())]
        rep.fefferman_phong = [float(np.min(d / eu)), float(np.max(d / eu ** (1.0 / factory.sys.r)))]
        rng = _rng(seed, 2**32 + 2)
        w = np.array(chart.weights, dtype=float)
        Z = factory.flow_from(ETA[:triples], rng.uniform(-1, 1, size=(min(triples, pairs), chart.p)) * spread**w)
        r_xe = rho[:triples]
        r_xz = quasidistance_many(factory, XI[:triples], Z)
        r_ze = quasidistance_many(factory, Z, ETA[:triples])
        rep.quasi_triangle = float(np.max(r_xe / (r_xz + r_ze)))
        # ball-box: box points are in a rho-ball of the returned multiple, ball points in a box
        Rb = Rv / 2
        B = _rng(seed, 2**32 + 3).uniform(-1, 1, size=(2000, chart.p)) * Rb**w
        rep.box_in_ball = float(np.max(chart.norm(B)) / Rb)
        inside = B[chart.norm(B) < Rb]
        rep.ball_in_box = float(np.max(box_scale(chart.weights, inside)) / Rb) if len(inside) else 0.0
    return rep
