"""Batched Dormand-Prince 5(4) integration on ``tau in [0, 1]``.

All trajectories in a batch share the step sequence, so results depend on
the batch composition.  Callers that need reproducibility across batch
sizes split their work into fixed-size chunks.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

CHUNK = 4096

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class IntegrationError(ArithmeticError):
    """Step size underflow, step budget exhausted or non-finite state."""


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    atol: float = 1e-12,
    rtol: float = 1e-12,
    h0: float = 0.25,
    max_steps: int = 20000,
) -> np.ndarray:
    """State at ``tau = 1`` of the autonomous system ``y' = f(y)``.

    Parameters
    ----------
    f : callable
        Maps an array of shape ``(B, d)`` to the same shape.
    y0 : ndarray, shape (B, d)
    atol, rtol : float
        Per-component error tolerances; the step is accepted when the
        worst trajectory in the batch meets them.

    Returns
    -------
    ndarray, shape (B, d)
    """
    y = np.array(y0, dtype=float)
    if y.size == 0:
        return y
    t, h = 0.0, min(h0, 1.0)
    k1 = f(y)
    steps = 0
    while t < 1.0:
        if steps >= max_steps:
            raise IntegrationError("step budget exhausted")
        h = min(h, 1.0 - t)
        ks = [k1]
        for s in range(1, 7):
            ys = y + h * sum(a * k for a, k in zip(_A[s], ks) if a)
            ks.append(f(ys))
        y_new = ys
        err = h * sum(e * k for e, k in zip(_E, ks) if e)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = np.abs(err) / scale
        if not np.all(np.isfinite(y_new)):
            if h < 1e-12:
                raise IntegrationError("non-finite state")
            h *= 0.25
            steps += 1
            continue
        en = float(np.max(np.sqrt(np.mean(ratio**2, axis=-1))))
        if en <= 1.0:
            t = 1.0 if 1.0 - (t + h) < 1e-15 else t + h
            y = y_new
            k1 = ks[6]
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** (-0.2)))
        else:
            fac = max(0.2, 0.9 * en ** (-0.2))
        h *= fac
        if h < 1e-14 and t < 1.0:
            raise IntegrationError("step size underflow")
        steps += 1
    return y


def integrate_chunked(f_factory, y0: np.ndarray, chunk: int = CHUNK, **kw) -> np.ndarray:
    """Integrate in fixed-size chunks; ``f_factory(sl)`` builds the rhs for rows ``sl``."""
    out = np.empty_like(np.asarray(y0, dtype=float))
    for start in range(0, len(y0), chunk):
        sl = slice(start, start + chunk)
        out[sl] = integrate(f_factory(sl), y0[sl], **kw)
    return out
