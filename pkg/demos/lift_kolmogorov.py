"""Lift the Kolmogorov pair to a free system and measure the homogeneous dimension of its balls."""

import numpy as np

from hormander.builtins import kolmogorov
from hormander.geom import ChartFactory
from hormander.lifting import lift
from hormander.metrics import fit_reports
from hormander.vf import freeness_check, span_rank


def main():
    sys0 = kolmogorov()
    for s in range(1, sys0.r + 1):
        v = freeness_check(sys0, [0, 0], s)
        print(f"original, weight {s}: free={v.free} certificate={v.certificate}")

    res = lift(sys0, [0, 0])
    print("added variables:", res.m)
    print("drift X0 =", res.system.drift.to_strings(2))
    print("X1 =", res.system.field(1).to_strings(2))
    x = [0, 0, 0]
    print("lifted free at weight r:", freeness_check(res.system, x, res.system.r).free,
          "span:", span_rank(res.system, x))

    fac = ChartFactory(res.system, "smooth")
    rep = fit_reports(fac, np.zeros(3), [0.05, 0.1, 0.2, 0.4], samples=200_000, seed=1, pairs=0)
    print(f"fitted Q = {rep.Q_hat:.3f} (expected {rep.Q_expected})")


if __name__ == "__main__":
    main()
