"""Group law, left-invariant fields, an exponential chart and ball volumes for the Heisenberg pair."""

from fractions import Fraction

import numpy as np

from hormander.builtins import heisenberg
from hormander.geom import ChartFactory
from hormander.liealg import bch_product, group_structure, left_invariant_field
from hormander.metrics import cc_distance_upper, fit_reports, quasidistance


def main():
    g = group_structure(n=2, with_x0=False, r=2)
    print("basis:", g.basis.elements, "Q =", g.Q)
    u, v = [Fraction(1), Fraction(2), Fraction(3)], [Fraction(4), Fraction(5), Fraction(6)]
    print("u * v =", [str(c) for c in bch_product(g, u, v)])
    for I in g.basis.elements:
        print(f"Y{I} =", left_invariant_field(g, I).to_strings())

    fac = ChartFactory(heisenberg(), "smooth")
    chart = fac.chart(np.zeros(3))
    print("validity radius:", chart.validity_radius())
    y = np.array([0.1, -0.05, 0.02])
    print("rho(y, 0) =", quasidistance(fac, y, np.zeros(3)))
    print("control bound, 1 and 2 segments:",
          cc_distance_upper(fac, np.zeros(3), y).value,
          cc_distance_upper(fac, np.zeros(3), y, segments=2, bisections=5).value)

    rep = fit_reports(fac, np.zeros(3), [0.05, 0.1, 0.2, 0.4], samples=100_000, seed=0, pairs=50)
    print(f"fitted Q = {rep.Q_hat:.3f} +- {rep.Q_stderr:.3f}")
    for d in rep.doubling:
        print(f"  |B(2R)|/|B(R)| at R={d['R']}: {d['ratio']:.2f} (2^Q = {d['expected']:.0f})")
    print("rho / d range:", rep.rho_over_d, "quasi-triangle:", rep.quasi_triangle)


if __name__ == "__main__":
    main()
