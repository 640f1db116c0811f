"""Regularized charts for a Hölder perturbation: remainder decay slopes and Hölder dependence on the base point."""

from fractions import Fraction

import numpy as np

from hormander.approx import (
    geometric_probes,
    holder_exponent_estimate,
    order_table,
    theta_jacobian,
    unit_directions,
)
from hormander.builtins import perturbed_heisenberg
from hormander.geom import ChartFactory
from hormander.liealg import group_structure


def main():
    sys = perturbed_heisenberg(Fraction(1, 2))
    print("X1 =", sys.field(1).to_strings())
    fac = ChartFactory(sys, "regularized")
    chart = fac.chart(np.zeros(3))
    g = group_structure(2, False, 2)
    rows = order_table(chart, g, unit_directions(g, 2, seed=0))
    for r in rows[:9]:
        slope = "-" if r.slope is None else f"{r.slope:.2f}"
        print(f"I={r.I} J={r.J} slope={slope} floor={r.floor:.2f} {r.verdict}")
    print("all pass:", all(r.passed for r in rows))

    x0 = np.array([0.1, 0.1, 0.1])
    probes = geometric_probes(np.zeros(3), np.eye(3)[0])
    h1 = holder_exponent_estimate(lambda b: fac.chart(b).theta(x0), probes)
    h2 = holder_exponent_estimate(lambda b: theta_jacobian(fac.chart(b), x0).ravel(), probes)
    print(f"Hölder exponent of the base point map: Theta {h1.exponent:.3f}, Jacobian {h2.exponent:.3f}")


if __name__ == "__main__":
    main()
