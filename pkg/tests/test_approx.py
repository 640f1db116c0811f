from fractions import Fraction

import numpy as np
import pytest

from hormander.approx import (
    LAMBDAS,
    box_grid,
    geometric_probes,
    holder_exponent_estimate,
    jacobian_check,
    order_table,
    orders_csv,
    remainder_field,
    theta_jacobian,
    theta_jacobian_fd,
    unit_directions,
    weight_order_estimate,
)
from hormander.builtins import abelian, heisenberg, perturbed_heisenberg
from hormander.geom import make_chart
from hormander.liealg import group_structure, group_system


@pytest.fixture(scope="module")
def g():
    return group_structure(2, False, 2)


@pytest.fixture(scope="module")
def smooth_chart():
    return make_chart(perturbed_heisenberg(), [0.0, 0.0, 0.0])


def test_group_system_remainder_vanishes(g):
    ch = make_chart(group_system(g, region=((-2.0,) * 3, (2.0,) * 3)), [0.0] * 3)
    U = np.random.default_rng(0).uniform(-0.3, 0.3, size=(20, 3))
    for I in g.basis.elements:
        assert np.max(np.abs(remainder_field(ch, g, I, U))) <= 1e-9


def test_heisenberg_remainder_vanishes(g):
    ch = make_chart(heisenberg(), [0.0] * 3)
    rows = order_table(ch, g, unit_directions(g, 2, 0))
    assert rows and all(r.verdict == "vanishing" for r in rows)


def test_smooth_perturbation_orders_pass(g, smooth_chart):
    rows = order_table(smooth_chart, g, unit_directions(g, 2, 1))
    assert all(r.passed for r in rows)
    assert any(r.verdict == "pass" for r in rows)
    csv = orders_csv(rows).splitlines()
    assert csv[0] == "I,J,slope,floor,residual,verdict" and len(csv) == len(rows) + 1


def test_nonsmooth_floor_uses_alpha(g):
    ch = make_chart(perturbed_heisenberg(Fraction(1, 2)), [0.0] * 3, "regularized")
    d = unit_directions(g, 1, 2)[0]
    est = weight_order_estimate(ch, g, (1,), (1, 2), d)
    assert est.floor == pytest.approx(0.5 - 1 + 2)
    assert est.passed


def test_order_estimate_argument_checks(g, smooth_chart):
    with pytest.raises(ValueError):
        weight_order_estimate(smooth_chart, g, (1,), (1,), [1.0, 1.0, 1.0])
    d = unit_directions(g, 1, 0)[0]
    with pytest.raises(ValueError):
        weight_order_estimate(smooth_chart, g, (1,), (1,), d, lambdas=LAMBDAS[:3])


def test_unit_directions_have_unit_norm(g):
    from hormander.liealg import homogeneous_norm

    for d in unit_directions(g, 5, 3):
        assert homogeneous_norm(g, d) == pytest.approx(1.0)


def test_holder_estimates():
    probes = geometric_probes([0.0], [1.0])
    sq = holder_exponent_estimate(lambda x: np.sqrt(np.abs(x)), probes)
    assert sq.exponent == pytest.approx(0.5, abs=1e-6) and not sq.exact
    lin = holder_exponent_estimate(lambda x: 3 * x, probes)
    assert lin.exponent == pytest.approx(1.0)
    flat = holder_exponent_estimate(lambda x: np.ones(2), probes)
    assert flat.exact and flat.exponent is None
    with pytest.raises(ValueError):
        holder_exponent_estimate(lambda x: x, probes[:10])


def test_theta_jacobian_methods_agree(smooth_chart):
    x = smooth_chart.exp_flow([0.1, -0.05, 0.02])
    assert theta_jacobian(smooth_chart, x) == pytest.approx(theta_jacobian_fd(smooth_chart, x), abs=1e-8)


def test_box_grid_shape(smooth_chart):
    U = box_grid(smooth_chart, 0.5, per_axis=3)
    assert U.shape == (27, 3)
    assert np.max(np.abs(U[:, 2])) == pytest.approx(0.25)


def test_abelian_jacobian_deviation_is_zero():
    ch = make_chart(abelian(3), [0.1, 0.2, 0.3])
    rep = jacobian_check(ch, box_grid(ch, 0.5))
    assert rep.K == 0 and rep.max_deviation == 0
    assert rep.product_error <= 1e-7


@pytest.mark.parametrize("make, mode", [(heisenberg, "smooth"), (perturbed_heisenberg, "smooth"),
                                        (lambda: perturbed_heisenberg(Fraction(1, 2)), "regularized")])
def test_jacobian_density(make, mode):
    s = make()
    ch = make_chart(s, [0.0] * s.p, mode)
    rep = jacobian_check(ch, box_grid(ch, ch.validity_radius() / 2))
    assert np.isfinite(rep.K) and rep.product_error <= 1e-7
    assert set(rep.to_json()) >= {"c", "K", "c_times_J_minus_1"}
