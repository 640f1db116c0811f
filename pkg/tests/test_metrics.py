import numpy as np
import pytest

from hormander.builtins import abelian, heisenberg
from hormander.geom import ChartFactory
from hormander.metrics import (
    ball_volume_mc,
    box_membership,
    box_scale,
    cc_distance_upper,
    fit_exponent,
    fit_reports,
    quasidistance,
    quasidistance_many,
)


@pytest.fixture(scope="module")
def heis():
    return ChartFactory(heisenberg(), "smooth")


@pytest.fixture(scope="module")
def flat():
    return ChartFactory(abelian(3), "smooth")


# examples


def test_heisenberg_quasidistance_to_origin(heis):
    xi = np.array([0.1, -0.2, 0.09])
    assert quasidistance(heis, xi, np.zeros(3)) == pytest.approx(0.1 + 0.2 + 0.3)


def test_abelian_quasidistance_is_l1(flat):
    x, y = np.array([0.1, 0.2, -0.3]), np.array([-0.2, 0.0, 0.1])
    assert quasidistance(flat, x, y) == pytest.approx(np.abs(x - y).sum())
    many = quasidistance_many(flat, np.array([x, y]), np.array([y, x]))
    assert many == pytest.approx([np.abs(x - y).sum()] * 2)


def test_box_membership_and_scale(heis):
    ch = heis.chart(np.zeros(3))
    assert box_membership(ch, 0.5, [0.4, -0.4, 0.2])
    assert not box_membership(ch, 0.5, [0.4, -0.4, 0.3])
    assert box_scale(ch.weights, [[0.1, 0.2, 0.09]]) == pytest.approx([0.3])


def test_cc_single_segment_closed_form(heis, flat):
    b = cc_distance_upper(heis, np.zeros(3), np.array([0.1, -0.05, 0.04]))
    assert b.value == pytest.approx(0.2) and b.segments == 1
    b = cc_distance_upper(flat, np.zeros(3), np.array([0.1, -0.3, 0.2]))
    assert b.value == pytest.approx(0.3)
    assert cc_distance_upper(flat, np.ones(3) * 0.1, np.ones(3) * 0.1).value == 0.0


def test_cc_bound_does_not_grow_with_segments(heis):
    rng = np.random.default_rng(4)
    for _ in range(2):
        y = rng.uniform(-1, 1, 3) * np.array([0.2, 0.2, 0.04])
        one = cc_distance_upper(heis, np.zeros(3), y, segments=1)
        two = cc_distance_upper(heis, np.zeros(3), y, segments=2, bisections=5)
        assert two.value <= one.value + 1e-12


def test_fit_exponent_exact_power_law():
    R = np.array([0.05, 0.1, 0.2, 0.4])
    V = 3.0 * R**4.0
    fit = fit_exponent(R, V, V * 0.01)
    assert fit.Q == pytest.approx(4.0, abs=1e-10)
    assert fit.intercept == pytest.approx(np.log(3.0))


def test_abelian_volume_matches_simplex(oracle, flat):
    ch = flat.chart(np.zeros(3))
    est, se, fails = ball_volume_mc(ch, 0.2, 100_000, seed=3)
    want = oracle["simplex_volume_R3_r0.2"]
    assert fails == 0
    assert abs(est - want) <= 3 * se


def test_volume_is_deterministic(heis):
    ch = heis.chart(np.zeros(3))
    a = ball_volume_mc(ch, 0.1, 20_000, seed=9)
    b = ball_volume_mc(ch, 0.1, 20_000, seed=9)
    c = ball_volume_mc(ch, 0.1, 20_000, seed=10)
    assert a == b and a != c


def test_reports_independent_of_worker_count(flat):
    kw = dict(radii=[0.1, 0.2], samples=8192, seed=5, pairs=10, triples=10)
    r1 = fit_reports(flat, np.zeros(3), workers=1, **kw)
    r2 = fit_reports(flat, np.zeros(3), workers=2, **kw)
    assert r1.to_json() == r2.to_json()
    assert r1.volume_csv().splitlines()[0] == "radius,volume,stderr,samples"


def test_heisenberg_report_bounds(heis):
    rep = fit_reports(heis, np.zeros(3), [0.1, 0.2, 0.4], 40_000, seed=1, pairs=40, triples=40)
    assert abs(rep.Q_hat - 4) < 0.3
    lo, hi = rep.rho_over_d
    assert 0 < lo <= hi and hi / lo <= 20
    assert rep.quasi_triangle <= 3
    assert rep.box_in_ball >= 1 and rep.ball_in_box <= 1
