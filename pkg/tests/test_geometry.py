import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stadium_eth.geometry import BilliardGeometry, BoxGeometry

from oracles import stadium_moment_exact

G = BilliardGeometry()


def test_contains_examples():
    assert G.contains((0.5, 0.5))
    assert not G.contains((2.0, 1.0))
    s = math.sqrt(2) / 2
    assert G.contains((1 + s - 1e-9, s - 1e-9))


def test_closed_region_includes_boundary():
    assert G.contains((0.0, 0.0))
    assert G.contains((2.0, 0.0))
    assert G.contains((0.3, 1.0))


@pytest.mark.parametrize("l,h,expected", [(2, 1, 1 + math.pi / 4), (3, 1, 2 + math.pi / 4)])
def test_area(l, h, expected):
    assert BilliardGeometry(l, h).area() == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("a", [0.5, 2.0, 3.0])
def test_scale_covariance(a):
    ga = BilliardGeometry(scale=a)
    assert ga.area() == pytest.approx(a**2 * G.area(), rel=1e-14)
    for i, j in [(0, 0), (1, 0), (2, 0), (1, 2)]:
        assert ga.region_moment((i, j)) == pytest.approx(a ** (i + j + 2) * G.region_moment((i, j)),
                                                         rel=1e-12)


def test_pair_in_domain_examples():
    assert G.pair_in_domain((0.5, 0.5), (0, 0))
    assert not G.pair_in_domain((0.5, 0.5), (2, 0))
    # both endpoints (1.25, 0.5) and (0.75, 0.5) lie in the region
    assert G.contains((1.25, 0.5)) and G.contains((0.75, 0.5))
    assert G.pair_in_domain((1.0, 0.5), (0.5, 0))


@given(st.floats(-0.5, 2.5), st.floats(-0.5, 1.5))
def test_pair_with_zero_separation_is_membership(x, y):
    assert G.pair_in_domain((x, y), (0.0, 0.0)) == G.contains((x, y))


@pytest.mark.parametrize("ij", [(0, 0), (1, 0), (2, 0)])
def test_moments_against_analytic_split(ij):
    assert G.region_moment(ij) == pytest.approx(stadium_moment_exact(*ij), rel=1e-13)


def test_first_moment_value():
    assert G.region_moment((1, 0)) == pytest.approx(5 / 6 + math.pi / 4, rel=1e-14)
    assert G.region_moment((2, 0)) == pytest.approx(1 + 5 * math.pi / 16, rel=1e-14)


def test_moment_matches_monte_carlo():
    rng = np.random.default_rng(7)
    x, y = G.sample_uniform(2_000_000, rng)
    f = x * x * y
    est = G.area() * f.mean()
    se = G.area() * f.std() / math.sqrt(f.size)
    assert abs(est - G.region_moment((2, 1))) < 3 * se


def test_area_rule_integrates_area_and_stays_inside():
    r = G.area_rule(20)
    assert r.w.sum() == pytest.approx(G.area(), rel=1e-14)
    assert np.all(G.contains_many(r.x, r.y))


def test_boundary_rule_length():
    b = G.boundary_rule(30.0)
    assert b.w.sum() == pytest.approx(G.free_perimeter(), rel=1e-13)
    assert np.all(b.r_dot_n > 0)


def test_invalid_dimensions():
    with pytest.raises(ValueError):
        BilliardGeometry(1.0, 1.0)
    with pytest.raises(ValueError):
        BilliardGeometry(2.0, 1.0, scale=0.0)


def test_dict_round_trip():
    g = BilliardGeometry(3.0, 1.5, 2.0)
    assert BilliardGeometry.from_dict(g.to_dict()) == g


def test_box_moments():
    b = BoxGeometry(2.0, 1.0)
    assert b.region_moment((1, 0)) == pytest.approx(2.0)
    assert b.area_rule(10).w.sum() == pytest.approx(2.0)
