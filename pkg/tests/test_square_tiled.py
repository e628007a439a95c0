import math
from fractions import Fraction

import pytest

from errors import InputError
from square_tiled import (Origami, Rectangulation, build_origami, core_intersection, core_segments,
                          critical_length, cylinder_decomposition, geodesic_flow, parse_permutation,
                          random_origami, rectangle_torus, vertical_cylinders, vertical_intersections,
                          weighted_rectangulation)


@pytest.fixture
def l_shape():
    # 三个正方形排成 L：1-2-3 一行，2、3 竖直互粘
    return build_origami([2, 3, 1], [1, 3, 2])


def test_parse_permutation_formats():
    assert parse_permutation([2, 3, 1]) == (1, 2, 0)
    assert parse_permutation("(1 2 3)") == (1, 2, 0)
    assert parse_permutation("(2 3)", 3) == (0, 2, 1)
    assert parse_permutation("()", 2) == (0, 1)
    with pytest.raises(InputError):
        parse_permutation([1, 1, 2])
    with pytest.raises(InputError):
        parse_permutation("(1 2)(2 3)")


def test_cycle_notation_builds_same_origami(l_shape):
    assert build_origami("(1 2 3)", "(2 3)") == l_shape


def test_disconnected_surface_is_rejected():
    with pytest.raises(InputError):
        Origami((0, 1), (0, 1))
    with pytest.raises(InputError):
        Origami((0, 1), (0,))


def test_census(l_shape):
    census = l_shape.census()
    assert census['genus'] == 2
    assert census['vertex_count'] == 1
    assert census['singularities'] == [{'vertex': 0, 'cone_angle_multiple': 3, 'squares': [1, 2, 3]}]
    torus = Origami((0,), (0,))
    assert torus.genus == 1
    assert torus.census()['singularities'] == []


def test_json_round_trip(l_shape):
    data = l_shape.to_json()
    assert data == {'n': 3, 'h': [2, 3, 1], 'v': [1, 3, 2]}
    assert Origami.from_json(data) == l_shape
    with pytest.raises(InputError):
        Origami.from_json({'h': [1]})


def test_vertical_and_horizontal_cylinders(l_shape):
    verticals = vertical_cylinders(l_shape)
    assert [c.area for c in verticals] == [1, 2]
    assert [c.circumference for c in verticals] == pytest.approx([1.0, 2.0])
    horizontals = cylinder_decomposition(l_shape, (1, 0))
    assert len(horizontals) == 1
    assert horizontals[0].area == 3
    assert horizontals[0].holonomy == (3, 0)


@pytest.mark.parametrize("direction", [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2)])
def test_cylinder_areas_fill_the_surface(l_shape, direction):
    cyls = cylinder_decomposition(l_shape, direction)
    assert sum(c.area for c in cyls) == l_shape.n
    for c in cyls:
        assert c.height * c.circumference == pytest.approx(float(c.area))


def test_random_origami_cylinders_fill_the_surface():
    for seed in range(5):
        s = random_origami(6, seed=seed)
        for direction in ((0, 1), (1, 1), (3, 2)):
            assert sum(c.area for c in cylinder_decomposition(s, direction)) == 6


def test_non_primitive_direction_is_rejected(l_shape):
    with pytest.raises(InputError):
        cylinder_decomposition(l_shape, (2, 2))
    with pytest.raises(InputError):
        cylinder_decomposition(l_shape, (0.5, 1))


def test_vertical_intersections_of_horizontal_core(l_shape):
    horizontal = cylinder_decomposition(l_shape, (1, 0))[0]
    assert vertical_intersections(l_shape, horizontal) == (Fraction(1), Fraction(2))
    segs = core_segments(l_shape, horizontal)
    assert [sq for sq, _, _ in segs] == [0, 1, 2]


def test_core_intersection(l_shape):
    horizontal = cylinder_decomposition(l_shape, (1, 0))[0]
    v0, v1 = vertical_cylinders(l_shape)
    assert core_intersection(l_shape, horizontal, v0) == 1
    assert core_intersection(l_shape, horizontal, v1) == 2
    assert core_intersection(l_shape, v0, v1) == 0


def test_critical_length(l_shape):
    assert critical_length(l_shape, (1, 0)) == pytest.approx(3.0)
    assert critical_length(Origami((0,), (0,)), (1, 0)) == pytest.approx(0.0)


def test_rectangulation_and_flow(l_shape):
    R = Rectangulation.from_origami(l_shape)
    assert R.size == 3
    assert R.area() == 3
    flowed = geodesic_flow(l_shape, 1.0)
    w, h = flowed.cell
    assert w == pytest.approx(math.e)
    assert h == pytest.approx(1 / math.e)
    assert flowed.area() == 3
    assert geodesic_flow(flowed, -1.0).cell == pytest.approx((1.0, 1.0))
    assert R.right(0) == 1 and R.top(1) == 2


def test_rectangle_torus_modulus():
    R = rectangle_torus(1, 2)
    assert R.torus_modulus() == pytest.approx(2j)
    assert geodesic_flow(R, math.log(2) / 2).torus_modulus() == pytest.approx(1j)
    with pytest.raises(InputError):
        Rectangulation.from_origami(Origami((1, 0), (0, 1))).torus_modulus()


def test_rectangulation_json(l_shape):
    data = Rectangulation.from_origami(l_shape).to_json()
    assert len(data['rects']) == 3
    assert len(data['gluings']) == 6
    assert data['t'] == 0.0


def test_weighted_metric_area_bound(l_shape):
    eps = 0.01
    metric = weighted_rectangulation(l_shape, (0, 1), [1.0, 1.0], eps)
    assert metric.theta_area == pytest.approx(3.0)
    assert metric.critical_length == pytest.approx(3.0)
    assert metric.collar_area == pytest.approx(eps * 3.0)
    # 每个正方形两侧各一条领口：ε·L 加上 θ 与领口密度的交叉项 2·L·θ·√ε
    assert metric.eps_constant == pytest.approx(3.0 + 6.0 * math.sqrt(eps), rel=1e-9)
    assert metric.area <= metric.theta_area + metric.eps_constant * eps + 1e-12


def test_weighted_metric_rejects_bad_eps(l_shape):
    with pytest.raises(InputError):
        weighted_rectangulation(l_shape, (0, 1), [1.0, 1.0], 1.5)
    with pytest.raises(InputError):
        weighted_rectangulation(l_shape, (0, 1), [1.0], 0.1)


def test_weighted_metric_diagonal_direction(l_shape):
    eps = 0.01
    metric = weighted_rectangulation(l_shape, (1, 1), [1.0, 1.0], eps)
    R = metric.rectangulation
    assert R.size == 6
    assert float(R.area()) == pytest.approx(3.0)
    assert sorted(float(a) for a in metric.component_areas) == pytest.approx([1.0, 2.0])
    assert metric.critical_length == pytest.approx(3 * math.sqrt(2))
    assert metric.theta_area == pytest.approx(3.0)
    assert metric.eps_constant == pytest.approx(3 * math.sqrt(2) * (1 + 2 * math.sqrt(eps)), rel=1e-9)
    assert metric.area <= metric.theta_area + metric.eps_constant * eps + 1e-12
    assert sorted(h for _, h in R.base_sizes)[::3] == pytest.approx([math.sqrt(2), 2 * math.sqrt(2)])


def test_weighted_metric_diagonal_direction_rejects_wide_collars(l_shape):
    with pytest.raises(InputError):
        weighted_rectangulation(l_shape, (1, 1), [1.0, 1.0], 0.99)
