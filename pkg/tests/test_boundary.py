import math

import numpy as np
import pytest

from boundary import (BusemannCheck, ComponentTrack, QDRecord, SyntheticOracle, TorusOracle, boundary_point,
                      busemann_limit_check, convergent_rays_check, detour_cost, detour_metric, dual_eval, eq_eval,
                      eq_squared, flip_probe_sup, flip_sup, horofunction_eval, merge_proportional, modular_equivalent,
                      modular_multistart, modular_solve, optimal_path_check, origami_record, probe_sup,
                      same_boundary_point, same_part, smaller_inequality, strictness_search, sup_ratio,
                      tail_converges, torus_record, unique_optimal_grid)
from errors import InputError, NonConvergenceError, NormalizationError, RepresentationMismatchError
from flat_torus import TorusPoint, torus_probes, unit_torus_qd
from foliation import ComponentBasis, ComponentSum, ProbeFamily, TorusLine, intersection
from square_tiled import build_origami, cylinder_decomposition

PHI = (1 + math.sqrt(5)) / 2
PAIR = ComponentBasis.disjoint_basis(['G#0', 'G#1'])


def record(coeffs, areas=(1, 1)):
    return QDRecord(PAIR, tuple(coeffs), tuple(areas))


@pytest.fixture
def square_qd():
    return unit_torus_qd(TorusPoint(1j), (0, 1))


def test_record_validation():
    with pytest.raises(InputError):
        record((0, 0))
    with pytest.raises(InputError):
        record((1, 1), (1, 0))
    crossing = ComponentBasis.disjoint_basis(['a', 'b'])
    crossing = ComponentBasis(crossing.components, ((0, 1), (1, 0)))
    with pytest.raises(InputError):
        QDRecord(crossing, (1, 1), (1, 1))
    # 支撑外的分量可以与 V(q) 相交
    assert QDRecord(crossing, (1, 0), (1, 0)).support == (0,)


def test_record_json_and_normalization():
    r = record((1, 2))
    assert QDRecord.from_json(r.to_json()) == r
    assert QDRecord.from_json({'coeffs': ['1/2', 1], 'areas': [2, 1]}).total_area == 2
    bad = r.to_json()
    bad['total_area'] = 5
    with pytest.raises(InputError):
        QDRecord.from_json(bad)
    n = r.normalized()
    assert n.is_unit
    assert n.ratios() == pytest.approx(r.ratios())


def test_torus_record_matches_closed_form(square_qd):
    rec = torus_record(square_qd)
    assert rec.is_unit
    for F in (TorusLine((1, 1)), TorusLine((1, 2)), TorusLine((3, -1), 2)):
        assert eq_squared(rec, F) == pytest.approx(float(intersection(F, square_qd.vertical)) ** 2)
    assert eq_eval(rec, TorusLine((1, 1), 3)) == pytest.approx(3 * eq_eval(rec, TorusLine((1, 1))))


def test_origami_record_e_squared():
    s = build_origami([2, 3, 1], [1, 3, 2])
    rec = origami_record(s)
    cyl = cylinder_decomposition(s, (1, 0))[0]
    F = ComponentSum.unit(rec.basis, cyl.core)
    assert eq_squared(rec, F) == pytest.approx(3.0)
    assert flip_sup(rec, F) == pytest.approx(eq_squared(rec, F))
    assert sorted(float(a) for a in rec.areas if a) == [1.0, 2.0]


def test_pairing_vector_input():
    r = record((1, 1))
    assert eq_squared(r, [1, 2]) == pytest.approx(5.0)
    with pytest.raises(RepresentationMismatchError):
        eq_squared(r, [1, 2, 3])
    with pytest.raises(InputError):
        eq_squared(r, [-1, 2])


def test_dual_and_flip(square_qd):
    rec = torus_record(square_qd)
    assert float(dual_eval(rec, square_qd.vertical)) == pytest.approx(1.0)
    assert not dual_eval(rec, TorusLine((1, 1))).is_finite
    F = TorusLine((1, 1))
    assert flip_sup(rec, F) == pytest.approx(eq_squared(rec, F))
    assert flip_probe_sup(rec, F, torus_probes(3)) <= flip_sup(rec, F) + 1e-12


def test_smaller_inequality_and_strictness():
    lhs, rhs, ok = smaller_inequality([1, 2], [1, 1])
    assert (lhs, rhs, ok) == (pytest.approx(4.5), pytest.approx(5.0), True)
    assert strictness_search(np.array([[1, 1], [1, 2]]), [1, 1]) == 1
    assert strictness_search(np.array([[1, 2], [1, 2]]), [1, 1]) is None
    with pytest.raises(InputError):
        smaller_inequality([1], [0])


def test_modular_equivalence():
    q1, q2, q3 = record((1, 1)), record((1, 2)), record((2, 2))
    res = modular_equivalent(q1, q3)
    assert res
    assert float(res.constant) == pytest.approx(0.5)
    assert not modular_equivalent(q1, q2)
    assert modular_equivalent(q1, record((1, 0))).reason == "支撑不同"
    assert same_boundary_point(q1, q3)
    assert not same_boundary_point(q1, q2)
    assert boundary_point(q2).ratios == (0.5, 1.0)


def test_detour_metric_example():
    q1, q2 = record((1, 1)), record((1, 2))
    assert float(sup_ratio(q1, q2)[0]) == pytest.approx(1.0)
    value, arg = sup_ratio(q2, q1)
    assert (float(value), arg) == (pytest.approx(2.0), 1)
    assert float(detour_metric(q1, q2)) == pytest.approx(0.5 * math.log(2))
    # 与缩放无关
    assert float(detour_metric(q1, record((2, 4)))) == pytest.approx(0.5 * math.log(2))
    assert float(detour_metric(q1, q1)) == 0.0
    assert same_part(q1, q2)


def test_disjoint_supports_are_different_parts():
    a, b = record((1, 0)), record((0, 1))
    assert not sup_ratio(a, b)[0].is_finite
    assert not detour_metric(a, b).is_finite
    assert not same_part(a, b)


def test_detour_cost_and_horofunction(square_qd):
    rec = torus_record(square_qd)
    probes = torus_probes(3)
    b = TorusPoint(1j)
    assert float(detour_cost(rec, rec, probes, b)) == pytest.approx(0.0, abs=1e-12)
    assert horofunction_eval(rec, b, probes, b) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NormalizationError):
        detour_cost(record((1, 2)), record((1, 1)), probes, b)
    with pytest.raises(InputError):
        probe_sup(rec, b, ProbeFamily(()))


def test_modular_solve_golden():
    target = record((1, 1))
    sol = modular_solve(target, None, SyntheticOracle([[1, 1], [1, 2]]))
    assert sol.lambda_star.max() == pytest.approx(1.0)
    assert sol.lambda_star[1] / sol.lambda_star[0] == pytest.approx(PHI, rel=1e-8)
    assert sol.residual < 1e-10
    multi = modular_multistart(target, None, SyntheticOracle([[1, 1], [1, 2]]), starts=4, seed=0)
    assert len(multi.solutions) == 4
    assert multi.spread < 1e-6


def test_modular_solve_budget_exhausted():
    with pytest.raises(NonConvergenceError) as info:
        modular_solve(record((1, 1)), None, SyntheticOracle([[1, 1], [1, 2]]), max_iter=1)
    assert info.value.exit_code == 3
    assert info.value.residuals


def test_modular_solve_rejects_bad_input():
    with pytest.raises(InputError):
        SyntheticOracle([[1, -1], [1, 1]])
    with pytest.raises(InputError):
        modular_solve(record((1, 1)), None, SyntheticOracle([[1, 1], [1, 2]]), start=[1, 0])
    with pytest.raises(InputError):
        TorusOracle(PAIR)


def test_torus_oracle_single_component(square_qd):
    rec = torus_record(square_qd)
    sol = modular_solve(rec, TorusPoint(complex(0.3, 1.4)), TorusOracle(rec.basis))
    assert sol.lambda_star.tolist() == [1.0]


def test_optimal_path(square_qd):
    df = optimal_path_check(square_qd, [0.0, 1.0, 2.0], torus_probes(3))
    assert list(df.columns) == ['t', 'psi', 'expected', 'error']
    assert df['error'].max() < 1e-9


def test_unique_optimal_grid(square_qd):
    res = unique_optimal_grid(square_qd, 1.0, torus_probes(3), [-0.5, 0.0, 0.5], [0.2, 0.5, 1.0, 2.0])
    assert res.points == 12
    assert res.ray_violation < 1e-9
    assert res.off_ray_margin > 0.05


def test_convergent_rays(square_qd):
    other = unit_torus_qd(TorusPoint(complex(0.5, 2.0)), (0, 1))
    df = convergent_rays_check(square_qd, other, [0.0, 1.0, 3.0, 5.0])
    assert df['distance'].is_monotonic_decreasing
    assert df['distance'].iloc[-1] < 1e-3
    with pytest.raises(InputError):
        convergent_rays_check(square_qd, unit_torus_qd(TorusPoint(1j), (1, 0)), [0.0])


def test_busemann_statuses():
    limit = record((1, 1))
    seq = [record((2, 1)), record((1, 1))]
    split = [ComponentTrack('a', (1, 0)), ComponentTrack('b', (0, 1))]
    assert busemann_limit_check(seq, split, limit) == BusemannCheck('converges')
    merged = [ComponentTrack('ab', (1, 1))]
    assert busemann_limit_check(seq, merged, limit).to_json() == {'status': 'fails(ii)', 'witness': 'ab'}
    assert busemann_limit_check(seq[:1], split, limit).status == 'fails(i)'
    with pytest.raises(InputError):
        busemann_limit_check(seq, [ComponentTrack('a', (1, 0))], limit)
    with pytest.raises(InputError):
        busemann_limit_check([], split, limit)


def test_busemann_tail_trend():
    limit = record((1, 1))
    split = [ComponentTrack('a', (1, 0)), ComponentTrack('b', (0, 1))]
    approaching = [record((1, 1 + 1 / n)) for n in range(1, 200)]
    assert busemann_limit_check(approaching, split, limit).status == 'converges'
    away = [record((1, 2 + 1 / n)) for n in range(1, 200)]
    assert busemann_limit_check(away, split, limit).status == 'fails(i)'
    assert busemann_limit_check(approaching, split, limit, tail_ratio=0.001).status == 'fails(i)'
    with pytest.raises(InputError):
        busemann_limit_check(approaching, split, limit, window=1)


def test_tail_converges_rules():
    assert tail_converges([1.0, 0.5, 0.0], 1e-9, 5, 0.05)
    assert not tail_converges([1.0, 0.5, math.inf], 1e-9, 5, 0.05)
    assert not tail_converges([1.0, 0.01, 0.02], 1e-9, 2, 0.05)
    assert tail_converges([math.inf, 1.0, 0.5, 0.04], 1e-9, 3, 0.05)
    assert not tail_converges([0.3], 1e-9, 5, 0.05)


def test_merge_proportional_keeps_e_q():
    basis = ComponentBasis.disjoint_basis(['G', '2G'], tags=[TorusLine((0, 1), 1), TorusLine((0, 1), 2)])
    rec = QDRecord(basis, (1, 1), (1, 2))
    merged = merge_proportional(rec)
    assert merged.basis.ids == ('G',)
    assert merged.coeffs == (3,)
    F = TorusLine((1, 0))
    assert eq_squared(rec, F) == pytest.approx(3.0)
    assert eq_squared(merged, F) == pytest.approx(3.0)
    assert merge_proportional(record((1, 1))) == record((1, 1))


def _random_record(rng, n):
    basis = ComponentBasis.disjoint_basis([f'G#{j}' for j in range(n)])
    return QDRecord(basis, tuple(rng.uniform(0.1, 3.0, n).tolist()), tuple(rng.uniform(0.1, 3.0, n).tolist()))


def test_flip_duality_on_random_records():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        q = _random_record(rng, n)
        p = rng.uniform(0.0, 2.0, n).tolist()
        assert flip_sup(q, p) == pytest.approx(eq_squared(q, p), rel=1e-10, abs=1e-12)


def test_detour_metric_properties_on_random_records():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        a, b, c = (_random_record(rng, n) for _ in range(3))
        b = QDRecord(a.basis, b.coeffs, b.areas)
        c = QDRecord(a.basis, c.coeffs, c.areas)
        ab, ba = float(detour_metric(a, b)), float(detour_metric(b, a))
        assert ab == ba
        assert float(detour_metric(a, c)) <= ab + float(detour_metric(b, c)) + 1e-12
        if n > 1:
            assert ab > 0
            assert not modular_equivalent(a, b)
        scaled = QDRecord(a.basis, tuple(2.5 * x for x in a.coeffs), a.areas)
        assert modular_equivalent(a, scaled)
        assert float(detour_metric(a, scaled)) == pytest.approx(0.0, abs=1e-12)
