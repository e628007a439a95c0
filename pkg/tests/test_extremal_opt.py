import math

import numpy as np
import pytest
from scipy.optimize import minimize

import extremal_opt
from errors import InputError, NonConvergenceError
from extreal import ExtReal
from extremal_opt import (RatioProgram, batch_evaluate, discrete_ext_length, distance_estimate, extlen_table,
                          lower_bound_witness, optimise_quadratic_ratio, ratio_at)
from flat_torus import TorusPoint, torus_probes, unit_torus_qd
from foliation import TorusLine
from square_tiled import (Origami, Rectangulation, build_origami, cylinder_decomposition, geodesic_flow,
                          rectangle_torus)
from straighten import Chord, ChordCurve, core_chord_curve

TORUS = Origami((0,), (0,))


def _horizontal_core(R):
    s = R.origami
    return core_chord_curve(s, cylinder_decomposition(s, (1, 0))[0])


def test_ratio_closed_form():
    p = RatioProgram((1, 2), (1, 1))
    sol = optimise_quadratic_ratio(p)
    assert float(sol.value) == pytest.approx(5.0)
    assert sol.argmax.tolist() == [0.5, 1.0]
    assert float(ratio_at(p, sol.argmax)) == pytest.approx(5.0)


def _simplex_grid(dim, steps):
    """单纯形上分母为 steps 的全部格点"""
    if dim == 1:
        yield (1.0,)
        return
    for i in range(steps + 1):
        for rest in _simplex_grid(dim - 1, steps - i):
            yield (i / steps,) + tuple(x * (steps - i) / steps for x in rest)


def test_ratio_closed_form_on_random_programs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        dim = int(rng.integers(1, 6))
        a = rng.random(dim)
        b = rng.uniform(0.1, 1.0, dim)
        p = RatioProgram(tuple(a), tuple(b))
        sol = optimise_quadratic_ratio(p)
        value = float(sol.value)
        assert value == pytest.approx(float(np.sum(a * a / b)), rel=1e-12)
        assert float(ratio_at(p, sol.argmax)) == pytest.approx(value, rel=1e-12)
        # 随机可行点都不超过闭式最大值
        for x in rng.random((100, dim)):
            assert float(ratio_at(p, x)) <= value * (1 + 1e-12)
        # 单纯形网格搜索的最好点再局部加细，收敛到同一个值
        grid = [np.array(x) for x in _simplex_grid(dim, 8) if any(x)]
        start = max(grid, key=lambda x: float(ratio_at(p, x)))
        assert float(ratio_at(p, start)) <= value * (1 + 1e-12)
        res = minimize(lambda x: -float(a @ x) ** 2 / float(b @ (x * x)), start, method='L-BFGS-B',
                       bounds=[(1e-12, None)] * dim, options={'ftol': 1e-15, 'gtol': 1e-12, 'maxiter': 1000})
        assert -res.fun == pytest.approx(value, rel=1e-6)


def test_ratio_unbounded_direction():
    sol = optimise_quadratic_ratio(RatioProgram((1, 1), (0, 1)))
    assert sol.unbounded
    assert sol.argmax.tolist() == [1.0, 0.0]
    assert sol.to_json()['unbounded'] is True


def test_ratio_validation():
    with pytest.raises(InputError):
        RatioProgram((1,), (1, 2))
    with pytest.raises(InputError):
        RatioProgram((-1, 1), (1, 1))
    with pytest.raises(InputError):
        RatioProgram((0, 1), (0, 1))
    with pytest.raises(InputError):
        ratio_at(RatioProgram((1, 2), (1, 1)), [-1, 0])


def test_lower_bound_witness_matches_e_squared():
    s = build_origami([2, 3, 1], [1, 3, 2])
    cyl = cylinder_decomposition(s, (1, 0))[0]
    for t in (0.0, 1.5, 4.0):
        assert lower_bound_witness(s, t, None, cyl) == pytest.approx(3.0)
    assert lower_bound_witness(s, 0.0, (1.0, 1.0), cyl) == pytest.approx(3.0)
    assert lower_bound_witness(s, 0.0, (0.0, 0.0), cyl) == 0.0
    with pytest.raises(InputError):
        lower_bound_witness(s, 0.0, (1.0,), cyl)


def test_discrete_ext_length_unit_torus():
    R = Rectangulation.from_origami(TORUS)
    est = discrete_ext_length(R, _horizontal_core(R), k=4, max_iter=5)
    assert float(est.upper) == pytest.approx(1.0)
    assert est.lower <= float(est.upper)
    assert est.lower == pytest.approx(1.0, rel=1e-6)
    assert est.grid == 4
    assert est.to_json()['methods'][0] == 'iterative-reweighting'


def test_discrete_ext_length_rectangle():
    R = rectangle_torus(1, 2)
    est = discrete_ext_length(R, _horizontal_core(R), k=4, max_iter=5)
    assert float(est.upper) == pytest.approx(0.5)
    assert est.lower <= 0.5


@pytest.mark.parametrize('direction', [(1, 1), (2, 3), (1, 4), (-1, 2)])
def test_discrete_ext_length_off_axis_torus_classes(direction):
    R = Rectangulation.from_origami(TORUS)
    c = core_chord_curve(TORUS, cylinder_decomposition(TORUS, direction)[0])
    exact = direction[0] ** 2 + direction[1] ** 2
    est = discrete_ext_length(R, c, k=8, max_iter=20)
    assert est.lower <= exact * (1 + 1e-9)
    assert est.lower >= 0.95 * exact
    assert float(est.upper) == pytest.approx(exact)
    assert est.converged


def test_discrete_ext_length_flowed_torus_diagonal():
    R = geodesic_flow(TORUS, 1.0)
    c = core_chord_curve(TORUS, cylinder_decomposition(TORUS, (1, 1))[0])
    exact = math.exp(2.0) + math.exp(-2.0)
    est = discrete_ext_length(R, c, k=8, max_iter=20)
    assert est.lower == pytest.approx(exact, rel=1e-9)
    assert float(est.upper) == pytest.approx(exact, rel=1e-9)


def test_discrete_ext_length_lower_weakly_increases_with_k():
    R = rectangle_torus(1, 2)
    c = _horizontal_core(R)
    lowers = [discrete_ext_length(R, c, k=k, max_iter=3).lower for k in (4, 8, 16, 32, 64)]
    assert all(b >= a - 1e-12 for a, b in zip(lowers, lowers[1:]))
    assert lowers[-1] == pytest.approx(0.5, rel=0.05)


def test_discrete_ext_length_two_cylinder_origami_far_along_flow():
    s = build_origami([2, 3, 1], [1, 3, 2])
    t = 3.0
    R = geodesic_flow(s, t)
    est = discrete_ext_length(R, _horizontal_core(R), k=32, max_iter=5)
    scale = math.exp(-2 * t)
    assert scale * est.lower == pytest.approx(3.0, rel=0.05)
    assert scale * float(est.upper) == pytest.approx(3.0, rel=0.05)
    assert est.converged
    assert est.lower_method in ('cylinder-metric', 'holonomy')
    assert est.to_json()['lower_method'] == est.lower_method


def test_discrete_ext_length_open_bracket_runs_grid():
    s = build_origami([2, 1, 3], [3, 2, 1])
    R = Rectangulation.from_origami(s)
    cyl = max(cylinder_decomposition(s, (1, 0)), key=lambda c: c.circumference)
    est = discrete_ext_length(R, core_chord_curve(s, cyl), k=4, max_iter=3)
    assert not est.converged
    assert est.iterations == 3
    assert len(est.history) == 3
    assert 1.5 - 1e-12 <= est.lower <= float(est.upper)
    assert float(est.upper) == pytest.approx(2.0)


def test_discrete_ext_length_raises_when_bracket_crosses(monkeypatch):
    R = Rectangulation.from_origami(TORUS)
    monkeypatch.setattr(extremal_opt, '_cylinder_upper', lambda R, target: ExtReal(0.5))
    with pytest.raises(NonConvergenceError) as exc:
        discrete_ext_length(R, _horizontal_core(R), k=4, max_iter=2)
    assert '0.5' in str(exc.value)
    assert exc.value.residuals


def test_discrete_ext_length_rejects_null_class():
    R = Rectangulation.from_origami(TORUS)
    null = ChordCurve((Chord(0, (0, 0.5), (0.5, 1)), Chord(0, (0.5, 1), (0, 0.5))))
    with pytest.raises(InputError):
        discrete_ext_length(R, null, k=4, max_iter=2)


def test_extlen_table_follows_flow():
    R = Rectangulation.from_origami(TORUS)
    df = extlen_table(R, _horizontal_core(R), [0.0, 0.5], k=4, max_iter=2)
    assert list(df.columns) == ['t', 'lower', 'upper', 'converged']
    assert len(df) == 2
    assert df['upper'].iloc[1] == pytest.approx(math.e)


def test_distance_estimate_on_tori():
    x, y = TorusPoint(1j), TorusPoint(4j)
    assert distance_estimate(x, y, torus_probes(1)) == pytest.approx(math.log(2))
    assert distance_estimate(x, x, torus_probes(3)) == 0.0


def test_batch_evaluate_columns_and_gap():
    q = unit_torus_qd(TorusPoint(1j), (0, 1))
    Fs = [TorusLine((1, 1)), TorusLine((1, 2))]
    df = batch_evaluate(q, [0.0, 1.0, 2.0], Fs)
    assert len(df) == 6
    assert list(df.columns)[:3] == ['t', 'p', 'q']
    assert np.allclose(df['gap'], df['gap_closed_form'], atol=1e-10)
    parallel = batch_evaluate(q, [0.0, 1.0, 2.0], Fs, workers=3)
    assert np.allclose(parallel['gap'], df['gap'])
