import json
import math

import pytest

import run
from config import CALC_CONFIG
from flat_torus import torus_probes

TORUS = {'type': 'torus', 'tau': [0.0, 1.0]}
PAIR_11 = {'coeffs': [1, 1], 'areas': [1, 1]}
PAIR_12 = {'coeffs': [1, 2], 'areas': [1, 1]}


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_verify_horizontal_gap_torus_passes(write_json, capsys):
    code = run.main(['verify-thm1', '--surface', write_json('t.json', TORUS)])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.strip().split('\n')
    assert lines[0] == 't,lhs,rhs,gap'
    assert len(lines) == 7


def test_verify_horizontal_gap_short_grid_fails(write_json, capsys):
    code = run.main(['verify-thm1', '--surface', write_json('t.json', TORUS), '--ts', '0,1', '--json'])
    payload = _json_out(capsys)
    assert code == 1
    assert payload['command'] == 'verify-thm1'
    last = payload['rows'][-1]
    assert last['gap'] == pytest.approx(math.exp(-4.0), rel=1e-9)
    assert last['rhs'] == pytest.approx(1.0)


def test_invalid_json_is_input_error(tmp_path, capsys):
    bad = tmp_path / 'bad.json'
    bad.write_text('[oops', encoding='utf-8')
    code = run.main(['verify-thm1', '--surface', str(bad)])
    assert code == 2
    assert _json_out(capsys)['error'] == 'input'


def test_unknown_command_returns_usage_code(capsys):
    assert run.main(['no-such-command']) == 2


def test_distance(capsys):
    assert run.main(['distance', '--x', '0,1', '--y', '0,4']) == 0
    payload = _json_out(capsys)
    assert payload['distance'] == pytest.approx(math.log(2))
    assert payload['estimate'] == pytest.approx(math.log(2))


def test_eq_eval_requires_one_foliation(write_json, capsys):
    path = write_json('r.json', PAIR_11)
    assert run.main(['eq-eval', '--record', path]) == 2
    capsys.readouterr()
    assert run.main(['eq-eval', '--record', path, '--pairings', '1,2']) == 0
    payload = _json_out(capsys)
    assert payload['eq_squared'] == pytest.approx(5.0)
    assert payload['flip_sup'] == pytest.approx(5.0)
    assert 'dual' not in payload


def test_eq_eval_from_foliation_file(write_json, capsys):
    gram = [[0, 0, 1], [0, 0, 2], [1, 2, 0]]
    record = write_json('r.json', {'coeffs': [1, 2, 0], 'areas': [1, 1, 1],
                                    'basis_ref': {'ids': ['A', 'B', 'T'], 'gram': gram}})
    folis = write_json('f.json', {
        'schema': 'foliation.v1',
        'basis': {'components': [{'id': 'A'}, {'id': 'B'}, {'id': 'T'}], 'gram': gram},
        'foliations': [{'id': 't', 'coeffs': [0, 0, 1]}, {'id': 'a', 'coeffs': [2, 0, 0]}],
    })
    assert run.main(['eq-eval', '--record', record, '--foliations', folis, '--id', 't']) == 0
    payload = _json_out(capsys)
    assert payload['eq'] == pytest.approx(3.0)
    assert payload['dual'] == {'inf': True}

    assert run.main(['eq-eval', '--record', record, '--foliations', folis, '--id', 'a']) == 0
    payload = _json_out(capsys)
    assert payload['eq'] == pytest.approx(0.0)
    assert payload['flip_sup'] == pytest.approx(0.0)
    assert payload['dual'] == pytest.approx(4.0)

    # 两个叶状结构时必须给 --id
    assert run.main(['eq-eval', '--record', record, '--foliations', folis]) == 2
    assert run.main(['eq-eval', '--record', record, '--foliations', folis, '--id', 'nope']) == 2


def test_detour(write_json, capsys):
    code = run.main(['detour', write_json('a.json', PAIR_11), write_json('b.json', PAIR_12)])
    payload = _json_out(capsys)
    assert code == 0
    assert payload['metric'] == pytest.approx(0.5 * math.log(2))
    assert payload['cost_12'] == pytest.approx(0.0)
    assert payload['cost_21'] == pytest.approx(0.5 * math.log(2))
    assert payload['part'] is True


def test_part_check_disjoint(write_json, capsys):
    a = write_json('a.json', {'coeffs': [1, 0], 'areas': [1, 1]})
    b = write_json('b.json', {'coeffs': [0, 1], 'areas': [1, 1]})
    assert run.main(['part-check', a, b]) == 0
    payload = _json_out(capsys)
    assert payload['part'] is False
    assert payload['metric'] == {'inf': True}
    assert payload['modular_equivalent'] is False


def test_modular_solve_golden(write_json, capsys, tmp_path):
    manifest = str(tmp_path / 'manifest.json')
    code = run.main(['modular-solve', write_json('t.json', PAIR_11), '--oracle', 'synthetic:1,1;1,2',
                     '--manifest', manifest])
    payload = _json_out(capsys)
    assert code == 0
    lam = payload['lambda_star']
    assert lam[1] / lam[0] == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-8)
    saved = json.load(open(manifest, encoding='utf-8'))
    assert saved['command'] == 'modular-solve'
    assert len(saved['inputs']) == 1


def test_modular_solve_budget(write_json, capsys):
    code = run.main(['modular-solve', write_json('t.json', PAIR_11), '--oracle', 'synthetic:1,1;1,2',
                     '--max-iter', '1'])
    payload = _json_out(capsys)
    assert code == 3
    assert payload['error'] == 'nonconvergence'
    assert payload['residuals']


def test_iet_golden(capsys):
    assert run.main(['iet', '--golden', '--steps', '10']) == 0
    payload = _json_out(capsys)
    assert payload['steps'] == 10
    assert payload['winners'] == 'bt' * 5
    assert payload['area'] == pytest.approx(1.0)


def test_iet_classify(write_json, capsys):
    surface = write_json('l.json', {'h': [2, 3, 1], 'v': [1, 3, 2]})
    assert run.main(['iet', '--surface', surface, '--direction', '0,1']) == 0
    assert _json_out(capsys)['kind'] == 'periodic'


def test_straighten(write_json, capsys):
    surface = write_json('s.json', {'h': [1], 'v': [1]})
    curve = write_json('c.json', {'chords': [
        {'rect': 0, 'p': [0, '1/2'], 'q': ['1/2', 1]},
        {'rect': 0, 'p': ['1/2', 0], 'q': ['3/4', 0]},
        {'rect': 0, 'p': ['3/4', 1], 'q': [1, '1/2']},
    ]})
    assert run.main(['straighten', '--surface', surface, '--curve', curve]) == 0
    payload = _json_out(capsys)
    assert payload['moves'] == 3
    assert payload['homotopy_witness'] is True
    assert payload['ok'] is True
    assert 'exit' not in payload
    assert payload['curve']['chords'] == [{'rect': 0, 'p': ['0', '1'], 'q': ['1', '1']}]


def test_cli_overrides_are_restored(capsys):
    before = CALC_CONFIG['probe_cap']
    assert run.main(['distance', '--x', '0,1', '--y', '0,2', '--probes', '3']) == 0
    assert CALC_CONFIG['probe_cap'] == before
    assert _json_out(capsys)['probes'] == len(torus_probes(3))


def test_output_file(write_json, tmp_path, capsys):
    out = str(tmp_path / 'table.csv')
    assert run.main(['verify-thm1', '--surface', write_json('t.json', TORUS), '--ts', '0,5', '-o', out]) == 0
    assert capsys.readouterr().out == ''
    assert open(out, encoding='utf-8').readline().strip() == 't,lhs,rhs,gap'


def test_relative_output_goes_to_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setitem(CALC_CONFIG, 'output_dir', str(tmp_path))
    assert run.main(['distance', '--x', '0,1', '--y', '0,4', '-o', 'd.json', '--manifest', 'm.json']) == 0
    assert capsys.readouterr().out == ''
    with open(tmp_path / 'd.json', encoding='utf-8') as f:
        assert json.load(f)['distance'] == pytest.approx(math.log(2))
    assert (tmp_path / 'm.json').exists()


def test_extlen_on_square_torus(write_json, capsys):
    surface = write_json('s.json', {'type': 'origami', 'h': [1], 'v': [1]})
    code = run.main(['extlen', '--surface', surface, '--ts', '0,0.5', '-k', '4', '--max-iter', '2', '--json'])
    rows = _json_out(capsys)['rows']
    assert code == 0
    assert [r['t'] for r in rows] == [0.0, 0.5]
    assert rows[0]['upper'] == pytest.approx(1.0)
    assert rows[1]['upper'] == pytest.approx(math.e)


def test_busemann_check(write_json, capsys):
    data = {
        'sequence': [PAIR_12, PAIR_11],
        'tracks': [{'id': 'a', 'limit': [1, 0]}, {'id': 'b', 'limit': [0, 1]}],
        'limit': PAIR_11,
    }
    assert run.main(['busemann-check', write_json('ok.json', data)]) == 0
    assert _json_out(capsys) == {'status': 'converges', 'witness': None}

    data['tracks'] = [{'id': 'ab', 'limit': [1, 1]}]
    assert run.main(['busemann-check', write_json('merged.json', data)]) == 0
    assert _json_out(capsys) == {'status': 'fails(ii)', 'witness': 'ab'}


def test_busemann_check_tail_trend_options(write_json, capsys):
    data = {
        'sequence': [{'coeffs': [1, 1 + 1 / n], 'areas': [1, 1]} for n in range(1, 200)],
        'tracks': [{'id': 'a', 'limit': [1, 0]}, {'id': 'b', 'limit': [0, 1]}],
        'limit': PAIR_11,
    }
    path = write_json('tail.json', data)
    assert run.main(['busemann-check', path]) == 0
    assert _json_out(capsys)['status'] == 'converges'
    assert run.main(['busemann-check', path, '--tail-ratio', '0.001']) == 0
    assert _json_out(capsys)['status'] == 'fails(i)'
    assert run.main(['busemann-check', path, '--window', '1']) == 2
    assert _json_out(capsys)['error'] == 'input'


def test_verify_two_cylinder_origami_far_along_flow(write_json, capsys):
    surface = write_json('l.json', {'h': [2, 3, 1], 'v': [1, 3, 2]})
    code = run.main(['verify-thm1', '--surface', surface, '--ts', '0,3', '-k', '8', '--json'])
    rows = _json_out(capsys)['rows']
    assert code == 0
    assert rows[-1]['rhs'] == pytest.approx(3.0)
    assert rows[-1]['lhs'] == pytest.approx(3.0, rel=1e-9)
    assert all(r['converged'] for r in rows)


def test_verify_unconverged_estimate_exits_nonconvergence(write_json, capsys):
    surface = write_json('l.json', {'h': [2, 1, 3], 'v': [3, 2, 1]})
    code = run.main(['verify-thm1', '--surface', surface, '--ts', '0', '-k', '4', '--max-iter', '1'])
    payload = _json_out(capsys)
    assert code == 3
    assert payload['error'] == 'nonconvergence'
    assert payload['residuals']


def test_verify_cylinder_index_out_of_range(write_json, capsys):
    surface = write_json('l.json', {'h': [2, 3, 1], 'v': [1, 3, 2]})
    assert run.main(['verify-thm1', '--surface', surface, '--cylinder', '99']) == 2
    assert _json_out(capsys)['error'] == 'input'


def test_failed_output_write_exits_output_error(write_json, tmp_path, capsys):
    out = str(tmp_path / 'no-such-dir' / 'table.csv')
    code = run.main(['verify-thm1', '--surface', write_json('t.json', TORUS), '--ts', '0,5', '-o', out])
    captured = capsys.readouterr()
    assert code == 1
    assert json.loads(captured.out)['error'] == 'output'
    assert '保存 CSV 失败' in captured.err


def test_manifest_records_config(tmp_path, capsys):
    path = str(tmp_path / 'm.json')
    assert run.main(['distance', '--x', '0,1', '--y', '0,4', '--manifest', path]) == 0
    capsys.readouterr()
    with open(path, encoding='utf-8') as f:
        manifest = json.load(f)
    assert manifest['config']['probe_cap'] == CALC_CONFIG['probe_cap']


def test_straighten_unrepaired_exits_one(write_json, capsys, monkeypatch):
    surface = write_json('s.json', {'h': [1], 'v': [1]})
    curve = write_json('c.json', {'chords': [
        {'rect': 0, 'p': [0, '1/2'], 'q': ['1/2', 1]},
        {'rect': 0, 'p': ['1/2', 0], 'q': [0, '1/2']},
    ]})
    monkeypatch.setattr('straighten._fix_short', lambda R, chords, l: False)
    assert run.main(['straighten', '--surface', surface, '--curve', curve]) == 1
    payload = _json_out(capsys)
    assert payload['ok'] is False
    assert len(payload['residual']) == 2
