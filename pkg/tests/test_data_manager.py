import json
import os

import pandas as pd
import pytest

import data_manager
from config import CALC_CONFIG
from errors import InputError
from flat_torus import TorusPoint
from square_tiled import Origami, Rectangulation


def test_load_json_input_errors(tmp_path):
    with pytest.raises(InputError):
        data_manager.load_json_input(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{not json', encoding='utf-8')
    with pytest.raises(InputError):
        data_manager.load_json_input(str(bad))


def test_parse_surface_kinds():
    assert data_manager.parse_surface({'type': 'torus', 'tau': [0.0, 2.0]}) == TorusPoint(2j)
    s = data_manager.parse_surface({'h': [2, 3, 1], 'v': [1, 3, 2]})
    assert isinstance(s, Origami) and s.n == 3
    R = data_manager.parse_surface({'type': 'rectangle_torus', 'w': 1, 'h': 2})
    assert R.torus_modulus() == 2j
    for bad in ({'type': 'rectangle_torus', 'w': 1}, {'type': 'sphere'}, [1, 2]):
        with pytest.raises(InputError):
            data_manager.parse_surface(bad)


def test_as_rectangulation():
    s = Origami((0,), (0,))
    assert isinstance(data_manager.as_rectangulation(s), Rectangulation)
    with pytest.raises(InputError):
        data_manager.as_rectangulation(TorusPoint(1j))


def test_load_curve_and_record(write_json):
    curve = data_manager.load_curve(write_json('c.json', {'chords': [{'rect': 0, 'p': [0, '1/2'], 'q': [1, '1/2']}]}))
    assert len(curve) == 1
    rec = data_manager.load_record(write_json('r.json', {'coeffs': [1, 2], 'areas': [1, 1]}))
    assert rec.total_area == 3
    with pytest.raises(InputError):
        data_manager.load_record(write_json('list.json', [1, 2]))


def test_load_foliation(write_json):
    basis = {'components': [{'id': 'A'}, {'id': 'B'}]}
    one = write_json('one.json', {'basis': basis, 'foliations': [{'id': 'f', 'coeffs': [1, 0]}]})
    assert data_manager.load_foliation(one).coeffs == (1, 0)
    two = write_json('two.json', {
        'basis': basis, 'foliations': [{'id': 'f', 'coeffs': [1, 0]}, {'id': 'g', 'dir': [0, -1]}]})
    assert data_manager.load_foliation(two, 'g').direction == (0, 1)
    with pytest.raises(InputError):
        data_manager.load_foliation(two)
    with pytest.raises(InputError):
        data_manager.load_foliation(one, 'missing')


def test_load_busemann_input(write_json):
    rec = {'coeffs': [1, 1], 'areas': [1, 1]}
    seq, tracks, limit = data_manager.load_busemann_input(write_json('b.json', {
        'sequence': [rec, rec], 'tracks': [{'id': 1, 'limit': [1, 0]}, {'id': 'b', 'limit': [0, 1]}], 'limit': rec}))
    assert len(seq) == 2
    assert tracks[0].id == '1'
    assert limit.coeffs == (1, 1)
    with pytest.raises(InputError):
        data_manager.load_busemann_input(write_json('bad.json', {'sequence': [rec]}))


def test_parse_vector():
    assert data_manager.parse_vector('1, 2,3') == [1.0, 2.0, 3.0]
    assert data_manager.parse_vector('4,5', cast=int) == [4, 5]
    with pytest.raises(InputError):
        data_manager.parse_vector('1,x')


def test_save_json_keeps_unicode(tmp_path):
    path = str(tmp_path / 'out.json')
    assert data_manager.save_json({'说明': 'λ/ι'}, path) == path
    text = open(path, encoding='utf-8').read()
    assert '说明' in text and 'λ/ι' in text
    assert not os.path.exists(path + '.tmp')


def test_save_failures_return_none(tmp_path, capsys):
    missing_dir = str(tmp_path / 'nope' / 'out.json')
    assert data_manager.save_json({}, missing_dir) is None
    assert data_manager.save_csv(pd.DataFrame({'t': [0.0]}), missing_dir) is None
    captured = capsys.readouterr()
    assert '保存' in captured.err
    assert captured.out == ''


def test_csv_format(tmp_path):
    df = pd.DataFrame({'t': [0.0, 1.0], 'gap': [0.5, 0.25]})
    assert data_manager.csv_text(df) == 't,gap\n0.0,0.5\n1.0,0.25\n'
    path = str(tmp_path / 'table.csv')
    data_manager.save_csv(df, path)
    with open(path, 'rb') as f:
        assert b'\r\n' not in f.read()


def test_manifest(tmp_path, write_json):
    src = write_json('in.json', {'a': 1})
    m = data_manager.RunManifest('distance')
    m.add_input(src)
    m.add_input(str(tmp_path / 'missing.json'))
    m.add_input(None)
    assert list(m.inputs) == [src]
    assert m.inputs[src] == data_manager.file_digest(src)
    assert len(m.inputs[src]) == 64
    out = str(tmp_path / 'manifest.json')
    assert data_manager.write_manifest(m, out) == out
    data = json.load(open(out, encoding='utf-8'))
    assert data['command'] == 'distance'
    assert '_t0' not in data
    assert data['wall_clock'] >= 0
    assert data['config']['tolerances'] == CALC_CONFIG['tolerances']
    assert data['config']['busemann']['window'] == CALC_CONFIG['busemann']['window']


def test_manifest_config_is_a_snapshot(monkeypatch):
    m = data_manager.RunManifest('extlen')
    monkeypatch.setitem(CALC_CONFIG, 'seed', CALC_CONFIG['seed'] + 1)
    assert m.config['seed'] == CALC_CONFIG['seed'] - 1
