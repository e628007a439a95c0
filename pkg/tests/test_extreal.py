from fractions import Fraction

import pytest

from extreal import ExtReal, ext_max


def test_infinity_dominates_every_finite_value():
    inf = ExtReal.inf()
    assert ExtReal(10 ** 9) < inf
    assert not inf < ExtReal(3)
    assert inf == ExtReal.inf()
    assert inf != ExtReal(0)


def test_arithmetic_absorbs_infinity():
    assert ExtReal(1) + ExtReal.inf() == ExtReal.inf()
    assert ExtReal.inf() * 2 == ExtReal.inf()
    assert ExtReal(Fraction(1, 3)) + Fraction(2, 3) == ExtReal(1)
    assert 3 * ExtReal(2) == ExtReal(6)


def test_float_conversion():
    assert float(ExtReal.inf()) == float('inf')
    assert float(ExtReal(Fraction(1, 4))) == 0.25


def test_json_encoding():
    assert ExtReal.inf().to_json() == {"inf": True}
    assert ExtReal(2).to_json() == 2.0
    assert ExtReal.from_json({"inf": True}) == ExtReal.inf()
    assert ExtReal.from_json(0.5) == ExtReal(0.5)
    with pytest.raises(ValueError):
        ExtReal.from_json({"inf": False})


def test_ext_max():
    assert ext_max(1, ExtReal(3), 2) == ExtReal(3)
    assert ext_max(1, ExtReal.inf()) == ExtReal.inf()
