"""
扩展实数 - 非负实数加上 +∞

E*_q、sup_ratio、detour 等量会合法地取到 +∞，
这里用显式的变体表示，而不是用 float('inf') 当哨兵值。
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import Dict, Union

Number = Union[int, float, Fraction]


@total_ordering
@dataclass(frozen=True)
class ExtReal:
    """有限值或 +∞"""
    value: Number = 0
    infinite: bool = False

    @classmethod
    def inf(cls) -> "ExtReal":
        return cls(0, True)

    @classmethod
    def of(cls, value: Union[Number, "ExtReal"]) -> "ExtReal":
        if isinstance(value, ExtReal):
            return value
        return cls(value, False)

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    def __float__(self) -> float:
        return float('inf') if self.infinite else float(self.value)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExtReal):
            if isinstance(other, (int, float, Fraction)):
                other = ExtReal.of(other)
            else:
                return NotImplemented
        if self.infinite or other.infinite:
            return self.infinite == other.infinite
        return self.value == other.value

    def __lt__(self, other) -> bool:
        other = ExtReal.of(other)
        if self.infinite:
            return False
        if other.infinite:
            return True
        return self.value < other.value

    def __hash__(self) -> int:
        return hash(('inf',)) if self.infinite else hash(self.value)

    def __add__(self, other) -> "ExtReal":
        other = ExtReal.of(other)
        if self.infinite or other.infinite:
            return ExtReal.inf()
        return ExtReal(self.value + other.value)

    __radd__ = __add__

    def __mul__(self, c: Number) -> "ExtReal":
        # 仅支持乘以正常数
        if self.infinite:
            return ExtReal.inf()
        return ExtReal(self.value * c)

    __rmul__ = __mul__

    def to_json(self) -> Union[float, Dict[str, bool]]:
        if self.infinite:
            return {"inf": True}
        return float(self.value)

    @classmethod
    def from_json(cls, data) -> "ExtReal":
        if isinstance(data, dict):
            if data.get("inf") is True:
                return cls.inf()
            raise ValueError(f"无法解析的扩展实数: {data}")
        return cls.of(data)

    def __repr__(self) -> str:
        return "ExtReal(+inf)" if self.infinite else f"ExtReal({self.value})"


def ext_max(*values) -> ExtReal:
    """若干扩展实数的最大值"""
    best = ExtReal.of(values[0])
    for v in values[1:]:
        v = ExtReal.of(v)
        if v > best:
            best = v
    return best
