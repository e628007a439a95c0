"""
平坦环面模型 - 上半平面上的闭式极值长度、Teichmüller 距离、测地射线与 Hubbard–Masur 映射

约定：沿射线 R(q;t)，V(q) 的横截测度乘以 e^t，H(q) 的横截测度乘以 e^(-t)。
"""
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from errors import InputError, NormalizationError
from foliation import ProbeFamily, TorusLine, intersection

UNIT_AREA_TOL = 1e-12


@dataclass(frozen=True)
class TorusPoint:
    """环面模 tau（格 Z + tau·Z），Im(tau) > 0"""
    tau: complex

    def __post_init__(self):
        object.__setattr__(self, 'tau', complex(self.tau))
        if not self.tau.imag > 0:
            raise InputError(f"环面模必须在上半平面: tau = {self.tau}")

    def to_json(self) -> dict:
        return {'tau': [self.tau.real, self.tau.imag]}

    @classmethod
    def from_json(cls, data: dict) -> "TorusPoint":
        try:
            re, im = data['tau']
        except (KeyError, TypeError, ValueError):
            raise InputError(f"环面点格式应为 {{tau:[re,im]}}: {data}")
        return cls(complex(float(re), float(im)))


def _lattice_vector(x: TorusPoint, direction) -> complex:
    p, q = direction
    return float(p) + float(q) * x.tau


def torus_ext_length(x: TorusPoint, F: TorusLine) -> float:
    """Ext_x(F) = w²·|p + q·tau|² / Im(tau)"""
    z = _lattice_vector(x, F.direction)
    w = float(F.weight)
    return w * w * abs(z) ** 2 / x.tau.imag


def torus_ext_array(x: TorusPoint, P: np.ndarray, Q: np.ndarray, W=1.0) -> np.ndarray:
    """对一批方向 (P[k], Q[k]) 向量化计算极值长度"""
    z = P + Q * x.tau
    return np.asarray(W) ** 2 * np.abs(z) ** 2 / x.tau.imag


def torus_distance(x: TorusPoint, y: TorusPoint) -> float:
    """
    Teichmüller 距离 = 上半平面双曲距离的一半 = (1/2)·log sup_F Ext_y(F)/Ext_x(F)

    用 asinh 形式避免近距离时 acosh 的精度损失。
    """
    s = abs(x.tau - y.tau) / (2.0 * math.sqrt(x.tau.imag * y.tau.imag))
    return math.asinh(s)


def torus_ext_sup(x: TorusPoint, G: TorusLine) -> float:
    """sup_F i(G,F)²/Ext_x(F) = Ext_x(G)"""
    return torus_ext_length(x, G)


def torus_hm_oracle(x: TorusPoint, F: TorusLine) -> TorusLine:
    """
    环面 Hubbard–Masur 映射 tau_x(F)

    返回 H，使 (F, H) 是 x 处某个二次微分的竖直/水平叶状结构：
    方向为 F 在平坦度量下的正交方向，权重使 i(F, H) = Ext_x(F)。
    """
    z = _lattice_vector(x, F.direction)
    iz = 1j * z
    b = iz.imag / x.tau.imag
    a = iz.real - b * x.tau.real
    norm = max(abs(a), abs(b))
    a, b = a / norm, b / norm
    probe = TorusLine((a, b), 1.0)
    det = float(intersection(TorusLine(F.direction, 1), probe))
    weight = torus_ext_length(x, F) / (float(F.weight) * det)
    return TorusLine((a, b), weight)


@dataclass(frozen=True)
class TorusQD:
    """环面上的二次微分：竖直、水平叶状结构与面积"""
    base: TorusPoint
    vertical: TorusLine
    horizontal: TorusLine
    area: float

    def __post_init__(self):
        if float(intersection(TorusLine(self.vertical.direction, 1),
                              TorusLine(self.horizontal.direction, 1))) == 0:
            raise InputError("竖直与水平方向不能平行")
        pairing = float(intersection(self.vertical, self.horizontal))
        if abs(pairing - self.area) > 1e-9 * max(1.0, self.area):
            raise InputError(f"i(V,H) = {pairing} 与面积 {self.area} 不一致")

    @classmethod
    def at(cls, x: TorusPoint, vertical: TorusLine) -> "TorusQD":
        """x 处以给定竖直叶状结构确定的二次微分（面积 = Ext_x(V)）"""
        horizontal = torus_hm_oracle(x, vertical)
        return cls(x, vertical, horizontal, torus_ext_length(x, vertical))

    @property
    def is_unit(self) -> bool:
        return abs(self.area - 1.0) <= UNIT_AREA_TOL


def unit_torus_qd(x: TorusPoint, direction) -> TorusQD:
    """x 处竖直方向为 direction 的单位面积二次微分"""
    z = _lattice_vector(x, TorusLine(direction).direction)
    weight = math.sqrt(x.tau.imag) / abs(z)
    q = TorusQD.at(x, TorusLine(direction, weight))
    # 舍入误差下面积可能差 1 ulp
    return TorusQD(q.base, q.vertical, q.horizontal, 1.0)


def torus_ray(q: TorusQD, t: float) -> TorusPoint:
    """
    Teichmüller 射线 R(q;t)

    参数：
        q: 单位面积的环面二次微分
        t: 射线参数（t >= 0，负值按反向射线处理）

    返回：
        拉伸后格的模 tau_t
    """
    if not q.is_unit:
        raise NormalizationError(f"torus_ray 需要单位面积二次微分，当前面积 {q.area}")
    zv = _lattice_vector(q.base, q.vertical.direction)
    u = zv / abs(zv)
    stretch_u, stretch_n = math.exp(-t), math.exp(t)

    def deform(z: complex) -> complex:
        w = z * u.conjugate()
        return complex(w.real * stretch_u, w.imag * stretch_n) * u

    omega1 = deform(1.0 + 0j)
    omega2 = deform(q.base.tau)
    return TorusPoint(omega2 / omega1)


def ray_qd(q: TorusQD, t: float) -> TorusQD:
    """R(q;t) 处的终端二次微分：竖直测度乘 e^t，水平乘 e^(-t)"""
    x_t = torus_ray(q, t)
    vertical = TorusLine(q.vertical.direction, q.vertical.weight * math.exp(t))
    horizontal = TorusLine(q.horizontal.direction, q.horizontal.weight * math.exp(-t))
    return TorusQD(x_t, vertical, horizontal, q.area)


def horizontal_part(q: TorusQD, F: TorusLine) -> float:
    """i(F, H(q))：沿射线以 e^(-t) 衰减的那一部分"""
    return float(intersection(F, q.horizontal))


def horizontal_gap(q: TorusQD, F: TorusLine, t: float) -> float:
    """e^(-2t)·Ext_{R(q;t)}(F) - E_q²(F) 的闭式值 i(F, H(q))²·e^(-4t)"""
    h = horizontal_part(q, F)
    return h * h * math.exp(-4.0 * t)


def torus_probes(N: int) -> ProbeFamily:
    """|p|,|q| <= N 的本原方向（符号归一后去重），权重 1"""
    if N < 1:
        raise InputError(f"探针上限必须 >= 1: {N}")
    members: List[TorusLine] = []
    for p in range(0, N + 1):
        for q in range(-N, N + 1):
            if p == 0 and q <= 0:
                continue
            if math.gcd(p, abs(q)) != 1:
                continue
            members.append(TorusLine((p, q), 1))
    return ProbeFamily(tuple(members), f"torus-N{N}")


def probe_arrays(probes: ProbeFamily) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """把环面直线探针族拆成 (P, Q, W) 数组"""
    P = np.array([float(m.direction[0]) for m in probes.members])
    Q = np.array([float(m.direction[1]) for m in probes.members])
    W = np.array([float(m.weight) for m in probes.members])
    return P, Q, W


def matched_ray_distance(q: TorusQD, q2: TorusQD, t: float) -> float:
    """
    两条竖直方向相同的射线在匹配时间上的距离

    s(t) 取使 V 的本原类在两条射线上极值长度相等的时间。
    """
    core = TorusLine(q.vertical.direction, 1)
    shift = 0.5 * math.log(torus_ext_length(q2.base, core) / torus_ext_length(q.base, core))
    return torus_distance(torus_ray(q, t), torus_ray(q2, t + shift))
