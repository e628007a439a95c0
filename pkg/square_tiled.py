"""
方格曲面（origami）- 单位正方形按右邻 h、上邻 v 两个置换粘合

提供：奇点普查、有理方向柱面分解、矩形剖分与 Teichmüller 测地流、
构造性加权度量（柱面权重 + 临界图领口）。
内部一律 0 起始编号，JSON 中使用 1 起始的一行记法。
"""
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InputError

Perm = Tuple[int, ...]
Number = Union[int, float, Fraction]

SIDES = ('left', 'right', 'bottom', 'top')
OPPOSITE = {'left': 'right', 'right': 'left', 'bottom': 'top', 'top': 'bottom'}


# -----------------------
# 置换工具
# -----------------------
def parse_permutation(spec, n: Optional[int] = None) -> Perm:
    """
    解析置换

    参数：
        spec: 1 起始的一行记法列表，或轮换记法字符串如 "(1 2 3)(4)"
        n   : 轮换记法下的元素个数（缺省取出现的最大元素）

    返回：
        0 起始的置换元组
    """
    if isinstance(spec, str):
        cycles = re.findall(r'\(([^()]*)\)', spec)
        if not cycles and spec.strip():
            raise InputError(f"无法解析轮换记法: {spec}")
        parsed = []
        for body in cycles:
            items = [int(tok) for tok in re.split(r'[\s,]+', body.strip()) if tok]
            parsed.append(items)
        top = max((x for c in parsed for x in c), default=0)
        size = n if n is not None else top
        if top > size:
            raise InputError(f"轮换中的元素 {top} 超出 n = {size}")
        perm = list(range(size))
        seen = set()
        for cyc in parsed:
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                if a < 1 or a in seen:
                    raise InputError(f"轮换记法不合法: {spec}")
                seen.add(a)
                perm[a - 1] = b - 1
        return tuple(perm)
    try:
        perm = tuple(int(x) - 1 for x in spec)
    except (TypeError, ValueError):
        raise InputError(f"置换必须是整数列表: {spec}")
    if sorted(perm) != list(range(len(perm))):
        raise InputError(f"不是 1..{len(perm)} 上的置换: {list(spec)}")
    return perm


def _inverse(p: Perm) -> Perm:
    inv = [0] * len(p)
    for i, x in enumerate(p):
        inv[x] = i
    return tuple(inv)


def _power(p: Perm, p_inv: Perm, i: int, k: int) -> int:
    if k >= 0:
        for _ in range(k):
            i = p[i]
    else:
        for _ in range(-k):
            i = p_inv[i]
    return i


def _cycles(p: Perm) -> List[List[int]]:
    seen = [False] * len(p)
    out = []
    for i in range(len(p)):
        if seen[i]:
            continue
        cyc = []
        j = i
        while not seen[j]:
            seen[j] = True
            cyc.append(j)
            j = p[j]
        out.append(cyc)
    return out


# -----------------------
# Origami
# -----------------------
@dataclass(frozen=True)
class Origami:
    """n 个单位正方形，h(i) 为右邻，v(i) 为上邻"""
    h: Perm
    v: Perm

    def __post_init__(self):
        object.__setattr__(self, 'h', tuple(int(x) for x in self.h))
        object.__setattr__(self, 'v', tuple(int(x) for x in self.v))
        if len(self.h) != len(self.v):
            raise InputError(f"h、v 长度不一致: {len(self.h)} != {len(self.v)}")
        n = len(self.h)
        if n == 0:
            raise InputError("origami 至少需要一个正方形")
        for name, p in (('h', self.h), ('v', self.v)):
            if sorted(p) != list(range(n)):
                raise InputError(f"{name} 不是置换")
        reached = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in (self.h[i], self.v[i], self.h_inv[i], self.v_inv[i]):
                if j not in reached:
                    reached.add(j)
                    stack.append(j)
        if len(reached) != n:
            raise InputError(f"曲面不连通：从正方形 1 只能到达 {len(reached)}/{n} 个正方形")

    @property
    def n(self) -> int:
        return len(self.h)

    @cached_property
    def h_inv(self) -> Perm:
        return _inverse(self.h)

    @cached_property
    def v_inv(self) -> Perm:
        return _inverse(self.v)

    @cached_property
    def commutator(self) -> Perm:
        """c = v∘h∘v⁻¹∘h⁻¹：把左下角顶点相同的正方形逆时针串起来"""
        return tuple(self.v[self.h[self.v_inv[self.h_inv[i]]]] for i in range(self.n))

    @cached_property
    def vertices(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(c) for c in _cycles(self.commutator))

    @cached_property
    def vertex_of(self) -> Tuple[int, ...]:
        """正方形左下角所在的顶点编号"""
        out = [0] * self.n
        for vid, cyc in enumerate(self.vertices):
            for i in cyc:
                out[i] = vid
        return tuple(out)

    @cached_property
    def singular(self) -> Tuple[bool, ...]:
        """正方形左下角是否为锥角 > 2π 的奇点"""
        return tuple(len(self.vertices[self.vertex_of[i]]) > 1 for i in range(self.n))

    @property
    def genus(self) -> int:
        euler = len(self.vertices) - self.n
        return 1 - euler // 2

    def census(self) -> Dict:
        """奇点普查：锥角以 2π 的倍数记"""
        return {
            'n': self.n,
            'genus': self.genus,
            'vertex_count': len(self.vertices),
            'singularities': [
                {'vertex': vid, 'cone_angle_multiple': len(cyc), 'squares': [i + 1 for i in cyc]}
                for vid, cyc in enumerate(self.vertices) if len(cyc) > 1
            ],
        }

    def reflect(self) -> "Origami":
        """关于对角线反射（交换 h 与 v）"""
        return Origami(self.v, self.h)

    def to_json(self) -> Dict:
        return {'n': self.n, 'h': [x + 1 for x in self.h], 'v': [x + 1 for x in self.v]}

    @classmethod
    def from_json(cls, data: Dict) -> "Origami":
        try:
            return build_origami(data['h'], data['v'], data.get('n'))
        except (KeyError, TypeError) as e:
            raise InputError(f"origami.v1 格式错误: {e}")


def build_origami(h, v, n: Optional[int] = None) -> Origami:
    """由两个置换（一行记法列表或轮换字符串）构造并校验 origami"""
    if n is None and (isinstance(h, str) or isinstance(v, str)):
        sizes = []
        for spec in (h, v):
            sizes.append(len(parse_permutation(spec)) if isinstance(spec, str) else len(spec))
        n = max(sizes)
    hp = parse_permutation(h, n)
    vp = parse_permutation(v, n)
    if n is not None and (len(hp) != n or len(vp) != n):
        raise InputError(f"置换长度与 n = {n} 不一致")
    return Origami(hp, vp)


def random_origami(n: int, seed: int = 0, max_tries: int = 1000) -> Origami:
    """随机连通 origami（拒绝采样）"""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        h = tuple(int(x) for x in rng.permutation(n))
        v = tuple(int(x) for x in rng.permutation(n))
        try:
            return Origami(h, v)
        except InputError:
            continue
    raise InputError(f"{max_tries} 次尝试内未得到连通的 {n} 格 origami")


# -----------------------
# 柱面分解
# -----------------------
@dataclass(frozen=True)
class Cylinder:
    """有理方向上由闭叶扫出的柱面"""
    core: str
    circumference: float
    height: float
    weight: float = 1.0
    area: Fraction = Fraction(0)
    direction: Tuple[int, int] = (0, 1)
    holonomy: Tuple[Fraction, Fraction] = (Fraction(0), Fraction(0))
    squares: Tuple[int, ...] = ()
    start: Tuple[int, int] = (0, 0)  # 核心曲线起点所在原子 (正方形, 子区间)
    boundary: bool = True  # 是否有由鞍点连接组成的边界

    def __post_init__(self):
        if not (self.circumference > 0 and self.height > 0):
            raise InputError("柱面周长与高度必须为正")

    @property
    def modulus(self) -> float:
        return self.height / self.circumference


def _primitive_direction(direction) -> Tuple[int, int]:
    try:
        p, q = direction
    except (TypeError, ValueError):
        raise InputError(f"方向必须是二维向量: {direction}")
    for x in (p, q):
        if isinstance(x, Fraction) and x.denominator != 1:
            raise InputError(f"方向必须是整数向量: {direction}")
        if not isinstance(x, (int, np.integer, Fraction)):
            raise InputError(f"方向必须是整数向量: {direction}")
    p, q = int(p), int(q)
    if (p, q) == (0, 0) or math.gcd(p, q) != 1:
        raise InputError(f"方向必须是本原整数向量: {direction}")
    if q < 0 or (q == 0 and p < 0):
        p, q = -p, -q
    return p, q


@dataclass
class _Decomposition:
    direction: Tuple[int, int]
    p: int
    q: int
    reflected: bool
    cycles: List[List[int]]
    singular_cycle: List[bool]
    classes: List[List[int]]


def _decompose(s: Origami, direction) -> _Decomposition:
    """
    把正方形底边切成 q 个原子，沿方向 (p,q) 的首次返回是原子上的置换 T；
    T 的轨道是闭叶，相邻原子之间的分界点若其轨道不碰奇点就并入同一柱面。
    水平方向先关于对角线反射成竖直方向处理。
    """
    p, q = _primitive_direction(direction)
    normalized = (p, q)
    reflected = q == 0
    if reflected:
        h, v, h_inv = s.v, s.h, s.v_inv
        p, q = 0, 1
    else:
        h, v, h_inv = s.h, s.v, s.h_inv
    m = s.n * q

    image = []
    for a in range(m):
        i, j = divmod(a, q)
        k, jj = divmod(j + p, q)
        image.append(v[_power(h, h_inv, i, k)] * q + jj)

    cycle_of = [-1] * m
    cycles: List[List[int]] = []
    for a in range(m):
        if cycle_of[a] >= 0:
            continue
        cyc = []
        b = a
        while cycle_of[b] < 0:
            cycle_of[b] = len(cycles)
            cyc.append(b)
            b = image[b]
        cycles.append(cyc)
    singular_cycle = [any(b % q == 0 and s.singular[b // q] for b in cyc) for cyc in cycles]

    parent = list(range(len(cycles)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(m):
        if singular_cycle[cycle_of[a]]:
            continue
        i, j = divmod(a, q)
        left = a - 1 if j > 0 else h_inv[i] * q + (q - 1)
        ra, rb = find(cycle_of[a]), find(cycle_of[left])
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: Dict[int, List[int]] = {}
    for c in range(len(cycles)):
        groups.setdefault(find(c), []).append(c)
    classes = [sorted(g, key=lambda c: min(cycles[c])) for g in groups.values()]
    classes.sort(key=lambda g: min(min(cycles[c]) for c in g))
    return _Decomposition(normalized, p, q, reflected, cycles, singular_cycle, classes)


def cylinder_decomposition(s: Origami, direction) -> List[Cylinder]:
    """
    有理方向的柱面分解

    参数：
        s        : origami
        direction: 本原整数向量 (p, q)

    返回：
        Cylinder 列表，面积之和恰为 n
    """
    d = _decompose(s, direction)
    norm = math.hypot(d.p, d.q)
    out = []
    for idx, cls in enumerate(d.classes):
        atoms = sorted(a for c in cls for a in d.cycles[c])
        core = d.cycles[cls[0]]
        mlen = len(core)
        circumference = mlen * norm / d.q
        area = Fraction(len(atoms), d.q)
        hol = (Fraction(mlen * d.p, d.q), Fraction(mlen))
        if d.reflected:
            hol = (hol[1], hol[0])
        start = divmod(min(core), d.q)
        out.append(Cylinder(
            core=f"cyl({d.direction[0]},{d.direction[1]})#{idx}",
            circumference=circumference,
            height=float(area) / circumference,
            area=area,
            direction=d.direction,
            holonomy=hol,
            squares=tuple(sorted({a // d.q for a in atoms})),
            start=start,
            boundary=any(d.singular_cycle[c] for c in cls),
        ))
    return out


def critical_length(s: Origami, direction) -> float:
    """该方向临界图（过奇点的叶）的总长度"""
    d = _decompose(s, direction)
    count = sum(len(cyc) for cyc, sing in zip(d.cycles, d.singular_cycle) if sing)
    return count * math.hypot(d.p, d.q) / d.q


# -----------------------
# 核心曲线几何
# -----------------------
Point = Tuple[Fraction, Fraction]


def core_segments(s: Origami, cyl: Cylinder) -> List[Tuple[int, Point, Point]]:
    """柱面核心闭叶在各正方形内的线段 (正方形, 起点, 终点)，单位正方形坐标"""
    half = Fraction(1, 2)
    segs = []
    p, q = cyl.direction
    if q == 0:
        i = cyl.start[0]
        while True:
            segs.append((i, (Fraction(0), half), (Fraction(1), half)))
            i = s.h[i]
            if i == cyl.start[0]:
                return segs
    i, j = cyl.start
    x0 = Fraction(2 * j + 1, 2 * q)
    sq, x = i, x0
    while True:
        cx, cy = x, Fraction(0)
        while True:
            if p > 0:
                y_hit = cy + (1 - cx) * q / p
            elif p < 0:
                y_hit = cy + cx * q / (-p)
            else:
                y_hit = Fraction(2)
            if y_hit < 1:
                nx = Fraction(1) if p > 0 else Fraction(0)
                segs.append((sq, (cx, cy), (nx, y_hit)))
                sq = s.h[sq] if p > 0 else s.h_inv[sq]
                cx, cy = (Fraction(0) if p > 0 else Fraction(1)), y_hit
            else:
                nx = cx + (1 - cy) * Fraction(p, q)
                segs.append((sq, (cx, cy), (nx, Fraction(1))))
                sq = s.v[sq]
                x = nx
                break
        if sq == i and x == x0:
            return segs


def vertical_cylinders(s: Origami) -> List[Cylinder]:
    return cylinder_decomposition(s, (0, 1))


def vertical_intersections(s: Origami, cyl: Cylinder) -> Tuple[Fraction, ...]:
    """i(G_j, core)：核心曲线在第 j 个竖直柱面内的 ∫|dx|"""
    verticals = vertical_cylinders(s)
    owner = {}
    for j, vc in enumerate(verticals):
        for sq in vc.squares:
            owner[sq] = j
    out = [Fraction(0)] * len(verticals)
    for sq, a, b in core_segments(s, cyl):
        out[owner[sq]] += abs(b[0] - a[0])
    return tuple(out)


def _segment_crossing(a0: Point, a1: Point, b0: Point, b1: Point) -> Optional[Point]:
    """两条线段的交点（平行时返回 None），精确有理运算"""
    dax, day = a1[0] - a0[0], a1[1] - a0[1]
    dbx, dby = b1[0] - b0[0], b1[1] - b0[1]
    den = dax * dby - day * dbx
    if den == 0:
        return None
    sx, sy = b0[0] - a0[0], b0[1] - a0[1]
    ta = (sx * dby - sy * dbx) / den
    tb = (sx * day - sy * dax) / den
    if 0 <= ta <= 1 and 0 <= tb <= 1:
        return (a0[0] + ta * dax, a0[1] + ta * day)
    return None


def core_intersection(s: Origami, a: Cylinder, b: Cylinder) -> int:
    """两个不同方向柱面核心的交点数（平坦测地线处于极小位置）"""
    if a.direction == b.direction:
        return 0
    by_square: Dict[int, List[Tuple[Point, Point]]] = {}
    for sq, p0, p1 in core_segments(s, b):
        by_square.setdefault(sq, []).append((p0, p1))
    count = 0
    for sq, p0, p1 in core_segments(s, a):
        for q0, q1 in by_square.get(sq, ()):
            pt = _segment_crossing(p0, p1, q0, q1)
            # 半开约定：落在 x=1 或 y=1 上的交点计入相邻正方形
            if pt is not None and pt[0] < 1 and pt[1] < 1:
                count += 1
    return count


# -----------------------
# 矩形剖分
# -----------------------
@dataclass(frozen=True)
class Gluing:
    """把矩形 a 的某条边上 [offset_a, offset_a+length] 与矩形 b 对边上的子段等距粘合"""
    rect_a: int
    side_a: str
    offset_a: Number
    rect_b: int
    side_b: str
    offset_b: Number
    length: Number

    def to_json(self) -> Dict:
        return {'a': [self.rect_a, self.side_a, float(self.offset_a)],
                'b': [self.rect_b, self.side_b, float(self.offset_b)],
                'length': float(self.length)}


@dataclass(frozen=True)
class Rectangulation:
    """
    矩形剖分：未流动时的尺寸 base_sizes，流动参数 t 作用为宽 × e^t、高 × e^(-t)

    origami 非空时矩形 k 就是正方形 k（统一胞腔尺寸），right/top 由 h/v 给出。
    """
    base_sizes: Tuple[Tuple[Number, Number], ...]
    gluings: Tuple[Gluing, ...]
    weights: Optional[Tuple[float, ...]] = None
    t: float = 0.0
    origami: Optional[Origami] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'base_sizes', tuple(tuple(sz) for sz in self.base_sizes))
        object.__setattr__(self, 'gluings', tuple(self.gluings))
        if self.weights is not None:
            object.__setattr__(self, 'weights', tuple(self.weights))
            if len(self.weights) != len(self.base_sizes):
                raise InputError("权重个数与矩形个数不一致")
            if any(w < 0 for w in self.weights):
                raise InputError("权重必须非负")
        for w, h in self.base_sizes:
            if not (w > 0 and h > 0):
                raise InputError("矩形尺寸必须为正")
        self._check_gluings()

    def _side_length(self, k: int, side: str) -> Number:
        w, h = self.base_sizes[k]
        return w if side in ('top', 'bottom') else h

    def _check_gluings(self):
        covered: Dict[Tuple[int, str], List[Tuple[Number, Number]]] = {}
        for g in self.gluings:
            if OPPOSITE.get(g.side_a) != g.side_b:
                raise InputError(f"只允许对边粘合: {g.side_a} / {g.side_b}")
            if not g.length > 0:
                raise InputError("粘合长度必须为正")
            for k, side, off in ((g.rect_a, g.side_a, g.offset_a), (g.rect_b, g.side_b, g.offset_b)):
                if not 0 <= k < len(self.base_sizes):
                    raise InputError(f"粘合引用了不存在的矩形 {k}")
                covered.setdefault((k, side), []).append((off, off + g.length))
        tol = 1e-9
        for k in range(len(self.base_sizes)):
            for side in SIDES:
                pieces = sorted(covered.get((k, side), []))
                total = self._side_length(k, side)
                pos = 0
                for lo, hi in pieces:
                    if abs(lo - pos) > tol * max(1.0, float(total)):
                        raise InputError(f"矩形 {k} 的 {side} 边粘合不完整或重叠")
                    pos = hi
                if abs(pos - total) > tol * max(1.0, float(total)):
                    raise InputError(f"矩形 {k} 的 {side} 边没有完全粘合")

    @property
    def size(self) -> int:
        return len(self.base_sizes)

    @property
    def sizes(self) -> Tuple[Tuple[float, float], ...]:
        a, b = math.exp(self.t), math.exp(-self.t)
        return tuple((float(w) * a, float(h) * b) for w, h in self.base_sizes)

    def area(self) -> Number:
        """总面积（流动不改变，按未流动尺寸精确求和）"""
        return sum(w * h for w, h in self.base_sizes)

    def weighted_area(self) -> float:
        """A(ρ) = Σ ρ_k²·面积_k"""
        if self.weights is None:
            return float(self.area())
        return sum(float(r) ** 2 * float(w * h) for r, (w, h) in zip(self.weights, self.base_sizes))

    def with_weights(self, weights: Sequence[float]) -> "Rectangulation":
        return replace(self, weights=tuple(weights))

    def right(self, k: int) -> int:
        return self._require_origami().h[k]

    def top(self, k: int) -> int:
        return self._require_origami().v[k]

    def _require_origami(self) -> Origami:
        if self.origami is None:
            raise InputError("该操作需要由 origami 生成的整边粘合矩形剖分")
        return self.origami

    @property
    def cell(self) -> Tuple[float, float]:
        """整边粘合剖分的统一胞腔尺寸 (W, H)"""
        self._require_origami()
        return self.sizes[0]

    def torus_modulus(self) -> complex:
        """单个自粘合矩形对应的环面模 i·H/W"""
        if self.size != 1:
            raise InputError("只有单矩形环面才有直接的模")
        w, h = self.sizes[0]
        return complex(0.0, h / w)

    def to_json(self) -> Dict:
        sizes = self.sizes
        rects = []
        for k, (w, h) in enumerate(sizes):
            item = {'w': w, 'h': h}
            if self.weights is not None:
                item['weight'] = float(self.weights[k])
            rects.append(item)
        return {'rects': rects, 'gluings': [g.to_json() for g in self.gluings], 't': self.t}

    @classmethod
    def from_origami(cls, s: Origami, cell: Tuple[Number, Number] = (1, 1),
                     weights: Optional[Sequence[float]] = None) -> "Rectangulation":
        gluings = []
        w, h = cell
        for k in range(s.n):
            gluings.append(Gluing(k, 'right', 0, s.h[k], 'left', 0, h))
            gluings.append(Gluing(k, 'top', 0, s.v[k], 'bottom', 0, w))
        return cls(tuple((w, h) for _ in range(s.n)), tuple(gluings),
                   None if weights is None else tuple(weights), 0.0, s)


def rectangle_torus(width: Number, height: Number) -> Rectangulation:
    """宽 width、高 height 的矩形自粘合成的环面"""
    return Rectangulation.from_origami(Origami((0,), (0,)), (width, height))


def geodesic_flow(s: Union[Origami, Rectangulation], t: float) -> Rectangulation:
    """Teichmüller 测地流：宽 × e^t，高 × e^(-t)，粘合组合不变"""
    R = Rectangulation.from_origami(s) if isinstance(s, Origami) else s
    if t == 0:
        return R
    return replace(R, t=R.t + t)


# -----------------------
# 加权度量（柱面权重 + 临界图领口）
# -----------------------
@dataclass(frozen=True)
class WeightedMetric:
    """加权矩形剖分与面积分解"""
    rectangulation: Rectangulation
    components: Tuple[str, ...]
    component_areas: Tuple[Number, ...]  # a_j = i(G_j, H(q))
    theta: Tuple[float, ...]
    theta_area: float  # Σ θ_j² a_j
    collar_area: float  # ε·L
    critical_length: float
    area: float  # 实际 A(ρ)
    eps: float
    eps_constant: float  # (A(ρ) - Σθ²a) / ε
    delta_constant: float = 0.0

    def report(self) -> Dict:
        return {
            'area': self.area,
            'theta_area': self.theta_area,
            'collar_area': self.collar_area,
            'critical_length': self.critical_length,
            'eps': self.eps,
            'eps_constant': self.eps_constant,
            'delta_constant': self.delta_constant,
        }


def _coordinate_weighted(s: Origami, theta: Sequence[float], eps: float) -> Tuple[Rectangulation, List[Cylinder], float]:
    """竖直方向：每个正方形按领口切成至多三条竖带"""
    cyls = vertical_cylinders(s)
    if len(theta) != len(cyls):
        raise InputError(f"θ 个数 {len(theta)} 与竖直柱面数 {len(cyls)} 不一致")
    owner = {}
    for j, c in enumerate(cyls):
        for sq in c.squares:
            owner[sq] = j
    d = _decompose(s, (0, 1))
    # 正方形左边所在竖直线是否属于临界图
    left_sing = [False] * s.n
    for cyc, sing in zip(d.cycles, d.singular_cycle):
        for a in cyc:
            left_sing[a] = sing
    half = Fraction(eps * eps / 2) if not isinstance(eps, Fraction) else eps * eps / 2
    collar_weight = 1.0 / math.sqrt(eps)

    sizes, weights, gluings = [], [], []
    pieces: List[List[int]] = []
    for k in range(s.n):
        th = float(theta[owner[k]])
        ids = []
        if left_sing[k]:
            ids.append(len(sizes))
            sizes.append((half, Fraction(1)))
            weights.append(th + collar_weight)
        inner = 1 - (half if left_sing[k] else 0) - (half if left_sing[s.h[k]] else 0)
        ids.append(len(sizes))
        sizes.append((inner, Fraction(1)))
        weights.append(th)
        if left_sing[s.h[k]]:
            ids.append(len(sizes))
            sizes.append((half, Fraction(1)))
            weights.append(th + collar_weight)
        pieces.append(ids)
    for k in range(s.n):
        ids = pieces[k]
        for a, b in zip(ids, ids[1:]):
            gluings.append(Gluing(a, 'right', 0, b, 'left', 0, 1))
        gluings.append(Gluing(ids[-1], 'right', 0, pieces[s.h[k]][0], 'left', 0, 1))
        for a, b in zip(ids, pieces[s.v[k]]):
            gluings.append(Gluing(a, 'top', 0, b, 'bottom', 0, sizes[a][0]))
    L = float(sum(1 for k in range(s.n) if left_sing[k]))
    return Rectangulation(tuple(sizes), tuple(gluings), tuple(weights)), cyls, L


def _wrap(x: float, c: float) -> float:
    x = x % c
    return 0.0 if c - x < 1e-12 * max(1.0, c) else x


def _side_gluings(ra: int, wa: float, ca: float, rb: int, wb: float, cb: float, length: float) -> List[Gluing]:
    """ra 右边 [wa, wa+length] 粘到 rb 左边 [wb, wb+length]，两侧都按周长回绕，跨过切口处拆段"""
    cuts = sorted({0.0, length} | {x for x in (ca - wa, cb - wb) if 0 < x < length})
    out = []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo > 1e-12:
            out.append(Gluing(ra, 'right', _wrap(wa + lo, ca), rb, 'left', _wrap(wb + lo, cb), hi - lo))
    return out


def _cylinder_weighted(s: Origami, direction, theta: Sequence[float], eps: float
                       ) -> Tuple[Rectangulation, List[Cylinder], float]:
    """
    一般有理方向：每个柱面旋转成竖立的矩形（宽 = 柱面高度，高 = 周长）

    矩形坐标 (u, w)：u 垂直于叶向右，w 沿叶。柱面从左边界那条闭叶起向右串起各条闭叶，
    底边原子的左端点沿叶每次前进 |(p,q)|/q，向右邻原子平移时 w 增加 p/(q·|(p,q)|)。
    有鞍点边界的柱面两侧各留宽 ε²/2 的领口竖带。
    """
    d = _decompose(s, direction)
    cyls = cylinder_decomposition(s, direction)
    if len(theta) != len(cyls):
        raise InputError(f"θ 个数 {len(theta)} 与方向 {d.direction} 的柱面数 {len(cyls)} 不一致")
    q = d.q
    norm = math.hypot(d.p, d.q)
    step = norm / q
    shift = d.p / (q * norm)
    cycle_of = {a: c for c, cyc in enumerate(d.cycles) for a in cyc}
    class_of = {c: k for k, cls in enumerate(d.classes) for c in cls}

    def right(a: int) -> int:
        i, j = divmod(a, q)
        return a + 1 if j < q - 1 else s.h[i] * q

    w: Dict[int, float] = {}
    chains: List[List[int]] = []
    for cls in d.classes:
        singular = [c for c in cls if d.singular_cycle[c]]
        first = singular[0] if singular else cls[0]
        for i, a in enumerate(d.cycles[first]):
            w[a] = i * step
        chain = [first]
        while True:
            head = d.cycles[chain[-1]][0]
            nxt = cycle_of[right(head)]
            if d.singular_cycle[nxt] or nxt == first:
                break
            order = d.cycles[nxt]
            r = order.index(right(head))
            for i, a in enumerate(order):
                w[a] = w[head] + shift + (i - r) * step
            chain.append(nxt)
        if len(chain) != len(cls):
            raise InputError(f"方向 {d.direction} 的柱面 {len(chains)} 无法串成一列闭叶")
        chains.append(chain)

    half = eps * eps / 2
    collar_weight = 1.0 / math.sqrt(eps)
    sizes, weights, gluings = [], [], []
    pieces: List[List[int]] = []
    circumference: List[float] = []
    L = 0.0
    for k, chain in enumerate(chains):
        C = len(d.cycles[chain[0]]) * step
        width = len(chain) / norm
        th = float(theta[k])
        if d.singular_cycle[chain[0]]:
            if width <= 2 * half:
                raise InputError(f"ε 过大：柱面 {k} 的宽度 {width:.3g} 放不下两侧领口")
            bands = [(half, th + collar_weight), (width - 2 * half, th), (half, th + collar_weight)]
            L += C
        else:
            bands = [(width, th)]
        ids = []
        for bw, weight in bands:
            ids.append(len(sizes))
            sizes.append((bw, C))
            weights.append(weight)
            gluings.append(Gluing(ids[-1], 'top', 0, ids[-1], 'bottom', 0, bw))
        for a, b in zip(ids, ids[1:]):
            gluings.append(Gluing(a, 'right', 0, b, 'left', 0, C))
        pieces.append(ids)
        circumference.append(C)
    # 右边界上每个原子条带的右边，粘到右邻原子条带的左边
    for k, chain in enumerate(chains):
        for a in d.cycles[chain[-1]]:
            b = right(a)
            kb = class_of[cycle_of[b]]
            ca, cb = circumference[k], circumference[kb]
            gluings.extend(_side_gluings(pieces[k][-1], _wrap(w[a] + shift, ca), ca,
                                         pieces[kb][0], _wrap(w[b], cb), cb, step))
    return Rectangulation(tuple(sizes), tuple(gluings), tuple(weights)), cyls, L


def _transpose(R: Rectangulation) -> Rectangulation:
    swap = {'left': 'bottom', 'bottom': 'left', 'right': 'top', 'top': 'right'}
    gluings = tuple(Gluing(g.rect_a, swap[g.side_a], g.offset_a, g.rect_b, swap[g.side_b], g.offset_b, g.length)
                    for g in R.gluings)
    return Rectangulation(tuple((h, w) for w, h in R.base_sizes), gluings, R.weights, R.t)


def weighted_rectangulation(s: Origami, direction, theta: Sequence[float], eps: float,
                            delta: float = 0.0, shares: Optional[Sequence[Sequence[float]]] = None) -> WeightedMetric:
    """
    构造加权度量 ρ = ρ_θ + ρ_ε

    参数：
        s        : origami
        direction: 有理方向 (p,q)（柱面情形；坐标方向按正方形切竖带，其余方向把柱面旋转成矩形），
                   或非有理实方向（极小情形，经首次返回映射）
        theta    : 该方向每个柱面（或声明分量）的权重
        eps      : 领口参数，领口总宽 ε²，面积密度 1/ε
        delta    : 极小情形的近似参数（声明测度时不产生误差项）
        shares   : 多遍历类时每个返回矩形上各分量的 Lebesgue 份额表

    返回：
        WeightedMetric，A(ρ) ≤ Σθ_j²a_j + C·ε
    """
    if not 0 < eps < 1:
        raise InputError(f"领口参数 ε 必须在 (0,1) 内: {eps}")
    theta = tuple(float(x) for x in theta)
    if any(x < 0 for x in theta):
        raise InputError("θ 必须非负")
    try:
        p, q = _primitive_direction(direction)
        rational = True
    except InputError:
        rational = False
    if rational:
        if (p, q) == (0, 1):
            R, cyls, L = _coordinate_weighted(s, theta, eps)
        elif (p, q) == (1, 0):
            R, cyls, L = _coordinate_weighted(s.reflect(), theta, eps)
            R = _transpose(R)
        else:
            R, cyls, L = _cylinder_weighted(s, (p, q), theta, eps)
        areas = tuple(c.area for c in cyls)
        names = tuple(c.core for c in cyls)
    else:
        # 非有理方向依赖首次返回分解
        import iet
        R, names, areas, L = iet.return_metric(s, direction, theta, shares)
    theta_area = sum(t * t * float(a) for t, a in zip(theta, areas))
    area = R.weighted_area()
    return WeightedMetric(
        rectangulation=R,
        components=names,
        component_areas=areas,
        theta=theta,
        theta_area=theta_area,
        collar_area=eps * L,
        critical_length=L,
        area=area,
        eps=eps,
        eps_constant=(area - theta_area) / eps,
        delta_constant=0.0,
    )
