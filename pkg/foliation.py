"""
测度叶状结构代数 - 在声明的分量基上做形式非负组合，或环面上的直线叶状结构

交点数 i(·,·) 对分量和按 gram 矩阵双线性展开，对环面直线取 w·w'·|det|。
分量之间的交点数是输入数据，这里不从拓扑计算。
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InputError, RepresentationMismatchError

Number = Union[int, float, Fraction]

KINDS = ('annular', 'minimal-ergodic')


def _div(a, b):
    """整数/有理数保持精确，其余按浮点"""
    if isinstance(a, (int, Fraction)) and isinstance(b, (int, Fraction)):
        return Fraction(a) / Fraction(b)
    return a / b


def _normalize_direction(direction) -> Tuple[Number, Number]:
    """方向向量符号归一：第一个非零分量为正"""
    if len(direction) != 2:
        raise InputError(f"方向必须是二维向量: {direction}")
    p, q = direction
    if p == 0 and q == 0:
        raise InputError("方向向量不能为零")
    if p < 0 or (p == 0 and q < 0):
        p, q = -p, -q
    # 去掉 -0.0
    if isinstance(p, float):
        p = p + 0.0
    if isinstance(q, float):
        q = q + 0.0
    return (p, q)


@dataclass(frozen=True)
class TorusLine:
    """环面直线叶状结构：方向 (p,q)（相差符号视为同一方向）与权重"""
    direction: Tuple[Number, Number]
    weight: Number = 1

    def __post_init__(self):
        object.__setattr__(self, 'direction', _normalize_direction(tuple(self.direction)))
        if not self.weight > 0:
            raise InputError(f"环面直线权重必须为正: {self.weight}")

    def vector(self) -> Tuple[Number, Number]:
        """weight·direction，交点数对它是双线性的"""
        p, q = self.direction
        return (self.weight * p, self.weight * q)


@dataclass(frozen=True)
class ComponentSpec:
    """基中的一个不可分解分量"""
    id: str
    kind: str = 'annular'
    tag: Optional[object] = None  # 可选几何标签，例如环面上对应的 TorusLine

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"未知分量类型: {self.kind}")


@dataclass(frozen=True)
class ComponentBasis:
    """分量基与两两交点数矩阵"""
    components: Tuple[ComponentSpec, ...]
    gram: Tuple[Tuple[Number, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, 'components', tuple(self.components))
        object.__setattr__(self, 'gram', tuple(tuple(row) for row in self.gram))
        n = len(self.components)
        if n == 0:
            raise InputError("分量基不能为空")
        ids = [c.id for c in self.components]
        if len(set(ids)) != n:
            raise InputError(f"分量 id 重复: {ids}")
        if len(self.gram) != n or any(len(row) != n for row in self.gram):
            raise InputError(f"gram 矩阵应为 {n}x{n}")
        for j in range(n):
            if self.gram[j][j] != 0:
                raise InputError(f"gram 对角线必须为 0（分量 {ids[j]} 自交）")
            for k in range(n):
                if self.gram[j][k] < 0:
                    raise InputError("gram 元素必须非负")
                if self.gram[j][k] != self.gram[k][j]:
                    raise InputError("gram 矩阵必须对称")

    @classmethod
    def disjoint_basis(cls, ids: Sequence[str], kinds: Optional[Sequence[str]] = None,
                       tags: Optional[Sequence[object]] = None) -> "ComponentBasis":
        """两两不相交的基（gram 全零）"""
        n = len(ids)
        kinds = list(kinds) if kinds is not None else ['annular'] * n
        tags = list(tags) if tags is not None else [None] * n
        comps = tuple(ComponentSpec(i, k, t) for i, k, t in zip(ids, kinds, tags))
        return cls(comps, tuple(tuple(0 for _ in range(n)) for _ in range(n)))

    @property
    def size(self) -> int:
        return len(self.components)

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(c.id for c in self.components)

    def index(self, component_id: str) -> int:
        try:
            return self.ids.index(component_id)
        except ValueError:
            raise InputError(f"基中没有分量 {component_id}")

    def is_disjoint(self, indices: Optional[Sequence[int]] = None) -> bool:
        """给定分量（默认全部）是否两两不相交"""
        idx = range(self.size) if indices is None else list(indices)
        return all(self.gram[j][k] == 0 for j in idx for k in idx)

    def gram_matrix(self) -> np.ndarray:
        return np.array(self.gram, dtype=float)


@dataclass(frozen=True)
class ComponentSum:
    """分量的非负形式组合 Σ f_j G_j"""
    basis: ComponentBasis
    coeffs: Tuple[Number, ...]
    allow_zero: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'coeffs', tuple(self.coeffs))
        if len(self.coeffs) != self.basis.size:
            raise InputError(f"系数个数 {len(self.coeffs)} 与基大小 {self.basis.size} 不一致")
        if any(c < 0 for c in self.coeffs):
            raise InputError(f"系数必须非负: {self.coeffs}")
        if not self.allow_zero and all(c == 0 for c in self.coeffs):
            raise InputError("零叶状结构须通过 ComponentSum.zero 显式构造")

    @classmethod
    def zero(cls, basis: ComponentBasis) -> "ComponentSum":
        return cls(basis, tuple(0 for _ in range(basis.size)), allow_zero=True)

    @classmethod
    def unit(cls, basis: ComponentBasis, component_id: str, weight: Number = 1) -> "ComponentSum":
        j = basis.index(component_id)
        coeffs = [0] * basis.size
        coeffs[j] = weight
        return cls(basis, tuple(coeffs))

    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, c in enumerate(self.coeffs) if c > 0)


MeasuredFoliation = Union[ComponentSum, TorusLine]


@dataclass(frozen=True)
class ProbeFamily:
    """求上确界时使用的有限探针族"""
    members: Tuple[MeasuredFoliation, ...]
    label: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'members', tuple(self.members))
        if not self.members:
            raise InputError("探针族不能为空")
        if any(is_zero(m) for m in self.members):
            raise InputError("探针族成员不能是零叶状结构")

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def extended(self, more: Sequence[MeasuredFoliation], label: Optional[str] = None) -> "ProbeFamily":
        return ProbeFamily(self.members + tuple(more), label or self.label)


def is_zero(F: MeasuredFoliation) -> bool:
    if isinstance(F, ComponentSum):
        return all(c == 0 for c in F.coeffs)
    return False


def support(F: ComponentSum) -> Tuple[int, ...]:
    return F.support()


def _same_basis(a: ComponentBasis, b: ComponentBasis) -> bool:
    return a is b or a == b


def project_to(F: ComponentSum, basis: ComponentBasis) -> ComponentSum:
    """
    按分量 id 把 F 搬到另一个基上

    F 的支撑必须都在目标基里，共同分量之间的交点数必须一致。
    """
    if _same_basis(F.basis, basis):
        return F
    coeffs = [0] * basis.size
    for j in F.support():
        cid = F.basis.ids[j]
        if cid not in basis.ids:
            raise RepresentationMismatchError(f"分量 {cid} 不在目标基中")
        coeffs[basis.index(cid)] = F.coeffs[j]
    shared = [cid for cid in F.basis.ids if cid in basis.ids]
    for a in shared:
        for b in shared:
            if F.basis.gram[F.basis.index(a)][F.basis.index(b)] != basis.gram[basis.index(a)][basis.index(b)]:
                raise RepresentationMismatchError(f"分量 {a}、{b} 在两个基上的交点数不一致")
    return ComponentSum(basis, tuple(coeffs))


def intersection(F: MeasuredFoliation, G: MeasuredFoliation) -> Number:
    """几何交点数 i(F, G)"""
    if isinstance(F, ComponentSum) and isinstance(G, ComponentSum):
        if not _same_basis(F.basis, G.basis):
            raise RepresentationMismatchError("两个分量和不在同一个基上")
        gram = F.basis.gram
        total = 0
        for j, fj in enumerate(F.coeffs):
            if fj == 0:
                continue
            for k, gk in enumerate(G.coeffs):
                if gk != 0 and gram[j][k] != 0:
                    total += fj * gk * gram[j][k]
        return total
    if isinstance(F, TorusLine) and isinstance(G, TorusLine):
        a, b = F.vector()
        c, d = G.vector()
        return abs(a * d - b * c)
    raise RepresentationMismatchError(
        f"无法计算交点数: {type(F).__name__} 与 {type(G).__name__} 表示不同")


def component_pairing(basis: ComponentBasis, j: int, F: MeasuredFoliation) -> Number:
    """i(G_j, F)：F 为同基分量和时用 gram 行，F 为环面直线时用分量的几何标签"""
    if isinstance(F, ComponentSum):
        if not _same_basis(basis, F.basis):
            raise RepresentationMismatchError("叶状结构不在记录的基上")
        row = basis.gram[j]
        return sum(row[k] * F.coeffs[k] for k in range(basis.size) if F.coeffs[k] != 0)
    tag = basis.components[j].tag
    if isinstance(F, TorusLine) and isinstance(tag, TorusLine):
        return intersection(tag, F)
    raise RepresentationMismatchError(
        f"分量 {basis.components[j].id} 没有可与 {type(F).__name__} 配对的几何标签")


def scale(F: MeasuredFoliation, c: Number) -> MeasuredFoliation:
    """cF，c > 0"""
    if not c > 0:
        raise InputError(f"缩放因子必须为正: {c}")
    if isinstance(F, ComponentSum):
        return ComponentSum(F.basis, tuple(c * x for x in F.coeffs), allow_zero=F.allow_zero)
    return TorusLine(F.direction, F.weight * c)


def _parallel_ratio(F: TorusLine, G: TorusLine) -> Optional[Number]:
    """若 G.direction = k·F.direction（k > 0）返回 k，否则 None"""
    (a, b), (c, d) = F.direction, G.direction
    if a * d - b * c != 0:
        return None
    return _div(c, a) if a != 0 else _div(d, b)


def add(F: MeasuredFoliation, G: MeasuredFoliation) -> MeasuredFoliation:
    """F + G：同基逐分量相加，或平行环面直线的权重相加"""
    if isinstance(F, ComponentSum) and isinstance(G, ComponentSum):
        if not _same_basis(F.basis, G.basis):
            raise RepresentationMismatchError("不同基上的分量和不能相加")
        coeffs = tuple(x + y for x, y in zip(F.coeffs, G.coeffs))
        return ComponentSum(F.basis, coeffs, allow_zero=all(c == 0 for c in coeffs))
    if isinstance(F, TorusLine) and isinstance(G, TorusLine):
        k = _parallel_ratio(F, G)
        if k is None:
            raise RepresentationMismatchError("不平行的环面直线之和不是直线叶状结构")
        return TorusLine(F.direction, F.weight + k * G.weight)
    raise RepresentationMismatchError("表示不同的叶状结构不能相加")


def proportional(F: MeasuredFoliation, G: MeasuredFoliation, tol: float = 0.0) -> bool:
    """F 与 G 是否射影相等"""
    if isinstance(F, TorusLine) and isinstance(G, TorusLine):
        return _parallel_ratio(F, G) is not None
    if isinstance(F, ComponentSum) and isinstance(G, ComponentSum):
        if not _same_basis(F.basis, G.basis):
            return False
        f = np.array([float(x) for x in F.coeffs])
        g = np.array([float(x) for x in G.coeffs])
        if not f.any() or not g.any():
            return not f.any() and not g.any()
        f = f / f.max()
        g = g / g.max()
        return bool(np.max(np.abs(f - g)) <= tol)
    return False


@dataclass(frozen=True)
class DominationResult:
    """F ≪ G 的判定结果"""
    yes: bool
    coeffs: Optional[Tuple[Number, ...]] = None  # F = Σ λ_j·(g_j G_j)
    reason: str = ''

    def __bool__(self):
        return self.yes


def dominated_by(F: MeasuredFoliation, G: MeasuredFoliation) -> DominationResult:
    """
    判定 F ≪ G，即 F 能写成 G 的各分量（带 G 的系数）的非负组合

    参数：
        F: 待判定的叶状结构
        G: 分量和（基须两两不相交），或单分量的环面直线

    返回：
        DominationResult，yes 时 coeffs[j] = f_j / g_j（g_j = 0 处为 0）
    """
    if isinstance(G, TorusLine):
        if not isinstance(F, TorusLine):
            return DominationResult(False, None, "F 不是环面直线")
        k = _parallel_ratio(G, F)
        if k is None:
            return DominationResult(False, None, "方向不平行")
        return DominationResult(True, (_div(F.weight * k, G.weight),), '')
    if not G.basis.is_disjoint(G.support()):
        raise InputError("dominated_by 要求 G 的分量两两不相交")
    if not isinstance(F, ComponentSum):
        return DominationResult(False, None, "F 不是分量和")
    if not _same_basis(F.basis, G.basis):
        return DominationResult(False, None, "F 与 G 不在同一个基上")
    coeffs = []
    for j, (fj, gj) in enumerate(zip(F.coeffs, G.coeffs)):
        if fj == 0:
            coeffs.append(0)
        elif gj == 0:
            return DominationResult(False, None, f"分量 {F.basis.ids[j]} 不在 G 的支撑中")
        else:
            coeffs.append(_div(fj, gj))
    return DominationResult(True, tuple(coeffs), '')


# -----------------------
# foliation.v1
# -----------------------
def _dump_number(x: Number):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return x


def _load_number(x) -> Number:
    if isinstance(x, bool):
        raise InputError(f"不是数值: {x}")
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise InputError(f"无法解析的数值: {x}")
    if isinstance(x, (int, float)):
        return x
    raise InputError(f"不是数值: {x}")


def basis_to_json(basis: ComponentBasis) -> Dict:
    return {
        'components': [{'id': c.id, 'kind': c.kind} for c in basis.components],
        'gram': [[_dump_number(x) for x in row] for row in basis.gram],
    }


def basis_from_json(data: Dict) -> ComponentBasis:
    try:
        comps = tuple(ComponentSpec(str(c['id']), c.get('kind', 'annular')) for c in data['components'])
        gram = data.get('gram') or [[0] * len(comps) for _ in comps]
        gram = tuple(tuple(_load_number(x) for x in row) for row in gram)
    except (KeyError, TypeError, AttributeError) as e:
        raise InputError(f"foliation.v1 基格式错误: {e}")
    return ComponentBasis(comps, gram)


def foliations_to_json(basis: ComponentBasis, foliations: Dict[str, MeasuredFoliation]) -> Dict:
    """{schema, basis, foliations:[{id, coeffs} | {id, dir, weight}]}"""
    items = []
    for fid, F in foliations.items():
        if isinstance(F, ComponentSum):
            if not _same_basis(F.basis, basis):
                raise RepresentationMismatchError(f"叶状结构 {fid} 不在给定的基上")
            items.append({'id': fid, 'coeffs': [_dump_number(c) for c in F.coeffs]})
        else:
            items.append({'id': fid, 'dir': [_dump_number(x) for x in F.direction], 'weight': _dump_number(F.weight)})
    return {'schema': 'foliation.v1', 'basis': basis_to_json(basis), 'foliations': items}


def foliations_from_json(data: Dict) -> Tuple[ComponentBasis, Dict[str, MeasuredFoliation]]:
    if not isinstance(data, dict):
        raise InputError("foliation.v1 必须是 JSON 对象")
    try:
        basis = basis_from_json(data['basis'])
        out: Dict[str, MeasuredFoliation] = {}
        for item in data['foliations']:
            fid = str(item['id'])
            if 'coeffs' in item:
                coeffs = tuple(_load_number(c) for c in item['coeffs'])
                out[fid] = ComponentSum(basis, coeffs, allow_zero=all(c == 0 for c in coeffs))
            else:
                p, q = (_load_number(x) for x in item['dir'])
                out[fid] = TorusLine((p, q), _load_number(item.get('weight', 1)))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"foliation.v1 格式错误: {e}")
    return basis, out
