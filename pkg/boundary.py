"""
边界演算 - E_q 与 E*_q、翻转对偶、horofunction、模等价与不动点求解、
绕行代价/绕行度量、part 判定以及 Busemann 收敛判据

QDRecord 记录 V(q) = Σ λ_j G_j 在一组两两不相交分量上的系数，
以及 ι_j = i(G_j, H(q))。基里可以额外带测试分量（系数为 0），
用 gram 矩阵给出它们与 V(q) 各分量的交点数。
"""
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import CALC_CONFIG, verbose_log
from errors import InputError, NonConvergenceError, NormalizationError, RepresentationMismatchError
from extreal import ExtReal
from extremal_opt import RatioProgram, optimise_quadratic_ratio
from flat_torus import (TorusPoint, TorusQD, matched_ray_distance, torus_distance, torus_ext_length,
                        torus_hm_oracle, torus_ray)
from foliation import (ComponentBasis, ComponentSpec, ComponentSum, MeasuredFoliation, Number, ProbeFamily,
                       TorusLine, _div, _parallel_ratio, component_pairing, dominated_by, project_to)
from square_tiled import (Origami, core_intersection, cylinder_decomposition, vertical_cylinders,
                          vertical_intersections)

UNIT_TOL = 1e-12
Pairings = Sequence[Number]


# -----------------------
# 记录
# -----------------------
@dataclass(frozen=True)
class QDRecord:
    """二次微分的分量记录：coeffs = λ_j，areas = ι_j"""
    basis: ComponentBasis
    coeffs: Tuple[Number, ...]
    areas: Tuple[Number, ...]

    def __post_init__(self):
        object.__setattr__(self, 'coeffs', tuple(self.coeffs))
        object.__setattr__(self, 'areas', tuple(self.areas))
        n = self.basis.size
        if len(self.coeffs) != n or len(self.areas) != n:
            raise InputError(f"coeffs/areas 长度必须等于基大小 {n}")
        if any(c < 0 for c in self.coeffs) or any(a < 0 for a in self.areas):
            raise InputError("系数与面积必须非负")
        if not any(c > 0 for c in self.coeffs):
            raise InputError("V(q) 不能为零")
        for j in self.support:
            if not self.areas[j] > 0:
                raise InputError(f"分量 {self.basis.ids[j]} 的 λ_j > 0 但 ι_j = 0")
        if not self.basis.is_disjoint(self.support):
            raise InputError("V(q) 的分量必须两两不相交")

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, c in enumerate(self.coeffs) if c > 0)

    @property
    def total_area(self) -> Number:
        return sum(c * a for c, a in zip(self.coeffs, self.areas))

    @property
    def is_unit(self) -> bool:
        return abs(float(self.total_area) - 1.0) <= UNIT_TOL

    def vertical(self) -> ComponentSum:
        return ComponentSum(self.basis, self.coeffs)

    def ratios(self) -> Tuple[Number, ...]:
        """λ_j / ι_j，支撑外为 0"""
        return tuple(_div(c, a) if c > 0 else 0 for c, a in zip(self.coeffs, self.areas))

    def normalized(self) -> "QDRecord":
        """λ 与 ι 同乘 1/√面积，得到单位面积记录（比值 λ/ι 不变）"""
        s = math.sqrt(float(self.total_area))
        return replace(self, coeffs=tuple(float(c) / s for c in self.coeffs),
                       areas=tuple(float(a) / s for a in self.areas))

    def to_json(self) -> Dict:
        tags = []
        for comp in self.basis.components:
            if isinstance(comp.tag, TorusLine):
                tags.append([float(comp.tag.direction[0]), float(comp.tag.direction[1]), float(comp.tag.weight)])
            else:
                tags.append(None)
        basis = {'ids': list(self.basis.ids), 'gram': [[float(x) for x in row] for row in self.basis.gram],
                 'kinds': [c.kind for c in self.basis.components]}
        if any(t is not None for t in tags):
            basis['tags'] = tags
        return {
            'schema': 'qdrecord.v1',
            'basis_ref': basis,
            'coeffs': [float(c) for c in self.coeffs],
            'areas': [float(a) for a in self.areas],
            'total_area': float(self.total_area),
        }

    @classmethod
    def from_json(cls, data: Dict) -> "QDRecord":
        try:
            coeffs = [_number(c) for c in data['coeffs']]
            areas = [_number(a) for a in data['areas']]
            ref = data.get('basis_ref', 'G')
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"qdrecord.v1 格式错误: {e}")
        n = len(coeffs)
        if isinstance(ref, str):
            basis = ComponentBasis.disjoint_basis([f"{ref}#{j}" for j in range(n)])
        else:
            try:
                ids = list(ref['ids'])
                gram = ref.get('gram') or [[0] * len(ids) for _ in ids]
                kinds = ref.get('kinds') or ['annular'] * len(ids)
                tags = [TorusLine((t[0], t[1]), t[2]) if t is not None else None
                        for t in ref.get('tags', [None] * len(ids))]
            except (KeyError, TypeError, IndexError) as e:
                raise InputError(f"basis_ref 格式错误: {e}")
            basis = ComponentBasis(tuple(ComponentSpec(i, k, t) for i, k, t in zip(ids, kinds, tags)),
                                   tuple(tuple(_number(x) for x in row) for row in gram))
        record = cls(basis, tuple(coeffs), tuple(areas))
        declared = data.get('total_area')
        if declared is not None and abs(float(declared) - float(record.total_area)) > 1e-9 * max(1.0, float(declared)):
            raise InputError(f"total_area = {declared} 与 Σλι = {float(record.total_area)} 不一致")
        return record


def _number(x) -> Number:
    """整数与 "p/q" 字符串保持精确"""
    if isinstance(x, bool):
        raise ValueError(f"不是数值: {x}")
    if isinstance(x, (int, Fraction)):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


def torus_record(q: TorusQD) -> QDRecord:
    """环面二次微分的单分量记录，分量标签是 V(q) 的本原方向"""
    unit = TorusLine(q.vertical.direction, 1)
    basis = ComponentBasis.disjoint_basis(['V'], tags=[unit])
    iota = float(component_pairing(basis, 0, q.horizontal))
    return QDRecord(basis, (q.vertical.weight,), (iota,))


def origami_record(s: Origami, test_directions: Sequence[Tuple[int, int]] = ((1, 0),)) -> QDRecord:
    """
    origami 竖直方向的记录：分量为竖直柱面（λ_j = 1，ι_j = 柱面面积），
    基里再附上给定方向各柱面的核心曲线作为测试分量
    """
    verticals = vertical_cylinders(s)
    tests = [c for d in test_directions for c in cylinder_decomposition(s, d)]
    J, m = len(verticals), len(tests)
    n = J + m
    gram = [[0] * n for _ in range(n)]
    for k, c in enumerate(tests):
        for j, x in enumerate(vertical_intersections(s, c)):
            gram[j][J + k] = gram[J + k][j] = x
    for a in range(m):
        for b in range(a + 1, m):
            x = core_intersection(s, tests[a], tests[b])
            gram[J + a][J + b] = gram[J + b][J + a] = x
    ids = [f"V{j}:{c.core}" for j, c in enumerate(verticals)] + [c.core for c in tests]
    basis = ComponentBasis(tuple(ComponentSpec(i) for i in ids), tuple(tuple(r) for r in gram))
    coeffs = tuple([1] * J + [0] * m)
    areas = tuple([c.area for c in verticals] + [0] * m)
    return QDRecord(basis, coeffs, areas)


def _pairings(q: QDRecord, F: Union[MeasuredFoliation, Pairings]) -> np.ndarray:
    """i(G_j, F)，F 可以直接给成交点数向量"""
    if isinstance(F, ComponentSum):
        F = project_to(F, q.basis)
    if isinstance(F, (ComponentSum, TorusLine)):
        return np.array([float(component_pairing(q.basis, j, F)) if j in q.support else 0.0
                         for j in range(q.basis.size)])
    values = np.asarray(F, dtype=float)
    if values.shape != (q.basis.size,):
        raise RepresentationMismatchError(f"交点数向量长度应为 {q.basis.size}")
    if np.any(values < 0):
        raise InputError("交点数必须非负")
    return values


# -----------------------
# E_q 与 E*_q
# -----------------------
def eq_squared(q: QDRecord, F: Union[MeasuredFoliation, Pairings]) -> float:
    """E_q²(F) = Σ λ_j i(G_j,F)² / ι_j"""
    p = _pairings(q, F)
    return float(sum(float(q.coeffs[j]) * p[j] ** 2 / float(q.areas[j]) for j in q.support))


def eq_eval(q: QDRecord, F: Union[MeasuredFoliation, Pairings]) -> float:
    """E_q(F)，关于 F 一次齐次"""
    return math.sqrt(eq_squared(q, F))


def _express(q: QDRecord, F: MeasuredFoliation) -> Optional[Tuple[Number, ...]]:
    """把 F 写成 Σ f_j G_j（G_j 归一到 V(q) = Σ G_j），不能写时返回 None"""
    if isinstance(F, TorusLine):
        out = [0] * q.basis.size
        for j in q.support:
            tag = q.basis.components[j].tag
            if isinstance(tag, TorusLine):
                k = _parallel_ratio(tag, F)
                if k is not None:
                    out[j] = _div(F.weight * k, tag.weight * q.coeffs[j])
                    return tuple(out)
        return None
    result = dominated_by(F, q.vertical())
    return result.coeffs if result else None


def dual_eval(q: QDRecord, F: MeasuredFoliation) -> ExtReal:
    """E*_q(F) = Σ f_j² a_j（a_j = λ_j ι_j 为分量面积），F 不被 V(q) 支配时为 +∞"""
    f = _express(q, F)
    if f is None:
        return ExtReal.inf()
    return ExtReal(sum(fj * fj * q.coeffs[j] * q.areas[j] for j, fj in enumerate(f) if fj != 0))


def flip_sup(q: QDRecord, F: Union[MeasuredFoliation, Pairings]) -> float:
    """
    sup_F' i(F,F')² / E*_q(F') 的精确值

    F' 跑遍 V(q) 分量的非负组合时化为分式二次比：a_j = λ_j i(G_j,F)，b_j = λ_j ι_j。
    """
    p = _pairings(q, F)
    a = [float(q.coeffs[j]) * p[j] for j in q.support]
    b = [float(q.coeffs[j]) * float(q.areas[j]) for j in q.support]
    if not any(a):
        return 0.0
    return float(optimise_quadratic_ratio(RatioProgram(a, b)).value)


def flip_probe_sup(q: QDRecord, F: Union[MeasuredFoliation, Pairings], probes: ProbeFamily) -> float:
    """探针族上的 sup i(F,F')²/E*_q(F')，不超过 flip_sup"""
    p = _pairings(q, F)
    best = 0.0
    for Fp in probes:
        dual = dual_eval(q, Fp)
        if not dual.is_finite or float(dual) == 0:
            continue
        f = _express(q, Fp)
        pairing = sum(float(fj) * float(q.coeffs[j]) * p[j] for j, fj in enumerate(f))
        best = max(best, pairing * pairing / float(dual))
    return best


def smaller_inequality(g_f: Sequence[float], g_h: Sequence[float]) -> Tuple[float, float, bool]:
    """
    G = Σ G_j 时 i(G,F)²/i(G,H) <= Σ i(G_j,F)²/i(G_j,H)

    参数为 i(G_j,F) 与 i(G_j,H)；返回 (左边, 右边, 是否成立)。
    """
    f = np.asarray(g_f, dtype=float)
    h = np.asarray(g_h, dtype=float)
    if f.shape != h.shape or np.any(h <= 0) or np.any(f < 0):
        raise InputError("需要等长的 i(G_j,F) >= 0 与 i(G_j,H) > 0")
    lhs = float(f.sum() ** 2 / h.sum())
    rhs = float(np.sum(f * f / h))
    return lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-15


def strictness_search(profiles: np.ndarray, g_h: Sequence[float], tol: float = 1e-12) -> Optional[int]:
    """
    在探针中找使 smaller_inequality 严格成立的一个

    profiles[j, k] = i(G_j, F_k)；各分量在所有探针上都成比例时返回 None。
    """
    P = np.asarray(profiles, dtype=float)
    h = np.asarray(g_h, dtype=float)
    best, best_gap = None, tol
    for k in range(P.shape[1]):
        lhs, rhs, _ = smaller_inequality(P[:, k], h)
        if rhs - lhs > best_gap:
            best, best_gap = k, rhs - lhs
    return best


def merge_proportional(q: QDRecord) -> QDRecord:
    """
    合并互为倍数的分量（按几何标签判定）

    G_a = k·G_b 时合并为 (λ_a k + λ_b) G_b，ι 取 G_b 的，E_q 不变。
    """
    comps = q.basis.components
    coeffs = list(q.coeffs)
    keep = list(range(q.basis.size))
    for a in reversed(q.support):
        ta = comps[a].tag
        if ta is None:
            continue
        for b in q.support:
            if b >= a or b not in keep:
                continue
            tb = comps[b].tag
            if isinstance(ta, TorusLine) and isinstance(tb, TorusLine):
                k = _parallel_ratio(tb, ta)
                if k is None:
                    continue
                k = _div(ta.weight * k, tb.weight)
            elif ta == tb:
                k = 1
            else:
                continue
            coeffs[b] = coeffs[a] * k + coeffs[b]
            keep.remove(a)
            break
    if len(keep) == q.basis.size:
        return q
    basis = ComponentBasis(tuple(comps[j] for j in keep),
                           tuple(tuple(q.basis.gram[j][k] for k in keep) for j in keep))
    return QDRecord(basis, tuple(coeffs[j] for j in keep), tuple(q.areas[j] for j in keep))


# -----------------------
# 边界点与模等价
# -----------------------
@dataclass(frozen=True)
class BoundaryPoint:
    """模等价类的规范代表：λ_j/ι_j 归一到最大值为 1"""
    basis: ComponentBasis
    ratios: Tuple[float, ...]

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, r in enumerate(self.ratios) if r > 0)


def boundary_point(q: QDRecord) -> BoundaryPoint:
    r = q.ratios()
    top = max(r)
    return BoundaryPoint(q.basis, tuple(float(_div(x, top)) for x in r))


def same_boundary_point(q1: QDRecord, q2: QDRecord, tol: float = 1e-12) -> bool:
    a, b = boundary_point(q1), boundary_point(q2)
    if a.basis != b.basis or a.support != b.support:
        return False
    return all(abs(x - y) <= tol for x, y in zip(a.ratios, b.ratios))


@dataclass(frozen=True)
class ModularResult:
    equivalent: bool
    constant: Optional[Number] = None  # (λ_j/ι_j) = C·(λ'_j/ι'_j)
    reason: str = ''

    def __bool__(self):
        return self.equivalent


def modular_equivalent(q1: QDRecord, q2: QDRecord, tol: float = 1e-12) -> ModularResult:
    """支撑相同且 λ_j/ι_j ∝ λ'_j/ι'_j（同一个常数 C）"""
    if q1.basis != q2.basis:
        return ModularResult(False, None, "两个记录不在同一个基上")
    if q1.support != q2.support:
        return ModularResult(False, None, "支撑不同")
    r1, r2 = q1.ratios(), q2.ratios()
    consts = [_div(r1[j], r2[j]) for j in q1.support]
    C = consts[0]
    for c in consts[1:]:
        if abs(float(c) - float(C)) > tol * max(1.0, abs(float(C))):
            return ModularResult(False, None, "λ/ι 比值向量不成比例")
    return ModularResult(True, C, '')


# -----------------------
# sup_ratio 与绕行
# -----------------------
def sup_ratio(q: QDRecord, q2: QDRecord) -> Tuple[ExtReal, Optional[int]]:
    """
    sup_F E_q²(F) / E_q'²(F) = max_j (λ_j ι'_j) / (λ'_j ι_j)

    V(q) 不被 V(q') 支配（或两者不在同一个基上）时为 +∞；并列时取最小下标。
    """
    if q.basis != q2.basis:
        return ExtReal.inf(), None
    best, arg = None, None
    for j in q.support:
        if not q2.coeffs[j] > 0:
            return ExtReal.inf(), None
        value = _div(q.coeffs[j] * q2.areas[j], q2.coeffs[j] * q.areas[j])
        if best is None or value > best:
            best, arg = value, j
    return ExtReal(best), arg


def half_log(x: ExtReal) -> ExtReal:
    if not x.is_finite:
        return ExtReal.inf()
    return ExtReal(0.5 * math.log(float(x.value)))


def detour_metric(q: QDRecord, q2: QDRecord) -> ExtReal:
    """δ = (1/2)log sup_ratio(q,q') + (1/2)log sup_ratio(q',q)；与两个记录的缩放无关"""
    a, _ = sup_ratio(q, q2)
    b, _ = sup_ratio(q2, q)
    if not (a.is_finite and b.is_finite):
        return ExtReal.inf()
    # 舍入可能给出 -1e-17 量级
    return ExtReal(max(0.0, float(half_log(a).value) + float(half_log(b).value)))


def same_part(q: QDRecord, q2: QDRecord) -> bool:
    return detour_metric(q, q2).is_finite


ExtFunction = Callable[[MeasuredFoliation], float]


def _ext_at(x: Union[TorusPoint, ExtFunction], F: MeasuredFoliation) -> float:
    if isinstance(x, TorusPoint):
        if not isinstance(F, TorusLine):
            raise RepresentationMismatchError("环面点上只能对环面直线求极值长度")
        return torus_ext_length(x, F)
    return float(x(F))


def probe_sup(q: QDRecord, x: Union[TorusPoint, ExtFunction], probes: ProbeFamily) -> float:
    """max_{F ∈ probes} E_q²(F) / Ext_x(F)"""
    if len(probes) == 0:
        raise InputError("探针族为空")
    return max(eq_squared(q, F) / _ext_at(x, F) for F in probes)


def _require_unit(*records: QDRecord):
    for r in records:
        if not r.is_unit:
            raise NormalizationError(f"需要单位面积记录，当前面积 {float(r.total_area)}")


def detour_cost(q2: QDRecord, q: QDRecord, probes: ProbeFamily, b: Union[TorusPoint, ExtFunction]) -> ExtReal:
    """
    H(E_q', E_q) = (1/2)log S(q') + (1/2)log sup_ratio(q, q') - (1/2)log S(q)

    S(·) = sup_F E²(F)/Ext_b(F) 在探针族上取；环面上精确，其他情形是估计。
    """
    _require_unit(q, q2)
    middle, _ = sup_ratio(q, q2)
    if not middle.is_finite:
        return ExtReal.inf()
    s2, s1 = probe_sup(q2, b, probes), probe_sup(q, b, probes)
    return ExtReal(0.5 * math.log(s2) + 0.5 * math.log(float(middle.value)) - 0.5 * math.log(s1))


def horofunction_eval(q: QDRecord, x: Union[TorusPoint, ExtFunction], probes: ProbeFamily,
                      b: Union[TorusPoint, ExtFunction]) -> float:
    """ψ_q(x) = (1/2)log sup E_q²/Ext_x - (1/2)log sup E_q²/Ext_b，上确界取在探针族上"""
    return 0.5 * math.log(probe_sup(q, x, probes)) - 0.5 * math.log(probe_sup(q, b, probes))


# -----------------------
# 模等价代表：映射 M 的不动点
# -----------------------
class SyntheticOracle:
    """
    测试用 Hubbard–Masur 替身：各分量面积 = Aλ（A 为正矩阵）

    只用来检验求解器，它满足一次齐次与正性，但不是真正的 Hubbard–Masur 映射。
    """
    exact = False

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1] or np.any(self.A <= 0):
            raise InputError("合成 oracle 需要正方正矩阵")

    def __call__(self, x, lam: np.ndarray) -> np.ndarray:
        return self.A @ lam


class TorusOracle:
    """环面（J = 1）：i(G, τ_x(λG)) = λ·Ext_x(G)，经 torus_hm_oracle 计算"""
    exact = True

    def __init__(self, basis: ComponentBasis):
        if basis.size != 1 or not isinstance(basis.components[0].tag, TorusLine):
            raise InputError("环面 oracle 需要单个带环面直线标签的分量")
        self.basis = basis

    def __call__(self, x: TorusPoint, lam: np.ndarray) -> np.ndarray:
        tag = self.basis.components[0].tag
        H = torus_hm_oracle(x, TorusLine(tag.direction, float(lam[0]) * float(tag.weight)))
        return np.array([float(component_pairing(self.basis, 0, H))])


HMOracle = Callable[[object, np.ndarray], np.ndarray]


@dataclass
class ModularSolution:
    lambda_star: np.ndarray  # 最大分量归一为 1
    residual: float
    iterations: int
    history: List[float] = field(default_factory=list, repr=False)

    def to_json(self) -> Dict:
        return {'lambda_star': self.lambda_star.tolist(), 'residual': self.residual, 'iterations': self.iterations}


def _sup_normalize(v: np.ndarray) -> np.ndarray:
    return v / np.max(v)


def modular_solve(target: QDRecord, x, oracle: HMOracle, start: Optional[Sequence[float]] = None,
                  max_iter: Optional[int] = None, tol: Optional[float] = None,
                  progress: Optional[Callable[[str], None]] = None) -> ModularSolution:
    """
    求 λ*，使 λ*_j / ι_j(λ*) ∝ 目标比值 r_j = λ_j/ι_j

    迭代 λ <- normalize(r ⊙ oracle(x, λ))，残差变大时按 damping 混合新旧值。
    """
    cfg = CALC_CONFIG['modular_solver']
    max_iter = int(cfg['max_iter'] if max_iter is None else max_iter)
    tol = cfg['tol'] if tol is None else tol
    damping = cfg['damping']
    supp = list(target.support)
    n = target.basis.size
    r = np.array([float(target.ratios()[j]) for j in supp])

    lam_full = np.zeros(n)
    init = np.array([float(target.coeffs[j]) for j in supp]) if start is None else np.asarray(start, dtype=float)
    if init.shape != (len(supp),) or np.any(init <= 0):
        raise InputError(f"初始值必须是 {len(supp)} 个正数")
    lam = _sup_normalize(init)

    def step(v):
        lam_full[supp] = v
        areas = np.asarray(oracle(x, lam_full.copy()), dtype=float)[supp]
        if np.any(areas <= 0):
            raise InputError("oracle 在正锥内给出了非正面积")
        return _sup_normalize(r * areas)

    history: List[float] = []
    previous = math.inf
    for it in range(1, max_iter + 1):
        new = step(lam)
        res = float(np.max(np.abs(new - lam)))
        history.append(res)
        if res > previous:
            new = _sup_normalize((1 - damping) * new + damping * lam)
        previous = res
        lam = new
        if res < tol:
            return ModularSolution(lam, res, it, history)
        if progress is not None and it % 1000 == 0:
            progress(f"🔄 模方程迭代 {it}: 残差 {res:.3e}")
    raise NonConvergenceError(f"模方程在 {max_iter} 次迭代内未收敛", history[-100:])


@dataclass
class MultiStartResult:
    solutions: List[ModularSolution]
    spread: float  # 各解之间的最大射影距离（sup 范数，归一后）

    @property
    def best(self) -> ModularSolution:
        return min(self.solutions, key=lambda s: s.residual)


def modular_multistart(target: QDRecord, x, oracle: HMOracle, starts: Optional[int] = None,
                       seed: Optional[int] = None, **kwargs) -> MultiStartResult:
    """从随机正初值多次求解并报告射影散布"""
    starts = CALC_CONFIG['modular_solver']['starts'] if starts is None else starts
    seed = CALC_CONFIG['seed'] if seed is None else seed
    rng = np.random.default_rng(seed)
    J = len(target.support)
    sols = [modular_solve(target, x, oracle, start=rng.uniform(0.1, 10.0, size=J), **kwargs)
            for _ in range(starts)]
    spread = 0.0
    for a in sols:
        for b in sols:
            spread = max(spread, float(np.max(np.abs(a.lambda_star - b.lambda_star))))
    verbose_log(f"✅ 多起点求解完成：{starts} 个起点，射影散布 {spread:.3e}")
    return MultiStartResult(sols, spread)


# -----------------------
# 环面上的最优路径性质
# -----------------------
def optimal_path_check(q: TorusQD, ts: Sequence[float], probes: ProbeFamily) -> pd.DataFrame:
    """沿 q 的射线 ψ_q(R(q;t)) 应等于 -t"""
    record = torus_record(q)
    rows = []
    for t in ts:
        psi = horofunction_eval(record, torus_ray(q, t), probes, q.base)
        rows.append({'t': float(t), 'psi': psi, 'expected': -float(t), 'error': abs(psi + t)})
    return pd.DataFrame(rows, columns=['t', 'psi', 'expected', 'error'])


@dataclass
class UniqueOptimalResult:
    ray_point: TorusPoint
    ray_violation: float  # 射线上的点对两个等式的偏离
    off_ray_margin: float  # 其余格点中偏离最小者
    points: int


def unique_optimal_grid(q: TorusQD, r: float, probes: ProbeFamily, re_values: Sequence[float],
                        im_values: Sequence[float]) -> UniqueOptimalResult:
    """
    在上半平面格点上检验：同时满足 d(b,x) = r 与 ψ_q(x) = -r 的点只有射线上的 R(q;r)
    """
    record = torus_record(q)
    target = torus_ray(q, r)

    def violation(x: TorusPoint) -> float:
        d = torus_distance(q.base, x)
        psi = horofunction_eval(record, x, probes, q.base)
        return max(abs(d - r), abs(psi + r))

    margin = math.inf
    count = 0
    for re in re_values:
        for im in im_values:
            x = TorusPoint(complex(re, im))
            if abs(x.tau - target.tau) < 1e-9:
                continue
            margin = min(margin, violation(x))
            count += 1
    return UniqueOptimalResult(target, violation(target), margin, count)


def convergent_rays_check(q: TorusQD, q2: TorusQD, ts: Sequence[float]) -> pd.DataFrame:
    """同一模类（环面上即同一竖直方向）的两条射线在匹配时间上的距离，应趋于 0"""
    if not modular_equivalent(torus_record(q), torus_record(q2)):
        raise InputError("两条射线的竖直叶状结构不在同一模类")
    rows = [{'t': float(t), 'distance': matched_ray_distance(q, q2, t)} for t in ts]
    return pd.DataFrame(rows, columns=['t', 'distance'])


# -----------------------
# Busemann 收敛判据
# -----------------------
@dataclass(frozen=True)
class ComponentTrack:
    """序列中一个分量的轨迹及其声明的极限（极限记录基上的系数）"""
    id: str
    limit: Tuple[Number, ...]

    @property
    def indecomposable(self) -> bool:
        return sum(1 for c in self.limit if c != 0) == 1


@dataclass
class BusemannCheck:
    status: str  # 'converges' | 'fails(i)' | 'fails(ii)'
    witness: Optional[str] = None

    def to_json(self) -> Dict:
        return {'status': self.status, 'witness': self.witness}


def _distance_to_limit(q: QDRecord, limit: QDRecord) -> float:
    """系数与面积的 sup 距离；基不同时为 +∞"""
    if q.basis != limit.basis:
        return math.inf
    return max(abs(float(a) - float(b)) for a, b in zip(q.coeffs + q.areas, limit.coeffs + limit.areas))


def tail_converges(distances: Sequence[float], tol: float, window: int, tail_ratio: float) -> bool:
    """
    由有限前缀判断 d_n -> 0

    最后一项已在 tol 内即收敛；否则要求最后 window 项严格下降，
    且最后一项不超过首项的 tail_ratio 倍。
    """
    last = distances[-1]
    if last <= tol:
        return True
    if not math.isfinite(last):
        return False
    tail = distances[-window:]
    if len(tail) < 2 or not all(b < a for a, b in zip(tail, tail[1:])):
        return False
    first = next(d for d in distances if math.isfinite(d))
    return last <= tail_ratio * first


def busemann_limit_check(seq: Sequence[QDRecord], tracks: Sequence[ComponentTrack], limit: QDRecord,
                         tol: Optional[float] = None, window: Optional[int] = None,
                         tail_ratio: Optional[float] = None) -> BusemannCheck:
    """
    (i) q_n 收敛到 q；(ii) 每条分量轨迹的极限都不可分解

    只检查声明的极限数据：各轨迹极限之和必须等于极限记录的 V(q)，否则是输入错误。
    (i) 按到极限的距离序列的尾部趋势判断，参数默认取 CALC_CONFIG['busemann']。
    """
    cfg = CALC_CONFIG['busemann']
    tol = cfg['tol'] if tol is None else tol
    window = cfg['window'] if window is None else window
    tail_ratio = cfg['tail_ratio'] if tail_ratio is None else tail_ratio
    if not seq:
        raise InputError("序列为空")
    if window < 2:
        raise InputError(f"window 必须 >= 2: {window}")
    n = limit.basis.size
    total = [0.0] * n
    for tr in tracks:
        if len(tr.limit) != n:
            raise InputError(f"轨迹 {tr.id} 的极限长度应为 {n}")
        for j, c in enumerate(tr.limit):
            total[j] += float(c)
    if any(abs(a - float(b)) > tol * max(1.0, abs(float(b))) for a, b in zip(total, limit.coeffs)):
        raise InputError("各轨迹极限之和与极限记录的 V(q) 不一致")
    distances = [_distance_to_limit(q, limit) for q in seq]
    if not tail_converges(distances, tol, window, tail_ratio):
        verbose_log(f"⚠️ 序列末项到极限的距离 {distances[-1]:.3e}，首项 {distances[0]:.3e}")
        return BusemannCheck('fails(i)', None)
    for tr in tracks:
        if not tr.indecomposable:
            return BusemannCheck('fails(ii)', tr.id)
    return BusemannCheck('converges', None)
