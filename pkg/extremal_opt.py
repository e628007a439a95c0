"""
优化引擎 - 分式二次比的闭式最大值、矩形剖分上的离散极值长度、
有限时间下界见证，以及探针族上的距离估计
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from config import CALC_CONFIG
from errors import InputError, NonConvergenceError
from extreal import ExtReal
from flat_torus import TorusPoint, TorusQD, torus_ext_length, torus_ray
from foliation import ProbeFamily, TorusLine, intersection
from square_tiled import (Cylinder, Origami, Rectangulation, _cycles,
                          cylinder_decomposition, geodesic_flow, vertical_cylinders,
                          vertical_intersections)
from straighten import ChordCurve, core_chord_curve, crossing_signature


# -----------------------
# 分式二次比
# -----------------------
@dataclass(frozen=True)
class RatioProgram:
    """max_x (Σ a_j x_j)² / Σ b_j x_j²，x >= 0"""
    a: Tuple[float, ...]
    b: Tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(x) for x in self.a)
        b = tuple(float(x) for x in self.b)
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)
        if len(a) != len(b) or not a:
            raise InputError("a 与 b 必须是等长的非空向量")
        if any(x < 0 for x in a + b):
            raise InputError("a、b 必须非负")
        if any(x == 0 and y == 0 for x, y in zip(a, b)):
            raise InputError("不允许 a_j = b_j = 0 的坐标")


@dataclass(frozen=True)
class RatioSolution:
    value: ExtReal
    argmax: np.ndarray  # 最大分量归一为 1
    unbounded: bool = False  # 某个 b_j = 0 且 a_j > 0

    def to_json(self) -> Dict:
        return {'value': self.value.to_json(), 'argmax': self.argmax.tolist(), 'unbounded': self.unbounded}


def ratio_at(p: RatioProgram, x: Sequence[float]) -> ExtReal:
    """目标函数在 x 处的值"""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(p.a),) or np.any(x < 0):
        raise InputError("x 必须是与 a 等长的非负向量")
    a, b = np.asarray(p.a), np.asarray(p.b)
    num = float(a @ x) ** 2
    den = float(b @ (x * x))
    if den == 0:
        if num > 0:
            return ExtReal.inf()
        raise InputError("x 使分子分母同时为零")
    return ExtReal(num / den)


def optimise_quadratic_ratio(p: RatioProgram) -> RatioSolution:
    """
    闭式解：最大值 Σ a_j²/b_j，在 x_j ∝ a_j/b_j 处取到

    若某个 b_j = 0 而 a_j > 0，沿该坐标比值无界，返回 +∞ 并标记。
    """
    a, b = np.asarray(p.a), np.asarray(p.b)
    free = (b == 0) & (a > 0)
    if free.any():
        x = free.astype(float)
        return RatioSolution(ExtReal.inf(), x / x.max(), True)
    x = a / b
    value = float(np.sum(a * a / b))
    top = x.max()
    argmax = x / top if top > 0 else np.ones_like(x)
    return RatioSolution(ExtReal(value), argmax, False)


# -----------------------
# 下界见证
# -----------------------
def component_data(s: Origami, F: Union[Cylinder, Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
    """
    竖直方向的分量数据 (a_j, i_j)

    a_j = i(G_j, H(q)) 是竖直柱面面积；i_j = i(G_j, F)，F 为柱面时取其核心曲线。
    """
    cyls = vertical_cylinders(s)
    areas = np.array([float(c.area) for c in cyls])
    if isinstance(F, Cylinder):
        inter = np.array([float(x) for x in vertical_intersections(s, F)])
    else:
        inter = np.asarray(F, dtype=float)
        if inter.shape != areas.shape:
            raise InputError(f"交点数个数 {inter.size} 与竖直柱面数 {areas.size} 不一致")
    if np.any(inter < 0):
        raise InputError("交点数必须非负")
    return areas, inter


def optimal_theta(areas: Sequence[float], inter: Sequence[float]) -> np.ndarray:
    """θ_j = i(G_j,F) / i(G_j,H(q))"""
    return np.asarray(inter, dtype=float) / np.asarray(areas, dtype=float)


def lower_bound_witness(s: Origami, t: float, theta: Optional[Sequence[float]],
                        F: Union[Cylinder, Sequence[float]]) -> float:
    """
    构造度量 ρ = θ_j（第 j 个柱面上）给出的 L²/A，再除以 e^(2t)

    L_ρ(F) >= e^t Σ θ_j i(G_j,F)，A(ρ) = Σ θ_j² i(G_j,H(q))，
    所以结果 (Σ θ_j i_j)² / Σ θ_j² a_j 与 t 无关；theta=None 取最优权重。
    """
    areas, inter = component_data(s, F)
    theta = optimal_theta(areas, inter) if theta is None else np.asarray(theta, dtype=float)
    if theta.shape != areas.shape:
        raise InputError(f"θ 个数 {theta.size} 与竖直柱面数 {areas.size} 不一致")
    if np.any(theta < 0):
        raise InputError("θ 必须非负")
    area = float(np.sum(theta * theta * areas))
    if area == 0:
        return 0.0
    length = math.exp(t) * float(theta @ inter)
    return length * length / area / math.exp(2.0 * t)


# -----------------------
# 离散极值长度
# -----------------------
LOWER_METHODS = ('iterative-reweighting', 'cylinder-metric', 'holonomy')


@dataclass
class ExtLenEstimate:
    lower: float
    upper: ExtReal
    converged: bool
    grid: int
    iterations: int = 0
    methods: Tuple[str, ...] = LOWER_METHODS + ('embedded-cylinder',)
    history: List[float] = field(default_factory=list, repr=False)
    lower_method: str = 'iterative-reweighting'  # 取到下界最大值的度量族

    def to_json(self) -> Dict:
        return {
            'lower': self.lower,
            'upper': self.upper.to_json(),
            'converged': self.converged,
            'grid': self.grid,
            'iterations': self.iterations,
            'methods': list(self.methods),
            'lower_method': self.lower_method,
        }


STEPS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
MAX_NODES = 5_000_000


class _GridGraph:
    """
    k×k 细分每个正方形的八邻接格图，带中线穿越计数的分层

    计数器依次是各 v 轨道的竖直中线和各 h 轨道的水平中线，
    窗口 [min(0,n)-1, max(0,n)+1]；斜步不跨正方形角点。
    """

    def __init__(self, R: Rectangulation, target: Sequence[int], k: int):
        s = R.origami
        self.k = k
        self.n_sq = s.n
        self.cells = s.n * k * k
        W, H = R.cell
        self.dx, self.dy = W / k, H / k
        # 八邻接步长与欧氏长度之比的上界：相邻两个生成方向夹角 φ 时为 1/cos(φ/2)
        diagonal = math.atan2(self.dy, self.dx)
        self.distortion = 1.0 / math.cos(max(diagonal, math.pi / 2 - diagonal) / 2)
        self.diag = math.hypot(self.dx, self.dy)
        vcyc, hcyc = _cycles(s.v), _cycles(s.h)
        self.vidx = {i: j for j, cyc in enumerate(vcyc) for i in cyc}
        self.hidx = {i: len(vcyc) + j for j, cyc in enumerate(hcyc) for i in cyc}
        self.vcycles = vcyc
        self.hcycles = hcyc
        self.target = np.asarray(target, dtype=int)
        n_cnt = self.target.size
        self.lo = np.minimum(0, self.target) - 1
        self.widths = np.maximum(0, self.target) + 1 - self.lo + 1
        self.layers = int(np.prod(self.widths))
        if self.layers * self.cells > MAX_NODES:
            raise InputError(f"分层格图过大（{self.layers} 层 × {self.cells} 格），请降低分辨率")

        src, dst, length, delta = [], [], [], []
        half = k // 2
        for sq in range(s.n):
            for i in range(k):
                for j in range(k):
                    for di, dj in STEPS:
                        ni, nj, nsq = i + di, j + dj, sq
                        cross_x = not 0 <= ni < k
                        cross_y = not 0 <= nj < k
                        if cross_x and cross_y:
                            continue
                        if ni == k:
                            nsq, ni = s.h[sq], 0
                        elif ni < 0:
                            nsq, ni = s.h_inv[sq], k - 1
                        if nj == k:
                            nsq, nj = s.v[nsq], 0
                        elif nj < 0:
                            nsq, nj = s.v_inv[nsq], k - 1
                        d = np.zeros(n_cnt, dtype=int)
                        if di == 1 and i == half - 1:
                            d[self.vidx[sq]] += 1
                        elif di == -1 and i == half:
                            d[self.vidx[sq]] -= 1
                        if dj == 1 and j == half - 1:
                            d[self.hidx[sq]] += 1
                        elif dj == -1 and j == half:
                            d[self.hidx[sq]] -= 1
                        src.append(self.cell(sq, i, j))
                        dst.append(self.cell(nsq, ni, nj))
                        length.append(math.hypot(di * self.dx, dj * self.dy))
                        delta.append(d)
        self.step_src = np.array(src)
        self.step_dst = np.array(dst)
        self.step_len = np.array(length)
        deltas = np.array(delta).reshape(len(delta), n_cnt)

        # 各层的计数状态
        states = np.array(np.unravel_index(np.arange(self.layers), tuple(self.widths))).T + self.lo
        rows, cols, step_ids = [], [], []
        kinds, inverse = np.unique(deltas, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        for kind_id, d in enumerate(kinds):
            moved = states + d
            ok = np.all((moved >= self.lo) & (moved < self.lo + self.widths), axis=1)
            from_layers = np.nonzero(ok)[0]
            to_layers = np.ravel_multi_index(tuple((moved[ok] - self.lo).T), tuple(self.widths))
            steps = np.nonzero(inverse == kind_id)[0]
            rows.append((from_layers[:, None] * self.cells + self.step_src[steps][None, :]).ravel())
            cols.append((to_layers[:, None] * self.cells + self.step_dst[steps][None, :]).ravel())
            step_ids.append(np.broadcast_to(steps[None, :], (from_layers.size, steps.size)).ravel())
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.step_ids = np.concatenate(step_ids)
        self.nodes = self.layers * self.cells

        # 切口：在第一个非零计数器对应的中线处，沿正方向横穿
        nz = np.nonzero(self.target)[0]
        self.cut = int(nz[0])
        sign = int(np.sign(self.target[self.cut]))
        before, after = [], []
        if self.cut < len(vcyc):
            for sq in vcyc[self.cut]:
                for r in range(k):
                    a, b = self.cell(sq, half - 1, r), self.cell(sq, half, r)
                    before.append(a if sign > 0 else b)
                    after.append(b if sign > 0 else a)
            self.cut_len = self.dx
        else:
            for sq in hcyc[self.cut - len(vcyc)]:
                for c in range(k):
                    a, b = self.cell(sq, c, half - 1), self.cell(sq, c, half)
                    before.append(a if sign > 0 else b)
                    after.append(b if sign > 0 else a)
            self.cut_len = self.dy
        start = np.zeros(n_cnt, dtype=int)
        start[self.cut] = sign
        self.start_layer = self.layer_of(start)
        self.end_layer = self.layer_of(self.target)
        self.before = np.array(before)
        self.after = np.array(after)

    def cell(self, sq: int, i: int, j: int) -> int:
        return (sq * self.k + i) * self.k + j

    def layer_of(self, state) -> int:
        return int(np.ravel_multi_index(tuple(np.asarray(state) - self.lo), tuple(self.widths)))

    def shortest_loop(self, rho: np.ndarray) -> Tuple[float, np.ndarray]:
        """当前 ρ 下满足目标计数的最短闭路径，返回 (长度, 经过的格)"""
        w = 0.5 * (rho[self.step_src] + rho[self.step_dst]) * self.step_len
        G = csr_matrix((w[self.step_ids], (self.rows, self.cols)), shape=(self.nodes, self.nodes))
        sources = self.start_layer * self.cells + self.after
        targets = self.end_layer * self.cells + self.before
        dist, pred = dijkstra(G, directed=True, indices=sources, return_predecessors=True)
        closing = 0.5 * (rho[self.before] + rho[self.after]) * self.cut_len
        totals = dist[np.arange(sources.size), targets] + closing
        best = int(np.argmin(totals))
        if not np.isfinite(totals[best]):
            raise InputError("格图中没有该类的闭路径")
        path = [targets[best]]
        node = targets[best]
        while node != sources[best]:
            node = pred[best, node]
            path.append(node)
        return float(totals[best]), np.array(path) % self.cells

    def certified(self, length: float, rho: np.ndarray) -> float:
        """格路长度换成连续曲线 ρ-长度的下界：去掉两端各一个格对角线，再除以步长畸变"""
        return max(0.0, length - 2.0 * float(rho.max()) * self.diag) / self.distortion


def _holonomy(R: Rectangulation, target: Sequence[int]) -> Tuple[int, int]:
    """曲线类的和乐（以正方形为单位）：竖直中线穿越总数、水平中线穿越总数"""
    n_v = len(_cycles(R.origami.v))
    return sum(target[:n_v]), sum(target[n_v:])


def _holonomy_lower(R: Rectangulation, target: Sequence[int]) -> float:
    """常值度量：闭曲线长度不小于和乐向量的长度，Ext >= |hol|²/面积"""
    W, H = R.cell
    p, q = _holonomy(R, target)
    x, y = p * W, q * H
    return (x * x + y * y) / (R.origami.n * W * H)


def _cylinder_metric_lower(R: Rectangulation, target: Sequence[int]) -> float:
    """
    竖直或水平柱面上分片常值的度量

    曲线与第 j 个柱面核心代数相交 n_j 次时至少横穿该柱面 |n_j| 次，
    所以 L_ρ >= Σ ρ_j·宽_j·|n_j|，A(ρ) = Σ ρ_j²·面积_j，最优 ρ 取闭式解。
    """
    s = R.origami
    W, H = R.cell
    vcyc, hcyc = _cycles(s.v), _cycles(s.h)
    best = 0.0
    for cycles, counts, across in ((vcyc, target[:len(vcyc)], W), (hcyc, target[len(vcyc):], H)):
        if not any(counts):
            continue
        p = RatioProgram([across * abs(n) for n in counts], [len(cyc) * W * H for cyc in cycles])
        best = max(best, float(optimise_quadratic_ratio(p).value))
    return best


def _cylinder_upper(R: Rectangulation, target: Tuple[int, ...], span: int = 3) -> ExtReal:
    """
    与目标类同伦的嵌入柱面给出的 circumference²/area 的最小值

    候选方向：|p|,|q| <= span 的本原方向，再加上曲线类自身的和乐方向。
    """
    s = R.origami
    W, H = R.cell
    neg = tuple(-x for x in target)
    directions = {(p, q) for p in range(-span, span + 1) for q in range(0, span + 1)
                  if math.gcd(p, q) == 1 and not (q == 0 and p <= 0)}
    hx, hy = _holonomy(R, target)
    if hx or hy:
        g = math.gcd(hx, hy)
        p, q = hx // g, hy // g
        if q < 0 or (q == 0 and p < 0):
            p, q = -p, -q
        directions.add((p, q))
    best = ExtReal.inf()
    for direction in sorted(directions):
        for cyl in cylinder_decomposition(s, direction):
            sig = crossing_signature(core_chord_curve(s, cyl), R)
            if sig != target and sig != neg:
                continue
            x, y = float(cyl.holonomy[0]) * W, float(cyl.holonomy[1]) * H
            area = float(cyl.area) * W * H
            value = ExtReal((x * x + y * y) / area)
            if value < best:
                best = value
    return best


def _bracket_closed(lower: float, upper: ExtReal) -> bool:
    rtol = CALC_CONFIG['tolerances']['closed_form']
    return upper.is_finite and lower >= float(upper) * (1.0 - rtol)


def discrete_ext_length(R: Rectangulation, c: ChordCurve, k: Optional[int] = None,
                        max_iter: Optional[int] = None, progress: Optional[Callable[[str], None]] = None
                        ) -> ExtLenEstimate:
    """
    离散极值长度估计

    参数：
        R       : origami 生成的矩形剖分（可以已流动）
        c       : 代表曲线类的弦曲线，按中线穿越签名识别类
        k       : 每个正方形的细分数（取不小于 4 的偶数）
        max_iter: 重加权迭代上限
        progress: 进度回调

    返回：
        ExtLenEstimate；下界取柱面度量、常值度量与格图重加权三者的最大值，上界来自嵌入柱面。
        上下界已经闭合时不再迭代。

    异常：
        NonConvergenceError: 下界超过上界（估计本身出错），消息里给出两个值
    """
    if R.origami is None:
        raise InputError("离散极值长度需要由 origami 生成的矩形剖分")
    cfg = CALC_CONFIG['discrete_solver']
    k = cfg['grid'] if k is None else k
    if k < 1:
        raise InputError(f"分辨率 k 必须 >= 1: {k}")
    k_eff = max(4, k + (k % 2))
    max_iter = cfg['max_iter'] if max_iter is None else max_iter
    window, tol = cfg['window'], cfg['tol']

    target = crossing_signature(c, R)
    if not any(target):
        raise InputError("曲线的中线穿越签名为零，无法识别曲线类")
    upper = _cylinder_upper(R, target)
    bounds = {'cylinder-metric': _cylinder_metric_lower(R, target), 'holonomy': _holonomy_lower(R, target)}
    lower_method = max(bounds, key=bounds.get)
    best = bounds[lower_method]
    history: List[float] = []
    converged = _bracket_closed(best, upper)
    it = 0
    if not converged:
        graph = _GridGraph(R, target, k_eff)
        W, H = R.cell
        cell_area = W * H / (k_eff * k_eff)
        rho = np.ones(graph.cells)
        rho /= math.sqrt(float(np.sum(rho * rho)) * cell_area)
        for it in range(1, max_iter + 1):
            length, path = graph.shortest_loop(rho)
            value = graph.certified(length, rho) ** 2
            if value > best:
                best, lower_method = value, 'iterative-reweighting'
            history.append(best)
            if _bracket_closed(best, upper):
                converged = True
                break
            if it > window and history[-1] - history[-1 - window] < tol:
                converged = True
                break
            eta = 1.0 / math.sqrt(it)
            on_path = np.zeros(graph.cells, dtype=bool)
            on_path[path] = True
            rho = rho * (1.0 + eta * on_path)
            rho /= math.sqrt(float(np.sum(rho * rho)) * cell_area)
            if progress is not None and it % 100 == 0:
                progress(f"🔄 迭代 {it}: L²/A = {value:.6f}，当前最优 {best:.6f}")
    if best > float(upper) * (1.0 + CALC_CONFIG['tolerances']['closed_form']):
        raise NonConvergenceError(
            f"离散极值长度下界 {best:.9g}（{lower_method}）超过上界 {float(upper):.9g}", history or [best])
    return ExtLenEstimate(best, upper, converged, k_eff, it, LOWER_METHODS + ('embedded-cylinder',), history,
                          lower_method)


def extlen_table(R: Rectangulation, c: ChordCurve, ts: Sequence[float], k: Optional[int] = None,
                 max_iter: Optional[int] = None) -> pd.DataFrame:
    """沿测地流各时刻的离散极值长度表：t, lower, upper, converged"""
    rows = []
    for t in ts:
        est = discrete_ext_length(geodesic_flow(R, t), c, k, max_iter)
        rows.append({'t': float(t), 'lower': est.lower, 'upper': float(est.upper), 'converged': est.converged})
    return pd.DataFrame(rows, columns=['t', 'lower', 'upper', 'converged'])


# -----------------------
# 距离估计
# -----------------------
ExtOracle = Callable[[TorusLine], ExtLenEstimate]


def _ext_bounds(point: Union[TorusPoint, ExtOracle], F) -> Tuple[float, float]:
    if isinstance(point, TorusPoint):
        e = torus_ext_length(point, F)
        return e, e
    est = point(F)
    return est.lower, float(est.upper)


def distance_estimate(x: Union[TorusPoint, ExtOracle], y: Union[TorusPoint, ExtOracle],
                      probes: ProbeFamily) -> float:
    """
    d(x,y) >= (1/2)·log max_F Ext_y(F)/Ext_x(F)

    分子取 y 的下界、分母取 x 的上界，得到可证的下界；环面上两者都是精确值。
    """
    if len(probes) == 0:
        raise InputError("探针族为空")
    best = 0.0
    for F in probes:
        lo_y, _ = _ext_bounds(y, F)
        _, up_x = _ext_bounds(x, F)
        if not math.isfinite(up_x) or up_x <= 0:
            continue
        best = max(best, lo_y / up_x)
    if best <= 1.0:
        return 0.0
    return 0.5 * math.log(best)


# -----------------------
# 批量求值
# -----------------------
def _torus_row(q: TorusQD, t: float, F: TorusLine) -> Dict:
    x_t = torus_ray(q, t)
    scaled = torus_ext_length(x_t, F) * math.exp(-2.0 * t)
    iv = float(intersection(F, q.vertical))
    ih = float(intersection(F, q.horizontal))
    e2 = iv * iv / q.area
    return {
        't': t,
        'p': float(F.direction[0]),
        'q': float(F.direction[1]),
        'weight': float(F.weight),
        'ext_scaled': scaled,
        'e_squared': e2,
        'gap': scaled - e2,
        'gap_closed_form': ih * ih * math.exp(-4.0 * t),
    }


def batch_evaluate(q: TorusQD, ts: Sequence[float], Fs: Sequence[TorusLine], workers: int = 1) -> pd.DataFrame:
    """
    在 (t, F) 网格上并行求 e^(-2t)·Ext 与 E_q²(F)

    workers > 1 时用线程池，各格点之间没有共享状态。
    """
    grid = [(float(t), F) for t in ts for F in Fs]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda item: _torus_row(q, *item), grid))
    else:
        rows = [_torus_row(q, t, F) for t, F in grid]
    return pd.DataFrame(rows, columns=['t', 'p', 'q', 'weight', 'ext_scaled', 'e_squared', 'gap', 'gap_closed_form'])
