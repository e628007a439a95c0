"""
弦曲线与拉直算法

曲线表示为矩形剖分上的弦序列：第 n 条弦是矩形 rect_n 中边界点 p_n 到 q_n 的线段。
坐标一律取矩形内的单位局部坐标 (u, w) ∈ [0,1]²，度量量按 (W, H) 缩放，
因此测地流只改变度量、不改变组合。拉直只在 origami 整边粘合的剖分上进行。

条件（与拉直移动一一对应）：
  (i)   相邻弦首尾粘合；
  (ii)  两条都不水平的相邻弦拼接后对水平叶状结构横截（纵向单调）；
  (iii) 落在同一水平边上的弦，两端都是角点；
  (iv)  长度 < l 的弦，其前后至少一条是水平弦。
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from config import CALC_CONFIG, log
from errors import InputError, NonConvergenceError
from square_tiled import Cylinder, Origami, Rectangulation, _cycles, core_segments

Point = Tuple[Fraction, Fraction]
HALF = Fraction(1, 2)


def _pt(p) -> Point:
    try:
        u, w = p
        u, w = Fraction(u), Fraction(w)
    except (TypeError, ValueError):
        raise InputError(f"点必须是 (u, w) 二元组: {p}")
    if not (0 <= u <= 1 and 0 <= w <= 1):
        raise InputError(f"局部坐标必须在 [0,1] 内: {p}")
    return (u, w)


def _on_boundary(p: Point) -> bool:
    return p[0] in (0, 1) or p[1] in (0, 1)


def _is_corner(p: Point) -> bool:
    return p[0] in (0, 1) and p[1] in (0, 1)


@dataclass(frozen=True)
class Chord:
    rect: int
    p: Point
    q: Point

    def __post_init__(self):
        object.__setattr__(self, 'p', _pt(self.p))
        object.__setattr__(self, 'q', _pt(self.q))
        if not (_on_boundary(self.p) and _on_boundary(self.q)):
            raise InputError(f"弦的端点必须在矩形边界上: {self}")

    @property
    def du(self) -> Fraction:
        return self.q[0] - self.p[0]

    @property
    def dw(self) -> Fraction:
        return self.q[1] - self.p[1]

    @property
    def horizontal(self) -> bool:
        return self.dw == 0 and self.du != 0

    @property
    def degenerate(self) -> bool:
        return self.p == self.q

    def on_horizontal_edge(self) -> bool:
        return self.dw == 0 and self.p[1] in (0, 1)

    def reversed(self) -> "Chord":
        return Chord(self.rect, self.q, self.p)

    def to_json(self) -> Dict:
        return {'rect': self.rect, 'p': [str(x) for x in self.p], 'q': [str(x) for x in self.q]}


@dataclass(frozen=True)
class ChordCurve:
    """闭合弦序列（循环下标）；corner_distance 记录拉直时使用的 l"""
    chords: Tuple[Chord, ...]
    corner_distance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'chords', tuple(self.chords))
        if not self.chords:
            raise InputError("弦曲线至少需要一条弦")

    def __len__(self):
        return len(self.chords)

    def reversed(self) -> "ChordCurve":
        return ChordCurve(tuple(c.reversed() for c in reversed(self.chords)), self.corner_distance)

    def to_json(self) -> Dict:
        out = {'chords': [c.to_json() for c in self.chords]}
        if self.corner_distance is not None:
            out['l'] = self.corner_distance
        return out

    @classmethod
    def from_json(cls, data: Dict) -> "ChordCurve":
        try:
            chords = [Chord(int(c['rect']), tuple(c['p']), tuple(c['q'])) for c in data['chords']]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"弦曲线 JSON 格式错误: {e}")
        return cls(tuple(chords))


# -----------------------
# 粘合与几何量
# -----------------------
def _origami(R: Rectangulation) -> Origami:
    if R.origami is None:
        raise InputError("弦曲线运算需要由 origami 生成的整边粘合矩形剖分")
    return R.origami


def surface_point(R: Rectangulation, k: int, p: Point):
    """r(p) 的规范形式：角点归到顶点编号，边内点归到左边/底边"""
    s = _origami(R)
    u, w = p
    if _is_corner(p):
        sq = k
        if u == 1:
            sq = s.h[sq]
        if w == 1:
            sq = s.v[sq]
        return ('vertex', s.vertex_of[sq])
    if u == 1:
        return ('left', s.h[k], w)
    if u == 0:
        return ('left', k, w)
    if w == 1:
        return ('bottom', s.v[k], u)
    if w == 0:
        return ('bottom', k, u)
    return ('interior', k, u, w)


def corner_distance(R: Rectangulation) -> float:
    """
    l：同一矩形边界上两个映到不同角点的点之间的最短距离

    整边粘合时只有矩形角点映到角点；若所有角点落在同一顶点，取 min(W, H)。
    """
    s = _origami(R)
    W, H = R.cell
    corners = [(Fraction(a), Fraction(b)) for a in (0, 1) for b in (0, 1)]
    best = math.inf
    for k in range(s.n):
        ids = [surface_point(R, k, c) for c in corners]
        for i in range(4):
            for j in range(i + 1, 4):
                if ids[i] != ids[j]:
                    du = float(corners[i][0] - corners[j][0]) * W
                    dw = float(corners[i][1] - corners[j][1]) * H
                    best = min(best, math.hypot(du, dw))
    return best if math.isfinite(best) else min(W, H)


def chord_length(c: Chord, R: Rectangulation) -> float:
    """||(p,q)|| = (v² + h²)^(1/2)"""
    W, H = R.cell
    return math.hypot(float(c.du) * W, float(c.dw) * H)


def integral_dH(c: ChordCurve, R: Rectangulation) -> float:
    """∫ ρ dH(q)：加权的纵向总变差"""
    _, H = R.cell
    rho = R.weights
    return sum((1.0 if rho is None else float(rho[ch.rect])) * abs(float(ch.dw)) * H for ch in c.chords)


def integral_dV(c: ChordCurve, R: Rectangulation) -> float:
    """∫ dV(q)：横向总变差"""
    W, _ = R.cell
    return sum(abs(float(ch.du)) * W for ch in c.chords)


def crossing_signature(c: ChordCurve, R: Rectangulation) -> Tuple[int, ...]:
    """
    与各列、各行中线的代数相交数（同伦见证）

    前半部分对应 v 的轨道（竖直中线 u = 1/2），后半部分对应 h 的轨道（水平中线 w = 1/2）。
    半开约定：p < 1/2 <= q 记 +1，q < 1/2 <= p 记 -1。
    """
    s = _origami(R)
    vcyc, hcyc = _cycles(s.v), _cycles(s.h)
    vidx = {i: j for j, cyc in enumerate(vcyc) for i in cyc}
    hidx = {i: j for j, cyc in enumerate(hcyc) for i in cyc}
    sig = [0] * (len(vcyc) + len(hcyc))
    for ch in c.chords:
        for axis, offset, table in ((0, 0, vidx), (1, len(vcyc), hidx)):
            a, b = ch.p[axis], ch.q[axis]
            if a < HALF <= b:
                sig[offset + table[ch.rect]] += 1
            elif b < HALF <= a:
                sig[offset + table[ch.rect]] -= 1
    return tuple(sig)


def core_chord_curve(s: Origami, cyl: Cylinder) -> ChordCurve:
    """柱面核心闭叶对应的弦曲线（矩形 k 即正方形 k）"""
    return ChordCurve(tuple(Chord(sq, a, b) for sq, a, b in core_segments(s, cyl)))


# -----------------------
# 条件检查
# -----------------------
@dataclass(frozen=True)
class Violation:
    condition: str
    index: int
    message: str


def _horizontal_neighbor(R: Rectangulation, a: Chord, b: Chord) -> Optional[int]:
    """b 的起点是否经 a 所在矩形的竖直边（含角点）横向相邻；返回 +1/-1 方向"""
    s = _origami(R)
    if a.q[1] != b.p[1]:
        return None
    if a.q[0] == 1 and b.p[0] == 0 and s.h[a.rect] == b.rect:
        return 1
    if a.q[0] == 0 and b.p[0] == 1 and s.h_inv[a.rect] == b.rect:
        return -1
    return None


def _junction_fixable(R: Rectangulation, a: Chord, b: Chord) -> bool:
    if a.rect == b.rect and a.q == b.p:
        return True
    return _horizontal_neighbor(R, a, b) is not None


def violations(c: ChordCurve, R: Rectangulation, l: Optional[float] = None) -> List[Violation]:
    """
    列出全部违反的条件

    经过角点、且两侧没有公共水平叶可以截短的拼接视为横截（叶在顶点处退化）。
    """
    out = []
    m = len(c.chords)
    for n in range(m):
        a, b = c.chords[n], c.chords[(n + 1) % m]
        if surface_point(R, a.rect, a.q) != surface_point(R, b.rect, b.p):
            out.append(Violation('i', n, f"弦 {n} 的终点与弦 {(n + 1) % m} 的起点没有粘合"))
    if out:
        return out
    l = corner_distance(R) if l is None else l
    for n in range(m):
        a, b = c.chords[n], c.chords[(n + 1) % m]
        if m > 1 and not a.horizontal and not b.horizontal and (a.dw > 0) != (b.dw > 0):
            if _junction_fixable(R, a, b):
                out.append(Violation('ii', n, f"弦 {n} 与弦 {(n + 1) % m} 的拼接不横截水平叶状结构"))
    for n, a in enumerate(c.chords):
        if a.on_horizontal_edge() and not (_is_corner(a.p) and _is_corner(a.q)):
            out.append(Violation('iii', n, f"弦 {n} 落在水平边上但端点不全是角点"))
    for n, a in enumerate(c.chords):
        prev, nxt = c.chords[n - 1], c.chords[(n + 1) % m]
        if chord_length(a, R) < l - 1e-12 and not prev.horizontal and not nxt.horizontal:
            out.append(Violation('iv', n, f"弦 {n} 长度小于 l = {l:.6g} 且相邻弦都不水平"))
    return out


def check_conditions(c: ChordCurve, R: Rectangulation, l: Optional[float] = None) -> Optional[Violation]:
    """返回第一个违反的条件，全部满足时返回 None"""
    found = violations(c, R, l)
    return found[0] if found else None


# -----------------------
# 拉直移动
# -----------------------
def _drop_degenerate(chords: List[Chord]) -> List[Chord]:
    kept = [ch for ch in chords if not ch.degenerate]
    return kept if kept else chords[:1]


def _fix_transverse(R: Rectangulation, chords: List[Chord]) -> bool:
    """条件 (ii)：同一矩形内合并，或沿最大圆盘的水平叶截短"""
    m = len(chords)
    if m < 2:
        return False
    for n in range(m):
        a, b = chords[n], chords[(n + 1) % m]
        if a.horizontal or b.horizontal or (a.dw > 0) == (b.dw > 0):
            continue
        if a.rect == b.rect and a.q == b.p:
            merged = Chord(a.rect, a.p, b.q)
            if n + 1 < m:
                chords[n:n + 2] = [merged]
            else:
                chords[n] = merged
                del chords[0]
            chords[:] = _drop_degenerate(chords)
            return True
        if _horizontal_neighbor(R, a, b) is None:
            continue
        peak = a.dw > 0
        y = max(a.p[1], b.q[1]) if peak else min(a.p[1], b.q[1])
        chords[n] = Chord(a.rect, a.p, (a.q[0], y))
        chords[(n + 1) % m] = Chord(b.rect, (b.p[0], y), b.q)
        chords[:] = _drop_degenerate(chords)
        return True
    return False


def _fix_horizontal_edge(R: Rectangulation, chords: List[Chord]) -> bool:
    """
    条件 (iii)：非角点端点沿边推到线段上最近的角点

    整边粘合下水平边内部没有角点，最近的角点只能是另一端，于是这条弦被吸收进相邻弦。
    """
    m = len(chords)
    if m == 1:
        return False
    for n in range(m):
        a = chords[n]
        if not a.on_horizontal_edge() or (_is_corner(a.p) and _is_corner(a.q)):
            continue
        if not _is_corner(a.p):
            prev = chords[n - 1]
            chords[n - 1] = Chord(prev.rect, prev.p, (a.q[0], prev.q[1]))
        else:
            nxt = chords[(n + 1) % m]
            chords[(n + 1) % m] = Chord(nxt.rect, (a.p[0], nxt.p[1]), nxt.q)
        del chords[n]
        chords[:] = _drop_degenerate(chords)
        return True
    return False


def _slide_vertical(R: Rectangulation, chords: List[Chord], n: int, l: float) -> bool:
    """条件 (iv)：沿竖直边滑动端点，不增加 ∫ρ dH"""
    m = len(chords)
    a = chords[n]
    rho = R.weights
    weight = (lambda k: 1.0) if rho is None else (lambda k: float(rho[k]))
    changed = False
    # 终点 q_n 与下一条弦共享
    nxt = chords[(n + 1) % m]
    if a.q[0] in (0, 1) and not _is_corner(a.q) and m > 1 and a.dw != 0:
        up = a.dw > 0
        if weight(a.rect) >= weight(nxt.rect):
            # 本弦更贵：向 p_n 收缩
            y = a.p[1]
        else:
            # 本弦更便宜：远离 p_n 直到角点或下一条弦变水平
            edge_end = Fraction(1) if up else Fraction(0)
            y = min(edge_end, nxt.q[1]) if up else max(edge_end, nxt.q[1])
        if y != a.q[1]:
            chords[n] = Chord(a.rect, a.p, (a.q[0], y))
            chords[(n + 1) % m] = Chord(nxt.rect, (nxt.p[0], y), nxt.q)
            changed = True
    a = chords[n]
    prev = chords[n - 1]
    if (not a.degenerate and a.p[0] in (0, 1) and not _is_corner(a.p) and m > 1 and a.dw != 0
            and chord_length(a, R) < l - 1e-12):
        up = a.dw > 0
        if weight(a.rect) >= weight(prev.rect):
            y = a.q[1]
        else:
            edge_end = Fraction(0) if up else Fraction(1)
            y = max(edge_end, prev.p[1]) if up else min(edge_end, prev.p[1])
        if y != a.p[1]:
            chords[n] = Chord(a.rect, (a.p[0], y), a.q)
            chords[n - 1] = Chord(prev.rect, prev.p, (prev.q[0], y))
            changed = True
    if changed:
        chords[:] = _drop_degenerate(chords)
    return changed


def _fix_short(R: Rectangulation, chords: List[Chord], l: float) -> bool:
    """条件 (iv)：先把水平边内的端点推到角点，再沿竖直边滑动"""
    m = len(chords)
    if m < 2:
        return False
    for n in range(m):
        a = chords[n]
        prev, nxt = chords[n - 1], chords[(n + 1) % m]
        if a.degenerate or chord_length(a, R) >= l - 1e-12 or prev.horizontal or nxt.horizontal:
            continue
        if a.du != 0:
            if a.p[1] in (0, 1) and not _is_corner(a.p) and a.q[0] in (0, 1):
                p_new = (a.q[0], a.p[1])
                chords[n - 1] = Chord(prev.rect, prev.p, (a.q[0], prev.q[1]))
                chords[n] = Chord(a.rect, p_new, a.q)
                chords[:] = _drop_degenerate(chords)
                return True
            if a.q[1] in (0, 1) and not _is_corner(a.q) and a.p[0] in (0, 1):
                q_new = (a.p[0], a.q[1])
                chords[(n + 1) % m] = Chord(nxt.rect, (a.p[0], nxt.p[1]), nxt.q)
                chords[n] = Chord(a.rect, a.p, q_new)
                chords[:] = _drop_degenerate(chords)
                return True
            continue
        if _slide_vertical(R, chords, n, l):
            return True
    return False


@dataclass
class StraightenReport:
    curve: ChordCurve
    moves: int
    corner_distance: float
    dH_before: float
    dH_after: float
    dV_before: float
    dV_after: float
    signature_before: Tuple[int, ...]
    signature_after: Tuple[int, ...]
    residual: List[Violation] = field(default_factory=list)

    @property
    def homotopy_witness(self) -> bool:
        return self.signature_before == self.signature_after

    @property
    def ok(self) -> bool:
        """同伦签名不变且四个条件全部满足"""
        return self.homotopy_witness and not self.residual

    def to_json(self) -> Dict:
        return {
            'curve': self.curve.to_json(),
            'moves': self.moves,
            'l': self.corner_distance,
            'integral_rho_dH': [self.dH_before, self.dH_after],
            'integral_dV': [self.dV_before, self.dV_after],
            'signature': list(self.signature_after),
            'homotopy_witness': self.homotopy_witness,
            'ok': self.ok,
            'residual': [v.__dict__ for v in self.residual],
        }


def straighten_report(c: ChordCurve, R: Rectangulation, eps: float = 0.0,
                      max_moves: Optional[int] = None) -> StraightenReport:
    """
    拉直并给出完整报告

    移动顺序：(ii) 合并/截短 -> (iii) 水平边端点推到角点 -> (iv) 短弦滑动，
    每一步都不增加弦数，也不增加 ∫ρ dH 与 ∫dV。
    """
    first = check_conditions(c, R)
    if first is not None and first.condition == 'i':
        raise InputError(f"输入曲线不满足条件 (i): {first.message}")
    max_moves = CALC_CONFIG['straighten']['max_moves'] if max_moves is None else max_moves
    l = corner_distance(R)
    chords = list(c.chords)
    moves = 0
    while True:
        if _fix_transverse(R, chords) or _fix_horizontal_edge(R, chords) or _fix_short(R, chords, l):
            moves += 1
            if moves > max_moves:
                raise NonConvergenceError(f"拉直在 {max_moves} 次移动内未结束")
            continue
        break
    out = ChordCurve(tuple(chords), l)
    report = StraightenReport(
        curve=out,
        moves=moves,
        corner_distance=l,
        dH_before=integral_dH(c, R),
        dH_after=integral_dH(out, R),
        dV_before=integral_dV(c, R),
        dV_after=integral_dV(out, R),
        signature_before=crossing_signature(c, R),
        signature_after=crossing_signature(out, R),
        residual=violations(out, R, l),
    )
    if report.dH_after > report.dH_before + eps + 1e-12 or report.dV_after > report.dV_before + eps + 1e-12:
        raise NonConvergenceError("拉直后长度泛函增加，移动序列异常")
    if report.residual:
        log(f"⚠️ 拉直后仍有 {len(report.residual)} 处条件无法由移动修复")
    return report


def straighten(c: ChordCurve, R: Rectangulation, eps: float = 0.0) -> ChordCurve:
    """把弦曲线拉直到满足 (i)-(iv)，返回新曲线（记录 l）；仍有违例时抛 NonConvergenceError"""
    report = straighten_report(c, R, eps)
    if not report.ok:
        raise NonConvergenceError(f"拉直后仍有 {len(report.residual)} 处违例，"
                                  f"同伦签名{'不变' if report.homotopy_witness else '改变'}")
    return report.curve


# -----------------------
# 相交数上界
# -----------------------
@dataclass(frozen=True)
class Arc:
    """矩形内的直短弧"""
    rect: int
    a: Point
    b: Point

    def __post_init__(self):
        object.__setattr__(self, 'a', _pt(self.a))
        object.__setattr__(self, 'b', _pt(self.b))


def _orient(a: Point, b: Point, c: Point) -> Fraction:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a: Point, b: Point, c: Point) -> bool:
    return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])


def segments_meet(a0: Point, a1: Point, b0: Point, b1: Point) -> bool:
    """闭线段是否相交（含端点接触与共线重叠），精确有理运算"""
    d1, d2 = _orient(b0, b1, a0), _orient(b0, b1, a1)
    d3, d4 = _orient(a0, a1, b0), _orient(a0, a1, b1)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(b0, b1, a0):
        return True
    if d2 == 0 and _on_segment(b0, b1, a1):
        return True
    if d3 == 0 and _on_segment(a0, a1, b0):
        return True
    if d4 == 0 and _on_segment(a0, a1, b1):
        return True
    return False


def _arc_preimages(R: Rectangulation, arc: Arc) -> List[Tuple[int, Point, Point]]:
    """弧在剖分中的全部原像：落在边上的弧在粘合的另一侧还有一份"""
    s = _origami(R)
    out = [(arc.rect, arc.a, arc.b)]
    (ua, wa), (ub, wb) = arc.a, arc.b
    if ua == ub == 1:
        out.append((s.h[arc.rect], (Fraction(0), wa), (Fraction(0), wb)))
    elif ua == ub == 0:
        out.append((s.h_inv[arc.rect], (Fraction(1), wa), (Fraction(1), wb)))
    if wa == wb == 1:
        out.append((s.v[arc.rect], (ua, Fraction(0)), (ub, Fraction(0))))
    elif wa == wb == 0:
        out.append((s.v_inv[arc.rect], (ua, Fraction(1)), (ub, Fraction(1))))
    return out


def chord_intersection_bound(c: ChordCurve, arcs: Sequence[Arc], R: Rectangulation) -> int:
    """
    Σ_j μ[与 r⁻¹(β_j) 相交的弦]：几何相交数 i(a(μ), β) 的上界

    参数：
        c   : 弦曲线
        arcs: 每段都在单个矩形内的直短弧
        R   : 整边粘合矩形剖分
    """
    preimages = []
    for arc in arcs:
        if not isinstance(arc, Arc):
            raise InputError(f"不是直短弧: {arc}")
        if not 0 <= arc.rect < R.size:
            raise InputError(f"弧所在矩形 {arc.rect} 不存在（不是短弧）")
        preimages.append(_arc_preimages(R, arc))
    total = 0
    for ch in c.chords:
        for pre in preimages:
            if any(k == ch.rect and segments_meet(ch.p, ch.q, a, b) for k, a, b in pre):
                total += 1
    return total
