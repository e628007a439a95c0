"""
区间交换变换（IET）- origami 上的首次返回映射、Rauzy 归纳与方向分类

实数输入量化为有理数后精确运算：浮点按 2^-bits 量化，
"phi"/"golden" 这类符号输入按需要的精度生成。
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from config import CALC_CONFIG, verbose_log
from errors import InputError, NonConvergenceError
from square_tiled import (Cylinder, Gluing, Origami, Rectangulation, cylinder_decomposition,
                          _cycles, _power)

Real = Union[int, float, Fraction, str]


# -----------------------
# 实数量化
# -----------------------
def golden_ratio(bits: int = 140) -> Fraction:
    """黄金比 φ 的 2^-bits 精度有理逼近"""
    scale = 1 << bits
    return Fraction(scale + math.isqrt(5 * scale * scale), 2 * scale)


def quantize(x: Real, bits: Optional[int] = None) -> Fraction:
    """
    把实数输入转成有理数

    int/Fraction 原样保留；float 按 2^-bits 取整；
    字符串支持 "p/q"、小数、"phi"/"golden"、"sqrt(k)"。
    """
    bits = CALC_CONFIG['iet']['bits'] if bits is None else bits
    if isinstance(x, bool):
        raise InputError(f"不是实数: {x}")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise InputError(f"不是有限实数: {x}")
        scale = 1 << bits
        return Fraction(round(x * scale), scale)
    if isinstance(x, str):
        token = x.strip().lower()
        if token in ('phi', 'golden'):
            return golden_ratio(bits)
        if token.startswith('sqrt(') and token.endswith(')'):
            k = int(token[5:-1])
            if k < 0:
                raise InputError(f"负数不能开方: {x}")
            scale = 1 << bits
            return Fraction(math.isqrt(k * scale * scale), scale)
        try:
            return Fraction(token)
        except (ValueError, ZeroDivisionError):
            raise InputError(f"无法解析实数: {x}")
    raise InputError(f"不支持的实数类型: {type(x).__name__}")


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


# -----------------------
# IET
# -----------------------
@dataclass(frozen=True)
class IET:
    """
    区间交换：标签 l 的长度 lengths[l]，top 为定义域中标签从左到右的顺序，
    bottom 为像的顺序；heights 记录 Rauzy 归纳中塔的高度。
    """
    lengths: Tuple[Fraction, ...]
    top: Tuple[int, ...]
    bottom: Tuple[int, ...]
    heights: Tuple[Fraction, ...] = ()
    oriented: bool = True  # False 表示这是非定向 IET 的定向双覆盖

    def __post_init__(self):
        object.__setattr__(self, 'lengths', tuple(Fraction(x) for x in self.lengths))
        object.__setattr__(self, 'top', tuple(self.top))
        object.__setattr__(self, 'bottom', tuple(self.bottom))
        m = len(self.lengths)
        if not self.heights:
            object.__setattr__(self, 'heights', tuple(Fraction(1) for _ in range(m)))
        else:
            object.__setattr__(self, 'heights', tuple(Fraction(x) for x in self.heights))
        if m == 0:
            raise InputError("IET 至少需要一个区间")
        if sorted(self.top) != list(range(m)) or sorted(self.bottom) != list(range(m)):
            raise InputError("top/bottom 必须是标签的排列")
        if len(self.heights) != m:
            raise InputError("塔高个数与区间个数不一致")
        if any(x <= 0 for x in self.lengths):
            raise InputError("IET 的区间长度必须为正")

    @property
    def size(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> Fraction:
        return sum(self.lengths, Fraction(0))

    def area(self) -> Fraction:
        """Σ λ_l·h_l，Rauzy 归纳下守恒"""
        return sum((a * h for a, h in zip(self.lengths, self.heights)), Fraction(0))

    def top_starts(self) -> Dict[int, Fraction]:
        out, pos = {}, Fraction(0)
        for l in self.top:
            out[l] = pos
            pos += self.lengths[l]
        return out

    def bottom_starts(self) -> Dict[int, Fraction]:
        out, pos = {}, Fraction(0)
        for l in self.bottom:
            out[l] = pos
            pos += self.lengths[l]
        return out

    def __call__(self, x) -> Fraction:
        """T(x)"""
        x = Fraction(x)
        if not 0 <= x < self.total:
            raise InputError(f"点 {x} 不在区间 [0, {self.total}) 内")
        tops, bots = self.top_starts(), self.bottom_starts()
        for l in self.top:
            if tops[l] <= x < tops[l] + self.lengths[l]:
                return x - tops[l] + bots[l]
        raise InputError(f"点 {x} 定位失败")

    def is_irreducible(self) -> bool:
        """不存在真前缀 k 使 top、bottom 的前 k 个标签集合相同"""
        for k in range(1, self.size):
            if set(self.top[:k]) == set(self.bottom[:k]):
                return False
        return True

    def to_json(self) -> Dict:
        return {
            'lengths': [f"{x.numerator}/{x.denominator}" for x in self.lengths],
            'top': list(self.top),
            'perm': list(self.bottom),
            'heights': [f"{x.numerator}/{x.denominator}" for x in self.heights],
            'oriented': self.oriented,
        }

    @classmethod
    def from_json(cls, data: Dict) -> "IET":
        try:
            lengths = [quantize(x) for x in data['lengths']]
            bottom = list(data['perm'])
            top = list(data.get('top', range(len(lengths))))
            heights = [quantize(x) for x in data.get('heights', [])]
        except (KeyError, TypeError) as e:
            raise InputError(f"IET JSON 格式错误: {e}")
        return cls(tuple(lengths), tuple(top), tuple(bottom), tuple(heights), bool(data.get('oriented', True)))


def double_cover(lengths: Sequence[Real], top: Sequence[int], bottom: Sequence[int],
                 flipped: Sequence[bool]) -> IET:
    """
    非定向 IET 的定向双覆盖

    第二个副本取反向坐标 2|I| - x，翻转的标签在两个副本之间交换，
    于是每一片都成为平移。标签 (l, s) 编号为 2l + s。
    """
    lam = [quantize(x) for x in lengths]
    m = len(lam)
    if len(flipped) != m:
        raise InputError("flipped 个数与区间个数不一致")
    base = IET(tuple(lam), tuple(top), tuple(bottom))
    total = base.total
    tops, bots = base.top_starts(), base.bottom_starts()
    dom, img = {}, {}
    for l in range(m):
        a, c, ln = tops[l], bots[l], lam[l]
        dom[2 * l] = a
        dom[2 * l + 1] = 2 * total - a - ln
        if flipped[l]:
            img[2 * l] = 2 * total - c - ln
            img[2 * l + 1] = c
        else:
            img[2 * l] = c
            img[2 * l + 1] = 2 * total - c - ln
    labels = list(range(2 * m))
    cover_len = tuple(lam[l // 2] for l in labels)
    return IET(cover_len,
               tuple(sorted(labels, key=lambda l: dom[l])),
               tuple(sorted(labels, key=lambda l: img[l])),
               oriented=False)


@dataclass(frozen=True)
class SaddleConnection:
    """右端 top/bottom 长度相等：存在连接两个断点的叶（不是错误）"""
    top_label: int
    bottom_label: int
    length: Fraction
    step: int = 0

    def to_json(self) -> Dict:
        return {'top': self.top_label, 'bottom': self.bottom_label,
                'length': float(self.length), 'step': self.step}


def rauzy_step(T: IET, step: int = 0) -> Union[IET, SaddleConnection]:
    """
    右侧 Rauzy–Veech 归纳一步

    a = top 最右标签，b = bottom 最右标签：
    top 胜（λ_a > λ_b）：λ_a -= λ_b，h_b += h_a，b 在 bottom 中移到 a 之后；
    bottom 胜：λ_b -= λ_a，h_a += h_b，a 在 top 中移到 b 之后。
    """
    if T.size < 2:
        raise InputError("Rauzy 归纳至少需要两个区间")
    a, b = T.top[-1], T.bottom[-1]
    la, lb = T.lengths[a], T.lengths[b]
    if la == lb:
        return SaddleConnection(a, b, la, step)
    lengths = list(T.lengths)
    heights = list(T.heights)
    top, bottom = list(T.top), list(T.bottom)
    if la > lb:
        lengths[a] = la - lb
        heights[b] = heights[b] + heights[a]
        bottom.pop()
        bottom.insert(bottom.index(a) + 1, b)
    else:
        lengths[b] = lb - la
        heights[a] = heights[a] + heights[b]
        top.pop()
        top.insert(top.index(b) + 1, a)
    return IET(tuple(lengths), tuple(top), tuple(bottom), tuple(heights), T.oriented)


@dataclass
class RauzyRun:
    """多步归纳的结果"""
    iet: IET
    steps: int
    winners: List[str] = field(default_factory=list)
    connection: Optional[SaddleConnection] = None


def rauzy_induction(T: IET, max_steps: int) -> RauzyRun:
    """最多 max_steps 步，遇到鞍点连接即停"""
    if max_steps < 1:
        raise InputError(f"max_steps 必须 >= 1: {max_steps}")
    run = RauzyRun(T, 0)
    for k in range(max_steps):
        a, b = run.iet.top[-1], run.iet.bottom[-1]
        res = rauzy_step(run.iet, k + 1)
        if isinstance(res, SaddleConnection):
            run.connection = res
            break
        run.winners.append('t' if run.iet.lengths[a] > run.iet.lengths[b] else 'b')
        run.iet = res
        run.steps = k + 1
    return run


def golden_rotation(bits: int = 140) -> IET:
    """长度 (φ-1, 2-φ) 的旋转，每一步胜者交替、长度比保持 φ"""
    phi = golden_ratio(bits)
    return IET((phi - 1, 2 - phi), (0, 1), (1, 0))


def induced_on_arc(T: IET, start: Real, end: Real, max_iter: int = 100000) -> Tuple[IET, List[Tuple[Fraction, Fraction]]]:
    """
    T 在子区间 J = [start, end) 上的首次返回

    按 T 的断点切分后逐段推进，直到每一段的像落回 J。

    返回：
        (诱导 IET（坐标以 start 为原点），每一片的 (定义域起点, 长度))
    """
    a, b = quantize(start), quantize(end)
    if not 0 <= a < b <= T.total:
        raise InputError(f"子区间 [{a}, {b}) 不在 [0, {T.total}) 内")
    tops, bots = T.top_starts(), T.bottom_starts()
    breaks = sorted({tops[l] for l in T.top} | {T.total})

    def label_at(x):
        for l in T.top:
            if tops[l] <= x < tops[l] + T.lengths[l]:
                return l
        raise InputError(f"点 {x} 定位失败")

    # (定义域起点, 长度, 当前像起点, 累计高度)
    active = [(a, b - a, a, Fraction(0))]
    done = []
    budget = max_iter
    while active:
        budget -= 1
        if budget < 0:
            raise NonConvergenceError(f"子区间诱导在 {max_iter} 步内未完成")
        s, ln, y, hsum = active.pop()
        # 按 T 的断点切分当前像
        cuts = [c for c in breaks if y < c < y + ln]
        if cuts:
            edges = [y] + cuts + [y + ln]
            for lo, hi in zip(edges, edges[1:]):
                active.append((s + (lo - y), hi - lo, lo, hsum))
            continue
        l = label_at(y)
        ny = y - tops[l] + bots[l]
        nh = hsum + T.heights[l]
        # 像与 J 的边界比较再切分
        inner = [c for c in (a, b) if ny < c < ny + ln]
        if inner:
            edges = [ny] + inner + [ny + ln]
            for lo, hi in zip(edges, edges[1:]):
                # 切分后以原像位置重新推进，高度暂不累计
                active.append((s + (lo - ny), hi - lo, y + (lo - ny), hsum))
            continue
        if a <= ny and ny + ln <= b:
            done.append((s, ln, ny, nh))
        else:
            active.append((s, ln, ny, nh))
    done.sort()
    labels = list(range(len(done)))
    lengths = tuple(d[1] for d in done)
    heights = tuple(d[3] for d in done)
    top = tuple(labels)
    bottom = tuple(sorted(labels, key=lambda l: done[l][2]))
    pieces = [(d[0], d[1]) for d in done]
    return IET(lengths, top, bottom, heights, T.oriented), pieces


# -----------------------
# origami 上的首次返回
# -----------------------
@dataclass(frozen=True)
class ReturnRectangle:
    """首次返回塔：底边 [start, start+base)，像从 image_start 开始"""
    label: int
    square: int
    start: Fraction
    base: Fraction
    image_start: Fraction
    rise: Fraction  # 返回时间（以正方形高度计）
    width: float  # 相对竖直叶状结构的横截测度 base/√(1+α²)
    leaf_length: float  # 叶段长度 rise·√(1+α²)

    @property
    def area(self) -> Fraction:
        return self.base * self.rise


@dataclass(frozen=True)
class ReturnDecomposition:
    rectangles: Tuple[ReturnRectangle, ...]
    transversal: Tuple[Fraction, Fraction]
    alpha: Fraction  # 每升高 1 的水平位移
    reflected: bool
    square_order: Tuple[int, ...]  # 横截线上正方形的拼接顺序（按 h 轨道）

    def area(self) -> Fraction:
        return sum((r.area for r in self.rectangles), Fraction(0))


def _direction_slope(direction, bits: Optional[int]) -> Tuple[Fraction, bool]:
    try:
        dx, dy = direction
    except (TypeError, ValueError):
        raise InputError(f"方向必须是二维向量: {direction}")
    dx, dy = quantize(dx, bits), quantize(dy, bits)
    if dx == 0 and dy == 0:
        raise InputError("方向不能为零向量")
    if dy == 0:
        return Fraction(0), True
    if dy < 0:
        dx, dy = -dx, -dy
    return dx / dy, False


def _row_order(s: Origami) -> Tuple[Tuple[int, ...], Dict[int, int]]:
    """按 h 轨道拼接正方形，使同一行相邻的底边在横截线上连续"""
    order = tuple(i for cyc in _cycles(s.h) for i in cyc)
    pos = {i: k for k, i in enumerate(order)}
    return order, pos


def first_return(s: Origami, direction, transversal: Optional[Tuple[int, Real, Real]] = None,
                 bits: Optional[int] = None) -> Tuple[IET, ReturnDecomposition]:
    """
    叶沿 direction 方向在横截线上的首次返回

    参数：
        s          : origami
        direction  : (dx, dy) 实向量；水平方向按对角线反射处理
        transversal: None 表示全部正方形底边之并；(square, x0, length) 表示
                     从该正方形底边 x0 处沿行向右长 length 的子弧
        bits       : 浮点量化位数

    返回：
        (IET, ReturnDecomposition)
    """
    alpha, reflected = _direction_slope(direction, bits)
    if reflected:
        s = s.reflect()
    order, pos = _row_order(s)
    a0 = math.floor(alpha)
    f = alpha - a0
    scale = math.sqrt(1.0 + float(alpha) ** 2)

    starts, lens, images, squares = [], [], [], []
    for i in order:
        base = Fraction(pos[i])
        j0 = s.v[_power(s.h, s.h_inv, i, a0)]
        starts.append(base)
        lens.append(1 - f)
        images.append(pos[j0] + f)
        squares.append(i)
        if f > 0:
            j1 = s.v[_power(s.h, s.h_inv, i, a0 + 1)]
            starts.append(base + 1 - f)
            lens.append(f)
            images.append(Fraction(pos[j1]))
            squares.append(i)
    labels = list(range(len(lens)))
    T = IET(tuple(lens), tuple(labels), tuple(sorted(labels, key=lambda l: images[l])))

    if transversal is None:
        rects = tuple(ReturnRectangle(l, squares[l], starts[l], lens[l], images[l], Fraction(1),
                                      float(lens[l]) / scale, scale)
                      for l in labels)
        return T, ReturnDecomposition(rects, (Fraction(0), Fraction(s.n)), alpha, reflected, order)

    sq, x0, length = transversal
    x0, length = quantize(x0, bits), quantize(length, bits)
    if not 0 <= x0 < 1 or length <= 0:
        raise InputError(f"子弧参数不合法: {transversal}")
    lo = pos[sq] + x0
    hi = lo + length
    cyc_of = {}
    for cyc in _cycles(s.h):
        for i in cyc:
            cyc_of[i] = (pos[cyc[0]], pos[cyc[0]] + len(cyc))
    c_lo, c_hi = cyc_of[sq]
    if hi > c_hi:
        raise InputError("子弧超出所在的水平行")
    k = math.floor(lo) + 1
    while k < hi:
        if s.singular[order[k]]:
            raise InputError(f"子弧内部经过奇点（正方形 {order[k] + 1} 的左下角）")
        k += 1
    induced, pieces = induced_on_arc(T, lo, hi)
    bots = induced.bottom_starts()
    rects = []
    for l, (start, ln) in enumerate(pieces):
        rects.append(ReturnRectangle(l, order[math.floor(start)], start, ln, lo + bots[l],
                                     induced.heights[l], float(ln) / scale,
                                     float(induced.heights[l]) * scale))
    return induced, ReturnDecomposition(tuple(rects), (lo, hi), alpha, reflected, order)


def locate(dec: ReturnDecomposition, s: Origami, square: int, x: Real, y: Real) -> int:
    """
    曲面上一点所在的返回塔（沿叶向下回到底边）

    仅适用于以全部底边为横截线的分解。
    """
    if dec.reflected:
        s = s.reflect()
        x, y = y, x
    x, y = Fraction(x), Fraction(y)
    back = x - dec.alpha * y
    shift = math.floor(back)
    i = _power(s.h, s.h_inv, square, shift)
    _, pos = _row_order(s)
    p = pos[i] + (back - shift)
    for r in dec.rectangles:
        if r.start <= p < r.start + r.base:
            return r.label
    raise InputError(f"点 ({x}, {y}) 不在任何返回塔中")


def return_metric(s: Origami, direction, theta: Sequence[float],
                  shares: Optional[Sequence[Sequence[Real]]] = None):
    """
    极小方向的加权矩形剖分

    在剪切坐标（横向 = 底边位置，纵向 = 升高）中每个返回塔是宽 base、高 1 的矩形，
    面积与竖直横截测度都精确。多遍历类需要 shares[l][j]：塔 l 的底边上分量 j 的测度。
    """
    T, dec = first_return(s, direction)
    J = len(theta)
    if shares is None:
        if J != 1:
            raise InputError("多遍历类的极小方向需要声明每个子区间上的遍历测度（shares）")
        shares = [[r.base] for r in dec.rectangles]
    if len(shares) != len(dec.rectangles):
        raise InputError(f"shares 行数 {len(shares)} 与返回塔数 {len(dec.rectangles)} 不一致")

    # 每个塔按份额切成竖带：(定义域起点, 宽, 像起点, 分量)
    pieces = []
    for r, row in zip(dec.rectangles, shares):
        row = [quantize(x) for x in row]
        if len(row) != J or any(x < 0 for x in row):
            raise InputError("shares 每行必须是 J 个非负数")
        if sum(row) != r.base:
            raise InputError(f"塔 {r.label} 的份额之和 {sum(row)} 不等于底边长 {r.base}")
        off = Fraction(0)
        for j, w in enumerate(row):
            if w == 0:
                continue
            pieces.append((r.start + off, w, r.image_start + off, j))
            off += w

    sizes = [(w, Fraction(1)) for _, w, _, _ in pieces]
    weights = [float(theta[j]) for _, _, _, j in pieces]
    gluings = []
    order = sorted(range(len(pieces)), key=lambda k: pieces[k][0])
    surface = s.reflect() if dec.reflected else s
    first_in_square = {}
    for k in order:
        sq = dec.square_order[math.floor(pieces[k][0])]
        first_in_square.setdefault(sq, k)
    for idx, k in enumerate(order):
        start, w, img, _ = pieces[k]
        end = start + w
        if end.denominator == 1:
            sq = dec.square_order[int(end) - 1]
            nxt = first_in_square[surface.h[sq]]
        else:
            nxt = order[idx + 1]
        gluings.append(Gluing(k, 'right', 0, nxt, 'left', 0, 1))
        for other in range(len(pieces)):
            o_start, o_w = pieces[other][0], pieces[other][1]
            lo = max(img, o_start)
            hi = min(img + w, o_start + o_w)
            if lo < hi:
                gluings.append(Gluing(k, 'top', lo - img, other, 'bottom', lo - o_start, hi - lo))
    R = Rectangulation(tuple(sizes), tuple(gluings), tuple(weights))
    areas = tuple(sum((pieces[k][1] for k in range(len(pieces)) if pieces[k][3] == j), Fraction(0))
                  for j in range(J))
    names = tuple(f"minimal#{j}" for j in range(J))
    verbose_log(f"极小方向剖分: {len(pieces)} 个矩形, 总面积 {float(sum(areas))}")
    return R, names, areas, 0.0


# -----------------------
# 方向分类
# -----------------------
@dataclass
class DirectionClass:
    kind: str  # periodic | minimal-certified | inconclusive
    cylinders: List[Cylinder] = field(default_factory=list)
    steps: int = 0
    connection: Optional[SaddleConnection] = None

    def to_json(self) -> Dict:
        out = {'kind': self.kind, 'steps': self.steps}
        if self.cylinders:
            out['cylinders'] = [{'core': c.core, 'circumference': c.circumference,
                                 'height': c.height, 'area': float(c.area)} for c in self.cylinders]
        if self.connection is not None:
            out['connection'] = self.connection.to_json()
        return out


def _rational_direction(direction) -> Optional[Tuple[int, int]]:
    """精确有理方向化成本原整数向量，否则返回 None"""
    try:
        dx, dy = direction
    except (TypeError, ValueError):
        raise InputError(f"方向必须是二维向量: {direction}")
    if not (_is_exact(dx) and _is_exact(dy)):
        return None
    dx, dy = Fraction(dx), Fraction(dy)
    if dx == 0 and dy == 0:
        raise InputError("方向不能为零向量")
    den = dx.denominator * dy.denominator // math.gcd(dx.denominator, dy.denominator)
    p, q = int(dx * den), int(dy * den)
    g = math.gcd(p, q)
    return p // g, q // g


def classify_direction(s: Origami, direction, max_steps: Optional[int] = None,
                       bits: Optional[int] = None) -> DirectionClass:
    """
    方向分类

    精确有理方向 -> periodic（附柱面分解）；
    其余实方向量化后做 Rauzy 归纳：max_steps 步内无连接 -> minimal-certified，
    否则 inconclusive（附鞍点连接证书）。
    """
    max_steps = CALC_CONFIG['iet']['max_steps'] if max_steps is None else max_steps
    if max_steps < 1:
        raise InputError(f"max_steps 必须 >= 1: {max_steps}")
    rational = _rational_direction(direction)
    if rational is not None:
        return DirectionClass('periodic', cylinder_decomposition(s, rational))
    if bits is None:
        # 符号输入按步数给足精度
        bits = max(CALC_CONFIG['iet']['bits'], 4 * max_steps)
        if any(isinstance(x, float) for x in direction):
            bits = CALC_CONFIG['iet']['bits']
    T, _ = first_return(s, direction, bits=bits)
    run = rauzy_induction(T, max_steps)
    if run.connection is not None:
        verbose_log(f"⚠️ 第 {run.connection.step} 步出现鞍点连接，结论不确定")
        return DirectionClass('inconclusive', steps=run.steps, connection=run.connection)
    return DirectionClass('minimal-certified', steps=run.steps)
