#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
teichcalc - 统一命令行入口

子命令：
    verify-thm1     极值长度渐近式 e^(-2t)·Ext 与 E_q² 的逐 t 对比
    extlen          弦曲线沿测地流的离散极值长度表
    distance        环面 Teichmüller 距离（精确值与探针下界）
    eq-eval         E_q、E_q² 与翻转对偶
    detour          绕行度量与两个方向的绕行代价
    modular-solve   模等价代表的不动点求解
    part-check      两个边界点是否在同一个 part
    busemann-check  Busemann 收敛判据
    iet             Rauzy–Veech 归纳与方向分类
    straighten      弦曲线拉直

结果写到 stdout（或 --output），日志写到 stderr；
退出码 0 成功，1 校验未通过或结果文件写入失败，2 输入错误，3 数值不收敛。
"""

import argparse
import copy
import json
import math
import os
import sys
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import data_manager
from boundary import (SyntheticOracle, TorusOracle, busemann_limit_check, detour_cost, detour_metric, dual_eval,
                      eq_eval, eq_squared, flip_sup, half_log, merge_proportional, modular_equivalent,
                      modular_multistart, modular_solve, origami_record, same_boundary_point, same_part,
                      sup_ratio, torus_record)
from config import CALC_CONFIG, VERSION, log, verbose_log
from errors import InputError, NonConvergenceError, OutputError, TeichCalcError
from extreal import ExtReal
from extremal_opt import batch_evaluate, discrete_ext_length, distance_estimate, extlen_table
from flat_torus import TorusPoint, torus_distance, torus_probes, unit_torus_qd
from foliation import ComponentSum, TorusLine, project_to
from iet import IET, classify_direction, golden_rotation, rauzy_induction
from square_tiled import Origami, Rectangulation, cylinder_decomposition, geodesic_flow
from straighten import core_chord_curve, straighten_report

DEFAULT_TS = "0,1,2,3,4,5"


# -----------------------
# 参数解析小工具
# -----------------------
def _direction(text: str):
    """ "1,2" / "1/2,1" -> 整数或有理数方向 """
    parts = [x for x in text.replace(' ', '').split(',') if x]
    if len(parts) != 2:
        raise InputError(f"方向必须是两个分量: {text}")
    try:
        return tuple(Fraction(x) if '/' in x else int(x) for x in parts)
    except ValueError:
        raise InputError(f"方向分量必须是整数或 p/q: {text}")


def _real_direction(text: str):
    """整数与 p/q 分量保持精确（有理方向），其余（phi、sqrt(k)、小数）交给 iet 量化"""
    out = []
    for x in text.replace(' ', '').split(','):
        if x == '':
            continue
        try:
            out.append(Fraction(x) if '/' in x else int(x))
        except ValueError:
            out.append(x)
    if len(out) != 2:
        raise InputError(f"方向必须是两个分量: {text}")
    return tuple(out)


def _torus_line(text: str) -> TorusLine:
    """ "p,q" 或 "p,q,w" """
    values = data_manager.parse_vector(text)
    if len(values) not in (2, 3):
        raise InputError(f"环面直线格式应为 p,q[,w]: {text}")
    p, q = values[0], values[1]
    if float(p).is_integer() and float(q).is_integer():
        p, q = int(p), int(q)
    weight = values[2] if len(values) == 3 else 1
    return TorusLine((p, q), weight)


def _torus_point(text: str) -> TorusPoint:
    values = data_manager.parse_vector(text)
    if len(values) != 2:
        raise InputError(f"环面点格式应为 re,im: {text}")
    return TorusPoint(complex(values[0], values[1]))


def _ts(text: str) -> List[float]:
    ts = data_manager.parse_vector(text)
    if not ts:
        raise InputError("t 网格为空")
    return ts


def _oracle(spec: str, target):
    """
    oracle 规格：
        synthetic:1,1;1,2   正矩阵 A（行用 ; 分隔）
        torus:re,im         环面 x 处的 Hubbard–Masur 映射
    """
    kind, _, rest = spec.partition(':')
    if kind == 'synthetic':
        rows = [data_manager.parse_vector(r) for r in rest.split(';') if r.strip()]
        if not rows:
            raise InputError(f"合成 oracle 缺少矩阵: {spec}")
        return None, SyntheticOracle(np.array(rows))
    if kind == 'torus':
        return _torus_point(rest), TorusOracle(target.basis)
    raise InputError(f"未知 oracle 类型: {kind}")


def _ext(x: ExtReal):
    return x.to_json()


# -----------------------
# 子命令
# -----------------------
def cmd_verify_gap(args, manifest) -> Dict:
    """逐 t 输出 lhs = e^(-2t)·Ext、rhs = E_q²、gap = lhs - rhs"""
    manifest.add_input(args.surface)
    surface = data_manager.load_surface(args.surface)
    ts = _ts(args.ts)
    if isinstance(surface, Rectangulation) and surface.size == 1:
        surface = TorusPoint(surface.torus_modulus())

    if isinstance(surface, TorusPoint):
        F = _torus_line(args.foliation or "1,1")
        q = unit_torus_qd(surface, _direction(args.direction))
        df = batch_evaluate(q, ts, [F], workers=args.workers)
        rhs = eq_squared(torus_record(q), F)
        table = pd.DataFrame({'t': df['t'], 'lhs': df['ext_scaled'], 'rhs': rhs, 'gap': df['ext_scaled'] - rhs})
        tol = args.tol if args.tol is not None else CALC_CONFIG['tolerances']['verify_gap']
        bound = tol
    else:
        s = surface.origami if isinstance(surface, Rectangulation) else surface
        if s is None:
            raise InputError("verify-thm1 需要环面或 origami")
        test = _direction(args.foliation or "1,0")
        cyls = cylinder_decomposition(s, test)
        if not 0 <= args.cylinder < len(cyls):
            raise InputError(f"--cylinder {args.cylinder} 超出范围：方向 {test} 上只有 {len(cyls)} 个柱面")
        cyl = cyls[args.cylinder]
        record = origami_record(s, (test,))
        rhs = eq_squared(record, ComponentSum.unit(record.basis, cyl.core))
        curve = core_chord_curve(s, cyl)
        R = Rectangulation.from_origami(s)
        rows = []
        for t in ts:
            est = discrete_ext_length(geodesic_flow(R, t), curve, args.grid, args.max_iter,
                                      progress=log if CALC_CONFIG['verbose'] else None)
            if not est.converged:
                raise NonConvergenceError(f"t = {t} 处离散极值长度在 {est.iterations} 次迭代内未收敛"
                                          f"（下界 {est.lower:.6g}，上界 {float(est.upper):.6g}）", est.history)
            scale = math.exp(-2.0 * t)
            lhs = est.lower * scale
            rows.append({'t': t, 'lhs': lhs, 'lhs_upper': float(est.upper) * scale, 'rhs': rhs, 'gap': lhs - rhs,
                         'converged': est.converged})
        table = pd.DataFrame(rows, columns=['t', 'lhs', 'lhs_upper', 'rhs', 'gap', 'converged'])
        tol = args.tol if args.tol is not None else CALC_CONFIG['tolerances']['discrete_ext']
        bound = tol * max(1.0, rhs)
    gap = float(table.loc[table['t'].idxmax(), 'gap'])
    ok = abs(gap) < bound
    if ok:
        log(f"✅ 最大 t 处 gap = {gap:.3e} < {bound:.3e}")
    else:
        log(f"⚠️ 最大 t 处 gap = {gap:.3e} 未低于 {bound:.3e}")
    return {'table': table, 'exit': 0 if ok else 1}


def cmd_extlen(args, manifest) -> Dict:
    manifest.add_input(args.surface)
    R = data_manager.as_rectangulation(data_manager.load_surface(args.surface))
    if args.curve:
        manifest.add_input(args.curve)
        curve = data_manager.load_curve(args.curve)
    else:
        if R.origami is None:
            raise InputError("extlen 需要 --curve 或由 origami 生成的曲面")
        cyls = cylinder_decomposition(R.origami, _direction(args.direction))
        curve = core_chord_curve(R.origami, cyls[0])
    table = extlen_table(R, curve, _ts(args.ts), args.grid, args.max_iter)
    return {'table': table}


def cmd_distance(args, manifest) -> Dict:
    x, y = _torus_point(args.x), _torus_point(args.y)
    probes = torus_probes(CALC_CONFIG['probe_cap'])
    return {'distance': torus_distance(x, y), 'estimate': distance_estimate(x, y, probes), 'probes': len(probes)}


def cmd_eq_eval(args, manifest) -> Dict:
    """
    F 三选一：--foliation 环面直线，--pairings 交点数向量，
    --foliations 文件（foliation.v1）配合 --id 取其中一个
    """
    manifest.add_input(args.record)
    q = data_manager.load_record(args.record)
    given = [x for x in (args.foliation, args.pairings, args.foliations) if x is not None]
    if len(given) != 1:
        raise InputError("eq-eval 需要 --foliation、--pairings、--foliations 之一")
    if args.foliation:
        F = _torus_line(args.foliation)
    elif args.pairings:
        F = data_manager.parse_vector(args.pairings)
    else:
        manifest.add_input(args.foliations)
        F = project_to(data_manager.load_foliation(args.foliations, args.id), q.basis)
    if isinstance(F, TorusLine):
        # 交点数向量按原基排列，只有几何标签求值时才合并
        q = merge_proportional(q)
    out = {'eq': eq_eval(q, F), 'eq_squared': eq_squared(q, F), 'flip_sup': flip_sup(q, F)}
    if isinstance(F, (TorusLine, ComponentSum)):
        out['dual'] = _ext(dual_eval(q, F))
    return out


def cmd_detour(args, manifest) -> Dict:
    """
    metric 与基点无关；给了 --basepoint 时代价按环面探针计算，
    否则代价只取与基点无关的中间项 (1/2)·log sup_ratio
    """
    manifest.add_input(args.q1)
    manifest.add_input(args.q2)
    q1, q2 = data_manager.load_record(args.q1), data_manager.load_record(args.q2)
    if args.basepoint:
        b = _torus_point(args.basepoint)
        probes = torus_probes(CALC_CONFIG['probe_cap'])
        cost_12, cost_21 = detour_cost(q2, q1, probes, b), detour_cost(q1, q2, probes, b)
    else:
        cost_12, cost_21 = half_log(sup_ratio(q1, q2)[0]), half_log(sup_ratio(q2, q1)[0])
    return {'metric': _ext(detour_metric(q1, q2)), 'cost_12': _ext(cost_12), 'cost_21': _ext(cost_21),
            'part': same_part(q1, q2)}


def cmd_modular_solve(args, manifest) -> Dict:
    manifest.add_input(args.target)
    target = data_manager.load_record(args.target)
    x, oracle = _oracle(args.oracle, target)
    progress = log if CALC_CONFIG['verbose'] else None
    tol = args.tol if args.tol is not None else CALC_CONFIG['modular_solver']['tol']
    if args.starts > 1:
        res = modular_multistart(target, x, oracle, starts=args.starts, seed=CALC_CONFIG['seed'],
                                 max_iter=args.max_iter, tol=tol)
        out = res.best.to_json()
        out['spread'] = res.spread
        return out
    start = data_manager.parse_vector(args.start) if args.start else None
    return modular_solve(target, x, oracle, start=start, max_iter=args.max_iter, tol=tol, progress=progress).to_json()


def cmd_part_check(args, manifest) -> Dict:
    manifest.add_input(args.q1)
    manifest.add_input(args.q2)
    q1, q2 = data_manager.load_record(args.q1), data_manager.load_record(args.q2)
    mod = modular_equivalent(q1, q2)
    return {
        'part': same_part(q1, q2),
        'metric': _ext(detour_metric(q1, q2)),
        'modular_equivalent': mod.equivalent,
        'constant': None if mod.constant is None else float(mod.constant),
        'reason': mod.reason,
        'same_boundary_point': same_boundary_point(q1, q2),
    }


def cmd_busemann_check(args, manifest) -> Dict:
    manifest.add_input(args.input)
    seq, tracks, limit = data_manager.load_busemann_input(args.input)
    return busemann_limit_check(seq, tracks, limit, args.tol, args.window, args.tail_ratio).to_json()


def cmd_iet(args, manifest) -> Dict:
    """--iet 文件或 --golden 做 Rauzy 归纳；--surface + --direction 做方向分类"""
    bits = args.bits if args.bits is not None else CALC_CONFIG['iet']['bits']
    steps = args.steps if args.steps is not None else CALC_CONFIG['iet']['max_steps']
    if args.surface:
        manifest.add_input(args.surface)
        s = data_manager.load_surface(args.surface)
        if isinstance(s, Rectangulation):
            s = s.origami
        if not isinstance(s, Origami):
            raise InputError("方向分类需要 origami")
        if not args.direction:
            raise InputError("方向分类需要 --direction")
        return classify_direction(s, _real_direction(args.direction), steps, args.bits).to_json()
    if args.golden:
        T = golden_rotation(max(bits, 4 * steps))
    elif args.iet:
        manifest.add_input(args.iet)
        T = IET.from_json(data_manager.load_json_input(args.iet))
    else:
        raise InputError("iet 需要 --iet、--golden 或 --surface 之一")
    run = rauzy_induction(T, steps)
    out = {'steps': run.steps, 'winners': ''.join(run.winners), 'iet': run.iet.to_json(),
           'area': float(run.iet.area())}
    if run.connection is not None:
        out['connection'] = run.connection.to_json()
    return out


def cmd_straighten(args, manifest) -> Dict:
    manifest.add_input(args.surface)
    manifest.add_input(args.curve)
    R = data_manager.as_rectangulation(data_manager.load_surface(args.surface))
    curve = data_manager.load_curve(args.curve)
    report = straighten_report(curve, R, args.eps)
    out = report.to_json()
    out['exit'] = 0 if report.ok else 1
    return out


COMMANDS = {
    'verify-thm1': cmd_verify_gap,
    'extlen': cmd_extlen,
    'distance': cmd_distance,
    'eq-eval': cmd_eq_eval,
    'detour': cmd_detour,
    'modular-solve': cmd_modular_solve,
    'part-check': cmd_part_check,
    'busemann-check': cmd_busemann_check,
    'iet': cmd_iet,
    'straighten': cmd_straighten,
}


# -----------------------
# 解析器
# -----------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--probes', type=int, help='环面探针上限 N')
    common.add_argument('--grid', '-k', type=int, help='离散极值长度的细分数 k')
    common.add_argument('--tol', type=float, help='判定阈值')
    common.add_argument('--seed', type=int, help='随机种子')
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument('--json', dest='fmt', action='store_const', const='json')
    fmt.add_argument('--csv', dest='fmt', action='store_const', const='csv')
    common.add_argument('--output', '-o', help='结果写入文件而不是 stdout')
    common.add_argument('--manifest', help='运行清单输出路径')
    common.add_argument('--verbose', '-v', action='store_true')

    parser = argparse.ArgumentParser(prog='teichcalc', description='Teichmüller 度量渐近几何计算')
    parser.add_argument('--version', action='version', version=f'teichcalc {VERSION}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('verify-thm1', parents=[common])
    p.add_argument('--surface', required=True)
    p.add_argument('--direction', default='0,1', help='环面二次微分的竖直方向')
    p.add_argument('--foliation', '-F', help='环面直线 p,q[,w]（默认 1,1）或 origami 柱面方向（默认 1,0）')
    p.add_argument('--cylinder', type=int, default=0, help='origami 上取该方向的第几个柱面')
    p.add_argument('--ts', default=DEFAULT_TS)
    p.add_argument('--max-iter', type=int)
    p.add_argument('--workers', type=int, default=1)

    p = sub.add_parser('extlen', parents=[common])
    p.add_argument('--surface', required=True)
    p.add_argument('--curve')
    p.add_argument('--direction', default='1,0', help='未给 --curve 时取该方向第一个柱面的核心')
    p.add_argument('--ts', default='0')
    p.add_argument('--max-iter', type=int)

    p = sub.add_parser('distance', parents=[common])
    p.add_argument('--x', required=True, help='re,im')
    p.add_argument('--y', required=True, help='re,im')

    p = sub.add_parser('eq-eval', parents=[common])
    p.add_argument('--record', required=True)
    p.add_argument('--foliation', '-F')
    p.add_argument('--pairings')
    p.add_argument('--foliations', help='foliation.v1 文件')
    p.add_argument('--id', help='--foliations 文件中要求值的叶状结构 id')

    p = sub.add_parser('detour', parents=[common])
    p.add_argument('q1')
    p.add_argument('q2')
    p.add_argument('--basepoint', help='环面基点 re,im')

    p = sub.add_parser('modular-solve', parents=[common])
    p.add_argument('target')
    p.add_argument('--oracle', required=True, help='synthetic:a,b;c,d 或 torus:re,im')
    p.add_argument('--start')
    p.add_argument('--starts', type=int, default=1)
    p.add_argument('--max-iter', type=int)

    p = sub.add_parser('part-check', parents=[common])
    p.add_argument('q1')
    p.add_argument('q2')

    p = sub.add_parser('busemann-check', parents=[common])
    p.add_argument('input')
    p.add_argument('--window', type=int, help='尾部趋势窗口（默认取 CALC_CONFIG）')
    p.add_argument('--tail-ratio', type=float, help='末项距离与首项距离之比的上限')

    p = sub.add_parser('iet', parents=[common])
    p.add_argument('--iet')
    p.add_argument('--golden', action='store_true')
    p.add_argument('--surface')
    p.add_argument('--direction')
    p.add_argument('--steps', type=int)
    p.add_argument('--bits', type=int)

    p = sub.add_parser('straighten', parents=[common])
    p.add_argument('--surface', required=True)
    p.add_argument('--curve', required=True)
    p.add_argument('--eps', type=float, default=0.0)
    return parser


def apply_cli_overrides(args):
    """命令行参数覆盖 CALC_CONFIG"""
    if args.probes is not None:
        CALC_CONFIG['probe_cap'] = args.probes
    if args.grid is not None:
        CALC_CONFIG['discrete_solver']['grid'] = args.grid
    if args.seed is not None:
        CALC_CONFIG['seed'] = args.seed
    if args.verbose:
        CALC_CONFIG['verbose'] = True


def _parameters(args) -> Dict:
    return {k: v for k, v in sorted(vars(args).items()) if isinstance(v, (str, int, float, bool, type(None)))}


def output_path(path: str) -> str:
    """相对路径落在 CALC_CONFIG['output_dir'] 下"""
    if os.path.isabs(path):
        return path
    return os.path.join(CALC_CONFIG['output_dir'], path)


def _written(path: Optional[str], requested: str) -> str:
    if path is None:
        raise OutputError(f"结果文件写入失败: {requested}")
    return path


def emit(result: Dict, args) -> Optional[str]:
    """表格默认 CSV，其余默认 JSON；--output 写不出去时抛 OutputError"""
    table = result.get('table')
    if table is not None and args.fmt != 'json':
        if args.output:
            return _written(data_manager.save_csv(table, output_path(args.output)), args.output)
        sys.stdout.write(data_manager.csv_text(table))
        return None
    if table is not None:
        payload = {'command': args.command, 'rows': json.loads(table.to_json(orient='records'))}
    else:
        payload = {k: v for k, v in result.items() if k != 'exit'}
    if args.output:
        return _written(data_manager.save_json(payload, output_path(args.output)), args.output)
    print(data_manager.dumps(payload))
    return None


def main(argv: Optional[List[str]] = None) -> int:
    """命令行主函数，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    saved = copy.deepcopy(CALC_CONFIG)
    try:
        apply_cli_overrides(args)
        verbose_log(f"🚀 teichcalc {VERSION} {args.command}")
        manifest = data_manager.RunManifest(args.command)
        result = COMMANDS[args.command](args, manifest)
        manifest.parameters = _parameters(args)
        written = emit(result, args)
        if written:
            log(f"✅ 结果已保存: {written}")
        if args.manifest:
            path = output_path(args.manifest)
            if data_manager.write_manifest(manifest, path):
                verbose_log(f"✅ 运行清单已保存: {path}")
        return result.get('exit', 0)
    except TeichCalcError as e:
        log(f"❌ {e.kind}: {e}")
        error = {'error': e.kind, 'message': str(e)}
        residuals = getattr(e, 'residuals', None)
        if residuals:
            error['residuals'] = residuals
        print(data_manager.dumps(error))
        return e.exit_code
    finally:
        CALC_CONFIG.clear()
        CALC_CONFIG.update(saved)


if __name__ == "__main__":
    sys.exit(main())
