"""
运行配置 - 默认参数集中在 CALC_CONFIG，环境变量(.env)和命令行参数依次覆盖
"""
import os
import sys
import time

from dotenv import load_dotenv

load_dotenv()

VERSION = "0.3.0"

# 计算参数配置
CALC_CONFIG = {
    'probe_cap': 50,  # 环面探针 |p|,|q| <= N
    'seed': 0,  # 随机测试与多起点求解的种子
    'verbose': False,
    'output_dir': '.',
    'tolerances': {
        'closed_form': 1e-12,  # 闭式恒等式
        'optimisation': 1e-6,  # 优化结果一致性
        'discrete_ext': 0.05,  # 离散极值长度相对误差 5%
        'verify_gap': 1e-6,  # verify-thm1 最大 t 处的 gap 阈值
    },
    'discrete_solver': {
        'grid': 16,  # 每个矩形细分 k x k
        'max_iter': 10000,
        'window': 100,  # 最近 window 次迭代改善小于 tol 视为收敛
        'tol': 1e-8,
    },
    'modular_solver': {
        'max_iter': 100000,
        'tol': 1e-10,
        'damping': 0.5,  # 检测到振荡时的混合系数
        'starts': 16,
    },
    'busemann': {
        'tol': 1e-9,  # 末项到极限的距离在此之内直接视为收敛
        'window': 5,  # 尾部趋势：最后 window 项严格下降
        'tail_ratio': 0.05,  # 且末项距离 <= 首项距离 × tail_ratio
    },
    'straighten': {
        'max_moves': 10000,
    },
    'iet': {
        'bits': 53,  # 浮点输入量化步长 2^-53
        'max_steps': 50,
    },
}


def _env_override(name, section, key, cast):
    raw = os.getenv(name)
    if raw is None or raw == '':
        return
    try:
        value = cast(raw)
    except ValueError:
        log(f"⚠️ 环境变量 {name}={raw} 无法解析，忽略")
        return
    if section is None:
        CALC_CONFIG[key] = value
    else:
        CALC_CONFIG[section][key] = value


def _as_bool(raw: str) -> bool:
    return raw.strip().lower() in ('1', 'true', 'yes', 'on')


def log(message):
    """统一日志输出（写到 stderr，stdout 留给机器可读结果）"""
    timestamp = time.strftime('%Y-%m-%d %H:%M:%S')
    print(f"[{timestamp}] {message}", file=sys.stderr, flush=True)


def verbose_log(message):
    """仅在 verbose 打开时输出"""
    if CALC_CONFIG['verbose']:
        log(message)


def apply_env_overrides():
    """读取 TEICHCALC_* 环境变量"""
    _env_override('TEICHCALC_PROBES', None, 'probe_cap', int)
    _env_override('TEICHCALC_SEED', None, 'seed', int)
    _env_override('TEICHCALC_VERBOSE', None, 'verbose', _as_bool)
    _env_override('TEICHCALC_OUTPUT_DIR', None, 'output_dir', str)
    _env_override('TEICHCALC_GRID', 'discrete_solver', 'grid', int)
    _env_override('TEICHCALC_TOL', 'tolerances', 'verify_gap', float)


apply_env_overrides()
