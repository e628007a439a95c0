"""
数据管理模块 - 读取曲面/曲线/记录文件，写出 JSON、CSV 结果与运行清单
"""
import copy
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Dict, List, Optional

import pandas as pd

from boundary import ComponentTrack, QDRecord
from config import CALC_CONFIG, VERSION, log
from errors import InputError
from flat_torus import TorusPoint
from foliation import MeasuredFoliation, foliations_from_json
from square_tiled import Origami, Rectangulation, rectangle_torus
from straighten import ChordCurve


def load_json_input(path: str):
    """读取用户给的输入文件；文件缺失或 JSON 非法时抛 InputError"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"输入文件不存在: {path}")
    except json.JSONDecodeError as e:
        raise InputError(f"输入文件不是合法 JSON: {path}: {e}")


def dumps(data) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2)


def save_json(data, path: str) -> Optional[str]:
    """保存 JSON 结果；失败时记日志并返回 None，由调用方决定是否中止"""
    try:
        tmp = f"{path}.tmp"
        with open(tmp, 'w', encoding='utf-8') as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
        os.replace(tmp, path)
        return path
    except Exception as e:
        log(f"❌ 保存 JSON 失败: {path}: {e}")
        return None


def save_csv(df: pd.DataFrame, path: str) -> Optional[str]:
    """保存 CSV 表格（表头、点作小数点、LF 换行）"""
    try:
        tmp = f"{path}.tmp"
        df.to_csv(tmp, index=False, lineterminator='\n')
        os.replace(tmp, path)
        return path
    except Exception as e:
        log(f"❌ 保存 CSV 失败: {path}: {e}")
        return None


def csv_text(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, lineterminator='\n')


def file_digest(path: str) -> str:
    """输入文件的 SHA-256"""
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            h.update(chunk)
    return h.hexdigest()


# -----------------------
# 输入解析
# -----------------------
def parse_surface(data: Dict):
    """
    曲面文件：
        {"type": "torus", "tau": [re, im]}
        {"type": "origami", "h": ..., "v": ...}（1 起的列表或轮换串）
        {"type": "rectangle_torus", "w": 1, "h": 2}
    """
    if not isinstance(data, dict):
        raise InputError("曲面文件必须是 JSON 对象")
    kind = data.get('type', 'origami')
    if kind == 'torus':
        return TorusPoint.from_json(data)
    if kind == 'origami':
        return Origami.from_json(data)
    if kind == 'rectangle_torus':
        try:
            return rectangle_torus(data['w'], data['h'])
        except KeyError as e:
            raise InputError(f"rectangle_torus 缺少字段 {e}")
    raise InputError(f"未知曲面类型: {kind}")


def load_surface(path: str):
    return parse_surface(load_json_input(path))


def as_rectangulation(surface) -> Rectangulation:
    if isinstance(surface, Rectangulation):
        return surface
    if isinstance(surface, Origami):
        return Rectangulation.from_origami(surface)
    raise InputError("该命令需要 origami 或矩形环面")


def load_curve(path: str) -> ChordCurve:
    return ChordCurve.from_json(load_json_input(path))


def load_foliation(path: str, fid: Optional[str] = None) -> MeasuredFoliation:
    """从 foliation.v1 文件取出一个叶状结构；文件里只有一个时可以不给 id"""
    _, foliations = foliations_from_json(load_json_input(path))
    if fid is None:
        if len(foliations) != 1:
            raise InputError(f"{path} 中有 {len(foliations)} 个叶状结构，需要指定 --id")
        return next(iter(foliations.values()))
    if fid not in foliations:
        raise InputError(f"{path} 中没有叶状结构 {fid}")
    return foliations[fid]


def load_record(path: str) -> QDRecord:
    data = load_json_input(path)
    if not isinstance(data, dict):
        raise InputError("qdrecord 文件必须是 JSON 对象")
    return QDRecord.from_json(data)


def load_busemann_input(path: str):
    """{"sequence": [record...], "tracks": [{"id", "limit": [...]}], "limit": record}"""
    data = load_json_input(path)
    try:
        seq = [QDRecord.from_json(r) for r in data['sequence']]
        tracks = [ComponentTrack(str(t['id']), tuple(t['limit'])) for t in data['tracks']]
        limit = QDRecord.from_json(data['limit'])
    except (KeyError, TypeError) as e:
        raise InputError(f"busemann 输入格式错误: {e}")
    return seq, tracks, limit


def parse_vector(text: str, cast=float) -> List:
    """ "1,2,3" -> [1.0, 2.0, 3.0] """
    try:
        return [cast(x) for x in text.replace(' ', '').split(',') if x != '']
    except ValueError:
        raise InputError(f"无法解析的向量: {text}")


# -----------------------
# 运行清单
# -----------------------
@dataclass
class RunManifest:
    command: str
    inputs: Dict[str, str] = field(default_factory=dict)  # 路径 -> sha256
    parameters: Dict = field(default_factory=dict)
    config: Dict = field(default_factory=lambda: copy.deepcopy(CALC_CONFIG))  # 生效的 CALC_CONFIG（含环境变量与命令行覆盖）
    version: str = VERSION
    started: str = field(default_factory=lambda: datetime.now().strftime('%Y-%m-%d %H:%M:%S'))
    wall_clock: float = 0.0
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, path: Optional[str]):
        if path and os.path.isfile(path):
            self.inputs[path] = file_digest(path)

    def finish(self) -> "RunManifest":
        self.wall_clock = time.perf_counter() - self._t0
        return self

    def to_json(self) -> Dict:
        out = asdict(self)
        out.pop('_t0')
        return out


def write_manifest(manifest: RunManifest, path: str) -> Optional[str]:
    """写出运行清单（尽力而为，失败只打印）"""
    return save_json(manifest.finish().to_json(), path)
