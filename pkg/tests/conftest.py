import json
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


@pytest.fixture
def write_json(tmp_path):
    """把对象写成 tmp_path 下的 JSON 文件并返回路径字符串"""
    def _write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data, ensure_ascii=False), encoding='utf-8')
        return str(path)
    return _write
