"""
错误类型 - 库代码只抛出，命令行入口负责捕获并映射退出码
"""
from typing import List, Optional


class TeichCalcError(Exception):
    """所有计算错误的基类"""
    exit_code = 1
    kind = "error"


class InputError(TeichCalcError, ValueError):
    """输入数据或前置条件不合法（退出码 2）"""
    exit_code = 2
    kind = "input"


class RepresentationMismatchError(InputError):
    """叶状结构表示不一致：分量和与环面直线混用，或基不同"""
    kind = "representation-mismatch"


class NormalizationError(InputError):
    """要求单位面积的地方给了非单位面积"""
    kind = "normalization"


class NonConvergenceError(TeichCalcError, RuntimeError):
    """迭代预算耗尽（退出码 3），附带残差历史"""
    exit_code = 3
    kind = "nonconvergence"

    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class OutputError(TeichCalcError):
    """结果文件写出失败（退出码 1）"""
    kind = "output"
