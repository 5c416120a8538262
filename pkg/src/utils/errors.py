"""collapselab 的异常类型。前三种同时继承 ValueError，调用方也可以直接捕获内建类型。"""


class CollapseLabError(Exception):
    """所有 collapselab 异常的基类"""


class ShapeError(CollapseLabError, ValueError):
    """输入维度与网络结构不一致"""


class ArgumentError(CollapseLabError, ValueError):
    """参数不满足前置条件 (例如空 batch、p 不在 (0,1) 内)"""


class UnsupportedError(CollapseLabError, ValueError):
    """未知的 target id、初始化方案或归一化模式"""


class NumericalError(CollapseLabError):
    """数值计算失败 (非有限值、积分不收敛且调用方要求严格)"""


class ArtifactWriteError(CollapseLabError):
    """一个或多个管道没能写出产物"""


__all__ = ["CollapseLabError", "ShapeError", "ArgumentError", "UnsupportedError", "NumericalError", "ArtifactWriteError"]
