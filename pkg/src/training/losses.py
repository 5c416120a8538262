from enum import Enum

import numpy as np

from src.utils.errors import ShapeError, UnsupportedError


class LossKind(str, Enum):
    MSE = "mse"
    MAE = "mae"


def parse_loss(value) -> LossKind:
    try:
        return LossKind(value)
    except ValueError as e:
        raise UnsupportedError(f"不支持的损失函数: {value!r}") from e


def _pair(predictions, targets):
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"预测形状 {p.shape} 与目标形状 {y.shape} 不一致")
    if p.size == 0:
        raise ShapeError("预测与目标不能为空")
    return p, y


def loss_value(kind: LossKind, predictions, targets) -> float:
    """所有分量上的平均平方误差 / 平均绝对误差"""
    p, y = _pair(predictions, targets)
    r = p - y
    if kind == LossKind.MSE:
        return float(np.mean(r * r))
    if kind == LossKind.MAE:
        return float(np.mean(np.abs(r)))
    raise UnsupportedError(f"不支持的损失函数: {kind!r}")


def loss_gradient(kind: LossKind, predictions, targets) -> np.ndarray:
    """loss_value 对 predictions 的梯度。MAE 在 p == y 处取 0。"""
    p, y = _pair(predictions, targets)
    r = p - y
    if kind == LossKind.MSE:
        return 2.0 * r / r.size
    if kind == LossKind.MAE:
        return np.sign(r) / r.size
    raise UnsupportedError(f"不支持的损失函数: {kind!r}")
