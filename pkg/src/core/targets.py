"""解析目标函数与按种子抽样的数据集。输入服从 [-√3, √3]^d_in 上的均匀分布 (方差 1)。"""

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.core.rng import STREAM_DATA, make_generator
from src.utils.errors import ArgumentError, ShapeError, UnsupportedError
from src.utils.logger import get_logger

logger = get_logger("Targets")

SQRT3 = math.sqrt(3.0)


class TargetSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    d_in: int
    d_out: int
    low: float = -SQRT3
    high: float = SQRT3
    description: str = ""


def _abs1d(x: np.ndarray) -> np.ndarray:
    return np.abs(x)


def _xsin5x(x: np.ndarray) -> np.ndarray:
    return x * np.sin(5.0 * x)


def _stepsin(x: np.ndarray) -> np.ndarray:
    # 指示函数严格取 x > 0，x == 0 处为 0
    return np.where(x > 0.0, 1.0, 0.0) + 0.2 * np.sin(5.0 * x)


def _abs2d(x: np.ndarray) -> np.ndarray:
    return np.stack([np.abs(x[:, 0] + x[:, 1]), np.abs(x[:, 0] - x[:, 1])], axis=1)


TARGETS: Dict[str, TargetSpec] = {
    "abs1d": TargetSpec(id="abs1d", d_in=1, d_out=1, description="|x|"),
    "xsin5x": TargetSpec(id="xsin5x", d_in=1, d_out=1, description="x sin(5x)"),
    "stepsin": TargetSpec(id="stepsin", d_in=1, d_out=1, description="1{x>0} + 0.2 sin(5x)"),
    "abs2d": TargetSpec(id="abs2d", d_in=2, d_out=2, description="(|x1+x2|, |x1-x2|)"),
}

_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "abs1d": _abs1d,
    "xsin5x": _xsin5x,
    "stepsin": _stepsin,
    "abs2d": _abs2d,
}


def get_target(target_id: str) -> TargetSpec:
    try:
        return TARGETS[target_id]
    except KeyError as e:
        raise UnsupportedError(f"未知的目标函数: {target_id!r} (可选: {', '.join(TARGETS)})") from e


def in_domain(target_id: str, x) -> np.ndarray:
    spec = get_target(target_id)
    x = np.asarray(x, dtype=np.float64)
    inside = (x >= spec.low) & (x <= spec.high)
    return inside.all(axis=-1) if x.ndim >= 1 else inside


def evaluate(target_id: str, x) -> np.ndarray:
    """
    计算目标值。x 可以是单个输入 (长度 d_in 的向量，1 维目标也可以是标量) 或 (n, d_in) 的批量。

    定义域外的输入照常计算并记录一条警告。
    """
    spec = get_target(target_id)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != spec.d_in:
        raise ShapeError(f"目标 {target_id} 需要 d_in={spec.d_in}，收到形状 {x.shape}")
    outside = ~in_domain(target_id, X)
    if np.any(outside):
        logger.warning(f"目标 {target_id}: {int(outside.sum())} 个输入位于定义域 [-√3, √3] 之外")
    flat = X[:, 0] if spec.d_in == 1 else X
    y = _FUNCTIONS[target_id](flat)
    Y = y.reshape(X.shape[0], spec.d_out)
    return Y[0] if single else Y


@dataclass(frozen=True)
class Dataset:
    target_id: str
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


def sample_inputs(target_id: str, n: int, generator: np.random.Generator) -> np.ndarray:
    spec = get_target(target_id)
    return spec.low + (spec.high - spec.low) * generator.random((n, spec.d_in))


def sample_dataset(
    target_id: str, n: int, seed: int = 0, generator: Optional[np.random.Generator] = None
) -> Dataset:
    """n 个独立同分布的均匀输入及其精确标签。"""
    if n < 1:
        raise ArgumentError("n 必须 >= 1")
    gen = generator if generator is not None else make_generator(seed, STREAM_DATA)
    x = sample_inputs(target_id, n, gen)
    return Dataset(target_id, x, evaluate(target_id, x))


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d_in, d_out = dataset.x.shape[1], dataset.y.shape[1]
    writer.writerow([f"x{i + 1}" for i in range(d_in)] + [f"y{j + 1}" for j in range(d_out)])
    for xi, yi in zip(dataset.x, dataset.y):
        writer.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
    return buf.getvalue()


def target_function(target_id: str) -> Callable[[np.ndarray], np.ndarray]:
    """不带定义域检查的向量化目标函数，输入 (n, d_in)，输出 (n, d_out)。用于数值积分等内部计算。"""
    spec = get_target(target_id)
    fn = _FUNCTIONS[target_id]

    def _call(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, spec.d_in)
        flat = X[:, 0] if spec.d_in == 1 else X
        return fn(flat).reshape(X.shape[0], spec.d_out)

    return _call


# 一维目标的不可导点 / 间断点，数值积分时作为断点传入
KINKS: Dict[str, tuple] = {"abs1d": (0.0,), "xsin5x": (), "stepsin": (0.0,), "abs2d": ()}
