"""激活函数与逐层归一化的数值内核 (无日志，纯函数)。"""

from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.utils.errors import UnsupportedError

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


class ActivationKind(str, Enum):
    RELU = "relu"
    SELU = "selu"
    IDENTITY = "identity"


class NormalizationMode(str, Enum):
    NONE = "none"
    BATCHNORM = "batchnorm"
    WEIGHTNORM = "weightnorm"
    SELU = "selu"
    DROPOUT = "dropout"


class NormalizationConfig(BaseModel):
    """网络的归一化设置。selu 模式只影响激活函数与初始化，不引入额外参数。"""

    model_config = ConfigDict(frozen=True)

    mode: NormalizationMode = NormalizationMode.NONE
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    bn_eps: float = Field(default=1e-5, gt=0.0)
    bn_momentum: float = Field(default=0.9, ge=0.0, le=1.0)

    @property
    def uses_batchnorm(self) -> bool:
        return self.mode == NormalizationMode.BATCHNORM

    @property
    def uses_weightnorm(self) -> bool:
        return self.mode == NormalizationMode.WEIGHTNORM

    @property
    def uses_dropout(self) -> bool:
        return self.mode == NormalizationMode.DROPOUT


def parse_activation(value) -> ActivationKind:
    try:
        return ActivationKind(value)
    except ValueError as e:
        raise UnsupportedError(f"不支持的激活函数: {value!r}") from e


def parse_normalization(value) -> NormalizationMode:
    try:
        return NormalizationMode(value)
    except ValueError as e:
        raise UnsupportedError(f"不支持的归一化模式: {value!r}") from e


def activate(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    if kind == ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind == ActivationKind.SELU:
        return SELU_LAMBDA * np.where(z > 0.0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    return z


def activation_derivative(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    # ReLU 在 0 处的次梯度取 0
    if kind == ActivationKind.RELU:
        return np.where(z > 0.0, 1.0, 0.0)
    if kind == ActivationKind.SELU:
        return SELU_LAMBDA * np.where(z > 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))
    return np.ones_like(z)


# --- weight normalization: W = g * v / ||v|| (按行) ---


def _row_norms(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1)
    # 全零行视为范数 1，有效权重仍为 0
    return np.where(norms == 0.0, 1.0, norms)


def weightnorm_effective(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    norms = _row_norms(v)
    return v * (g / norms)[..., None]


def weightnorm_backward(v: np.ndarray, g: np.ndarray, d_w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """由有效权重的梯度 d_w 求 (d_v, d_g)。"""
    norms = _row_norms(v)
    v_hat = v / norms[..., None]
    d_g = np.sum(d_w * v_hat, axis=-1)
    d_v = (g / norms)[..., None] * (d_w - d_g[..., None] * v_hat)
    return d_v, d_g


# --- batch normalization，作用在激活之前 ---


def batchnorm_train(
    h: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """返回 (z, x_hat, batch_mean, batch_var)，方差为有偏估计。"""
    mean = h.mean(axis=0)
    var = h.var(axis=0)
    x_hat = (h - mean) / np.sqrt(var + eps)
    return gamma * x_hat + beta, x_hat, mean, var


def batchnorm_eval(
    h: np.ndarray, gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray, running_var: np.ndarray, eps: float
) -> Tuple[np.ndarray, np.ndarray]:
    x_hat = (h - running_mean) / np.sqrt(running_var + eps)
    return gamma * x_hat + beta, x_hat


def batchnorm_backward_train(
    d_z: np.ndarray, x_hat: np.ndarray, gamma: np.ndarray, var: np.ndarray, eps: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """训练模式 BN 的反向传播，返回 (d_h, d_gamma, d_beta)。"""
    n = d_z.shape[0]
    d_gamma = np.sum(d_z * x_hat, axis=0)
    d_beta = np.sum(d_z, axis=0)
    d_xhat = d_z * gamma
    inv_std = 1.0 / np.sqrt(var + eps)
    d_h = (inv_std / n) * (n * d_xhat - d_xhat.sum(axis=0) - x_hat * np.sum(d_xhat * x_hat, axis=0))
    return d_h, d_gamma, d_beta


def batchnorm_backward_eval(
    d_z: np.ndarray, x_hat: np.ndarray, gamma: np.ndarray, running_var: np.ndarray, eps: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    d_gamma = np.sum(d_z * x_hat, axis=0)
    d_beta = np.sum(d_z, axis=0)
    d_h = d_z * gamma / np.sqrt(running_var + eps)
    return d_h, d_gamma, d_beta


def dropout_mask(generator: np.random.Generator, shape: Tuple[int, ...], rate: float) -> np.ndarray:
    """inverted dropout 掩码，保留的位置取 1/(1-rate)"""
    keep = (generator.random(shape) >= rate).astype(np.float64)
    return keep / (1.0 - rate)
