"""
参数初始化。

对称方案 (he_normal / lecun_normal / glorot_uniform / symmetric_normal /
symmetric_uniform / rademacher) 的每个权重都服从关于 0 对称的分布；
orthogonal 与 lsuv 是非对称方案。所有抽样都经过 SymmetricStream，
flip_sign=True 时得到逐项取反的参数。
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.layers import ActivationKind, NormalizationConfig, parse_activation
from src.core.network import Architecture, Network, Parameters, affine, forward_batch
from src.core.rng import STREAM_INIT, SymmetricStream, make_generator
from src.utils.errors import ArgumentError, UnsupportedError
from src.utils.logger import get_logger

logger = get_logger("Initializers")


class InitScheme(str, Enum):
    HE_NORMAL = "he_normal"
    LECUN_NORMAL = "lecun_normal"
    GLOROT_UNIFORM = "glorot_uniform"
    SYMMETRIC_NORMAL = "symmetric_normal"
    SYMMETRIC_UNIFORM = "symmetric_uniform"
    RADEMACHER = "rademacher"
    ORTHOGONAL = "orthogonal"
    LSUV = "lsuv"


SYMMETRIC_SCHEMES = frozenset(
    {
        InitScheme.HE_NORMAL,
        InitScheme.LECUN_NORMAL,
        InitScheme.GLOROT_UNIFORM,
        InitScheme.SYMMETRIC_NORMAL,
        InitScheme.SYMMETRIC_UNIFORM,
        InitScheme.RADEMACHER,
    }
)


class BiasMode(str, Enum):
    ZERO = "zero"
    SYMMETRIC = "symmetric"


class InitializerSpec(BaseModel):
    """
    初始化方案。

    sigma_w2 用于 symmetric_normal / symmetric_uniform / rademacher (权重方差 sigma_w2 / fan_in)，
    sigma_b2 是 bias_mode=symmetric 时偏置的方差。
    """

    model_config = ConfigDict(frozen=True)

    scheme: InitScheme = InitScheme.HE_NORMAL
    sigma_w2: float = Field(default=2.0, ge=0.0)
    sigma_b2: float = Field(default=1.0, ge=0.0)
    bias_mode: BiasMode = BiasMode.ZERO
    seed: int = 0

    @property
    def is_symmetric(self) -> bool:
        return self.scheme in SYMMETRIC_SCHEMES


def parse_scheme(value) -> InitScheme:
    try:
        return InitScheme(value)
    except ValueError as e:
        raise UnsupportedError(f"不支持的初始化方案: {value!r}") from e


def _draw_orthogonal(stream: SymmetricStream, rows: int, cols: int, batch: Tuple[int, ...] = ()) -> np.ndarray:
    """标准正态矩阵做 QR，再按 R 的对角符号修正，得到正交群上的均匀分布。"""
    tall, short = max(rows, cols), min(rows, cols)
    a = stream.standard_normal(batch + (tall, short))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d = np.where(d == 0.0, 1.0, d)
    q = q * d[..., None, :]
    return q if rows >= cols else np.swapaxes(q, -1, -2)


def orthogonal_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """rows <= cols 时行正交，否则列正交。"""
    if rows < 1 or cols < 1:
        raise ArgumentError(f"矩阵尺寸必须 >= 1: {rows}x{cols}")
    return _draw_orthogonal(SymmetricStream(make_generator(seed, STREAM_INIT)), rows, cols)


def _draw_weight(stream: SymmetricStream, spec: InitializerSpec, fan_in: int, fan_out: int, size) -> np.ndarray:
    scheme = spec.scheme
    if scheme == InitScheme.HE_NORMAL:
        return stream.normal(math.sqrt(2.0 / fan_in), size)
    if scheme == InitScheme.LECUN_NORMAL:
        return stream.normal(math.sqrt(1.0 / fan_in), size)
    if scheme == InitScheme.SYMMETRIC_NORMAL:
        return stream.normal(math.sqrt(spec.sigma_w2 / fan_in), size)
    if scheme == InitScheme.GLOROT_UNIFORM:
        return stream.uniform(math.sqrt(6.0 / (fan_in + fan_out)), size)
    if scheme == InitScheme.SYMMETRIC_UNIFORM:
        return stream.uniform(math.sqrt(3.0 * spec.sigma_w2 / fan_in), size)
    if scheme == InitScheme.RADEMACHER:
        return stream.rademacher(math.sqrt(spec.sigma_w2 / fan_in), size)
    if scheme in (InitScheme.ORTHOGONAL, InitScheme.LSUV):
        batch = tuple(size[:-2])
        return _draw_orthogonal(stream, fan_out, fan_in, batch)
    raise UnsupportedError(f"不支持的初始化方案: {scheme!r}")


def _draw_bias(stream: SymmetricStream, spec: InitializerSpec, size) -> np.ndarray:
    # 偏置分布与权重同族，方差 sigma_b2
    if spec.scheme in (InitScheme.GLOROT_UNIFORM, InitScheme.SYMMETRIC_UNIFORM):
        return stream.uniform(math.sqrt(3.0 * spec.sigma_b2), size)
    if spec.scheme == InitScheme.RADEMACHER:
        return stream.rademacher(math.sqrt(spec.sigma_b2), size)
    return stream.normal(math.sqrt(spec.sigma_b2), size)


def _draw(arch: Architecture, spec: InitializerSpec, stream: SymmetricStream, batch: Tuple[int, ...]):
    zero_bias = arch.bias_free or spec.bias_mode == BiasMode.ZERO
    weights, biases = [], []
    for l in range(1, arch.depth + 1):
        fan_out, fan_in = arch.weight_shape(l)
        weights.append(_draw_weight(stream, spec, fan_in, fan_out, batch + (fan_out, fan_in)))
        if zero_bias:
            biases.append(np.zeros(batch + (fan_out,)))
        else:
            biases.append(_draw_bias(stream, spec, batch + (fan_out,)))
    return tuple(weights), tuple(biases)


def init_parameters(arch: Architecture, spec: InitializerSpec, flip_sign: bool = False) -> Parameters:
    """
    由 (arch, spec) 确定地生成参数。

    lsuv 方案在这里只给出正交初值，按层缩放需要数据，见 lsuv_rescale。
    """
    stream = SymmetricStream(make_generator(spec.seed, STREAM_INIT), flip=flip_sign)
    weights, biases = _draw(arch, spec, stream, ())
    return Parameters(weights=weights, biases=biases)


def init_network(
    arch: Architecture,
    spec: InitializerSpec,
    activation=ActivationKind.RELU,
    normalization: Optional[NormalizationConfig] = None,
    flip_sign: bool = False,
) -> Network:
    return Network(
        arch=arch,
        params=init_parameters(arch, spec, flip_sign=flip_sign),
        activation=parse_activation(activation),
        normalization=normalization or NormalizationConfig(),
    )


def draw_parameter_batch(
    arch: Architecture, spec: InitializerSpec, m: int, generator: np.random.Generator
) -> Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...]]:
    """一次抽取 m 组独立参数，数组带前导 batch 维 (Monte Carlo 用)。"""
    if m < 1:
        raise ArgumentError("m 必须 >= 1")
    return _draw(arch, spec, SymmetricStream(generator), (m,))


# --- LSUV ---


@dataclass(frozen=True)
class LSUVResult:
    network: Network
    scales: Tuple[float, ...]
    iterations: Tuple[int, ...]
    dead_layers: Tuple[int, ...]


# 正齐次激活：前面各层的缩放会按比例传到下一层的输入
_HOMOGENEOUS = (ActivationKind.RELU, ActivationKind.IDENTITY)


def lsuv_rescale_detailed(
    net: Network, probe_batch, band: Tuple[float, float] = (0.95, 1.05), max_iter: int = 10
) -> LSUVResult:
    """
    逐层缩放，使探测 batch 上预激活的标准差落入 band。

    第 l 层的权重与偏置按同一个正因子缩放，偏置先乘以前面各层的累计缩放，
    于是 ReLU 网络每个预激活都只是原值的正倍数，符号模式不变。
    预激活恒为 0、或激活输出全为 0 的层无法通过缩放恢复，保持原样并记录在 dead_layers 中。
    """
    X = np.asarray(probe_batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ArgumentError("probe_batch 必须是非空的 (n, d_in) 数组")
    lo, hi = band
    weights: List[np.ndarray] = [w.copy() for w in net.params.weights]
    biases: List[np.ndarray] = [b.copy() for b in net.params.biases]
    scales, iterations, dead = [], [], []
    current = net
    upstream = 1.0
    for l in range(1, net.depth + 1):
        if upstream != 1.0:
            biases[l - 1] = biases[l - 1] * upstream
            current = current.with_params(current.params.rebuild(_replace_affine(current.params, weights, biases)))
        total, used = 1.0, 0
        trace = forward_batch(current, X)
        x_prev = trace.layer_input(l)
        for _ in range(max_iter):
            h = affine(current, l, x_prev)
            std = float(np.std(h))
            relu_dead = current.layer_activation(l) == ActivationKind.RELU and not np.any(h > 0.0)
            if std == 0.0 or relu_dead:
                dead.append(l)
                logger.debug(f"第 {l} 层在探测 batch 上为零层，LSUV 保持不变")
                break
            if lo <= std <= hi:
                break
            weights[l - 1] = weights[l - 1] / std
            biases[l - 1] = biases[l - 1] / std
            total /= std
            used += 1
            current = current.with_params(current.params.rebuild(_replace_affine(current.params, weights, biases)))
        scales.append(total)
        iterations.append(used)
        homogeneous = current.layer_activation(l) in _HOMOGENEOUS and not current.uses_batchnorm_at(l)
        upstream = upstream * total if homogeneous else 1.0
    return LSUVResult(current, tuple(scales), tuple(iterations), tuple(dead))


def _replace_affine(params: Parameters, weights: List[np.ndarray], biases: List[np.ndarray]) -> List[np.ndarray]:
    replacement = {"weights": iter(weights), "biases": iter(biases)}
    return [next(replacement[name]) if name in replacement else arr for name, _, arr in params.named_arrays()]


def lsuv_rescale(net: Network, probe_batch) -> Network:
    return lsuv_rescale_detailed(net, probe_batch).network
