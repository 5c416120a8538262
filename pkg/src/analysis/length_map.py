"""
长度映射：每层预激活的期望归一化平方长度 E[q^l] 的递推。

    E[q^1] = σ_w² q^0 + σ_b²
    E[q^l] = σ_w² ∫ Dz φ(√E[q^{l-1}] z)² + σ_b²      (l >= 2)

ReLU 时积分等于 E[q^{l-1}] / 2。
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.initializers import BiasMode, InitializerSpec, InitScheme, draw_parameter_batch
from src.core.layers import ActivationKind, activate
from src.core.network import Architecture, forward_parameter_batch
from src.core.rng import STREAM_LENGTH, make_generator
from src.utils.errors import ArgumentError
from src.utils.logger import get_logger

logger = get_logger("LengthMap")

QUADRATURE_NODES = 64
CONVERGENCE_TOL = 1e-10


class LengthMapParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_w2: float = Field(ge=0.0)
    sigma_b2: float = Field(default=0.0, ge=0.0)
    q0: float = Field(default=1.0, ge=0.0)
    depth: int = Field(ge=1)
    activation: ActivationKind = ActivationKind.RELU


@dataclass(frozen=True)
class LengthTrajectory:
    """E[q^1] .. E[q^L]。converged 为 False 表示节点数加倍后结果变化超过容差。"""

    values: Tuple[float, ...]
    converged: bool = True
    max_refinement_delta: float = 0.0

    def __len__(self) -> int:
        return len(self.values)


def length_map_relu(params: LengthMapParams) -> LengthTrajectory:
    if params.activation != ActivationKind.RELU:
        raise ArgumentError(f"length_map_relu 只支持 relu，收到 {params.activation.value}")
    q = params.sigma_w2 * params.q0 + params.sigma_b2
    values = [q]
    for _ in range(params.depth - 1):
        q = 0.5 * params.sigma_w2 * q + params.sigma_b2
        values.append(q)
    return LengthTrajectory(tuple(values))


def _gauss_expectation(activation: ActivationKind, q: float, nodes: int) -> float:
    """∫ Dz φ(√q z)²，概率论 Hermite 节点"""
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    phi = activate(activation, math.sqrt(q) * z)
    return float(np.dot(w, phi * phi) / math.sqrt(2.0 * math.pi))


def _run_general(params: LengthMapParams, nodes: int) -> Tuple[float, ...]:
    q = params.sigma_w2 * params.q0 + params.sigma_b2
    values = [q]
    for _ in range(params.depth - 1):
        q = params.sigma_w2 * _gauss_expectation(params.activation, q, nodes) + params.sigma_b2
        values.append(q)
    return tuple(values)


def length_map_general(params: LengthMapParams, nodes: int = QUADRATURE_NODES) -> LengthTrajectory:
    """Gauss–Hermite 数值积分求递推，并用 2 倍节点数检查收敛。"""
    coarse = _run_general(params, nodes)
    fine = _run_general(params, 2 * nodes)
    delta = max(abs(a - b) / max(1.0, abs(b)) for a, b in zip(coarse, fine))
    converged = bool(delta <= CONVERGENCE_TOL and all(math.isfinite(v) for v in coarse))
    if not converged:
        logger.warning(f"长度映射积分未收敛: 节点数 {nodes} -> {2 * nodes} 的最大相对变化 {delta:.3e}")
    return LengthTrajectory(coarse, converged, delta)


def empirical_length_trajectory(
    width: int,
    depth: int,
    sigma_w2: float = 2.0,
    sigma_b2: float = 0.0,
    n_nets: int = 10_000,
    q0: float = 1.0,
    seed: int = 0,
    activation: ActivationKind = ActivationKind.RELU,
    chunk_size: int = 250,
) -> LengthTrajectory:
    """
    在 n_nets 个随机网络上测量 q^l = (1/N^l) Σ (h^l_i)² 的平均值。

    输入维度等于 width，输入向量每个分量为 √q0，因此 q^0 = q0。
    """
    if width < 1 or depth < 1 or n_nets < 1:
        raise ArgumentError("width、depth、n_nets 都必须 >= 1")
    arch = Architecture(widths=(width,) * depth, d_in=width, last_layer_relu=True)
    spec = InitializerSpec(
        scheme=InitScheme.SYMMETRIC_NORMAL,
        sigma_w2=sigma_w2,
        sigma_b2=sigma_b2,
        bias_mode=BiasMode.SYMMETRIC if sigma_b2 > 0.0 else BiasMode.ZERO,
        seed=seed,
    )
    x0 = np.full((1, width), math.sqrt(q0))
    totals = np.zeros(depth)
    done, chunk = 0, 0
    while done < n_nets:
        m = min(chunk_size, n_nets - done)
        weights, biases = draw_parameter_batch(arch, spec, m, make_generator(seed, STREAM_LENGTH, chunk))
        _, layers = forward_parameter_batch(arch, weights, biases, x0, activation=activation, keep_layers=True)
        for l, h in enumerate(layers):
            totals[l] += float(np.sum(np.mean(h * h, axis=-1)))
        done += m
        chunk += 1
    logger.debug(f"经验长度映射: width={width}, depth={depth}, 网络数={n_nets}")
    return LengthTrajectory(tuple(float(v) for v in totals / n_nets))
