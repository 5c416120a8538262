from dataclasses import replace

import numpy as np

from src.core.layers import ActivationKind, NormalizationConfig, NormalizationMode, parse_normalization
from src.core.network import Network, Parameters
from src.utils.errors import ArgumentError
from src.utils.logger import get_logger

logger = get_logger("Normalization")


def apply_normalization(net: Network, mode, dropout_rate: float = 0.0, **bn_options) -> Network:
    """
    给普通网络加上归一化。

    - batchnorm: 每个带激活的层在激活前做 BN，gamma = 1、beta = 0，running 统计量取 (0, 1)
    - weightnorm: 权重重参数化为 g * v / ||v||，初始 g = ||v||，前向结果不变
    - selu: 激活函数换成 SELU (初始化应配合 lecun_normal，由 train 负责)
    - dropout: 训练时对隐藏层输出使用 inverted dropout
    """
    mode = parse_normalization(mode)
    if net.normalization.mode != NormalizationMode.NONE:
        raise ArgumentError(f"网络已经使用了 {net.normalization.mode.value}，不能重复应用归一化")
    if mode == NormalizationMode.NONE:
        return net

    config = NormalizationConfig(mode=mode, dropout_rate=dropout_rate if mode == NormalizationMode.DROPOUT else 0.0, **bn_options)
    p = net.params
    if mode == NormalizationMode.BATCHNORM:
        activated = [net.arch.has_activation(l) for l in range(1, net.depth + 1)]
        gamma = tuple(np.ones(n) if a else None for n, a in zip(net.arch.widths, activated))
        beta = tuple(np.zeros(n) if a else None for n, a in zip(net.arch.widths, activated))
        params = Parameters(weights=p.weights, biases=p.biases, bn_gamma=gamma, bn_beta=beta)
        net = Network(net.arch, params, net.activation, config)
        return net.with_running_stats(
            [np.zeros(n) if a else None for n, a in zip(net.arch.widths, activated)],
            [np.ones(n) if a else None for n, a in zip(net.arch.widths, activated)],
        )
    if mode == NormalizationMode.WEIGHTNORM:
        gains = tuple(np.linalg.norm(w, axis=1) for w in p.weights)
        params = Parameters(weights=tuple(w.copy() for w in p.weights), biases=p.biases, gains=gains)
        return Network(net.arch, params, net.activation, config)
    if mode == NormalizationMode.SELU:
        return replace(net, activation=ActivationKind.SELU, normalization=config)
    logger.debug(f"dropout rate = {dropout_rate}")
    return replace(net, normalization=config)
