"""
按种子确定的训练循环：每一步从目标分布重新抽取一个 minibatch。
"""

import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.analysis.collapse import CollapseReport, classify_state, default_grid
from src.core.initializers import InitializerSpec, InitScheme, init_network, lsuv_rescale
from src.core.layers import NormalizationMode
from src.core.network import (
    Architecture,
    BatchTrace,
    Network,
    loss_and_gradients,
    network_from_dict,
    network_to_dict,
    predict,
)
from src.core.rng import STREAM_DATA, STREAM_DROPOUT, STREAM_TRAIN_BATCH, make_generator
from src.core.targets import get_target, sample_inputs, target_function
from src.training.losses import LossKind, loss_value
from src.training.normalization import apply_normalization
from src.training.optimizers import OptimizerConfig, create_optimizer
from src.utils.errors import ShapeError
from src.utils.logger import get_logger

logger = get_logger("Trainer")

TRAJECTORY_POINTS = 200


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    optimizer: OptimizerConfig = OptimizerConfig()
    steps: int = Field(default=20_000, ge=1)
    batch_size: int = Field(default=128, ge=1)
    loss: LossKind = LossKind.MSE
    normalization: NormalizationMode = NormalizationMode.NONE
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = 0
    log_every: int = Field(default=0, ge=0)
    classification_tol: float = Field(default=2e-2, gt=0.0)


class TrainReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    config: TrainConfig
    init: Optional[InitializerSpec] = None
    steps_run: int
    final_loss: Optional[float] = None
    final_batch_loss: Optional[float] = None
    loss_trajectory: List[Tuple[int, float]]
    diverged: bool = False
    divergence_step: Optional[int] = None
    collapse: CollapseReport
    network: dict

    def final_network(self) -> Network:
        return network_from_dict(self.network)


def hidden_architecture(depth: int, width: int, target_id: str, last_layer_relu: bool = False) -> Architecture:
    """depth 层的回归网络：depth-1 个宽为 width 的隐藏层加一个 d_out 维输出层。"""
    spec = get_target(target_id)
    return Architecture(widths=(width,) * (depth - 1) + (spec.d_out,), d_in=spec.d_in, last_layer_relu=last_layer_relu)


def _trajectory_stride(steps: int) -> int:
    return max(1, math.ceil(steps / TRAJECTORY_POINTS))


def _update_running_stats(net: Network, trace: BatchTrace) -> Network:
    momentum = net.normalization.bn_momentum
    means, variances = [], []
    for l in range(1, net.depth + 1):
        if not net.uses_batchnorm_at(l):
            means.append(None)
            variances.append(None)
            continue
        means.append(momentum * net.running_mean[l - 1] + (1.0 - momentum) * trace.bn_mean[l - 1])
        variances.append(momentum * net.running_var[l - 1] + (1.0 - momentum) * trace.bn_var[l - 1])
    return net.with_running_stats(means, variances)


def grid_loss(net: Network, target_id: str, loss: LossKind = LossKind.MSE) -> Optional[float]:
    """eval 模式下在默认网格上的损失，非有限值返回 None。"""
    X = default_grid(get_target(target_id).d_in)
    value = loss_value(loss, predict(net, X), target_function(target_id)(X))
    return value if math.isfinite(value) else None


def _all_finite(value: float, arrays) -> bool:
    return math.isfinite(value) and all(bool(np.all(np.isfinite(a))) for a in arrays)


def train_network(net: Network, target_id: str, config: TrainConfig, init: Optional[InitializerSpec] = None) -> TrainReport:
    """从给定网络开始训练，返回报告 (含最终网络与塌缩分类)。发散不抛异常，只记录在报告里。"""
    spec = get_target(target_id)
    if net.arch.d_in != spec.d_in or net.arch.d_out != spec.d_out:
        raise ShapeError(f"网络输入输出维度 ({net.arch.d_in}, {net.arch.d_out}) 与目标 {target_id} 不一致")

    fn = target_function(target_id)
    batch_gen = make_generator(config.seed, STREAM_TRAIN_BATCH)
    dropout_gen = make_generator(config.seed, STREAM_DROPOUT)
    optimizer = create_optimizer(config.optimizer)
    state = optimizer.init_state(net.params.arrays())
    stride = _trajectory_stride(config.steps)

    trajectory: List[Tuple[int, float]] = []
    diverged, divergence_step, batch_loss, steps_run = False, None, None, 0
    logger.info(
        f"开始训练: target={target_id}, widths={list(net.arch.widths)}, opt={config.optimizer.name}, "
        f"lr={config.optimizer.lr}, steps={config.steps}, norm={net.normalization.mode.value}, seed={config.seed}"
    )
    for step in range(1, config.steps + 1):
        X = sample_inputs(target_id, config.batch_size, batch_gen)
        value, grads, trace = loss_and_gradients(net, X, fn(X), config.loss, training=True, rng=dropout_gen)
        if not _all_finite(value, grads.arrays()):
            diverged, divergence_step = True, step
            logger.warning(f"训练在第 {step} 步发散 (loss={value})，提前结束")
            break
        state, new_arrays = optimizer.update(state, net.params.arrays(), grads.arrays())
        net = net.with_params(net.params.rebuild(new_arrays))
        if net.normalization.uses_batchnorm:
            net = _update_running_stats(net, trace)
        batch_loss, steps_run = value, step
        if step % stride == 0 or step == config.steps:
            trajectory.append((step, value))
        if config.log_every and step % config.log_every == 0:
            logger.debug(f"step {step}: batch loss = {value:.6g}")

    final = None if diverged else grid_loss(net, target_id, config.loss)
    # 发散那一步没有更新参数，net 是最后一个有限状态
    collapse = classify_state(net, target_id, loss=config.loss, tol=config.classification_tol)
    logger.info(f"训练结束: steps={steps_run}, final_loss={final}, diverged={diverged}, collapse={collapse.kind.value}")
    return TrainReport(
        target_id=target_id,
        config=config,
        init=init,
        steps_run=steps_run,
        final_loss=final,
        final_batch_loss=batch_loss,
        loss_trajectory=trajectory,
        diverged=diverged,
        divergence_step=divergence_step,
        collapse=collapse,
        network=network_to_dict(net),
    )


def build_initial_network(
    arch: Architecture, spec: InitializerSpec, target_id: str, config: TrainConfig
) -> Tuple[Network, InitializerSpec]:
    """按训练配置构造初始网络。selu 模式强制 lecun_normal；lsuv 用一个探测 batch 做逐层缩放。"""
    if config.normalization == NormalizationMode.SELU and spec.scheme != InitScheme.LECUN_NORMAL:
        logger.info(f"selu 模式使用 lecun_normal 初始化 (忽略 {spec.scheme.value})")
        spec = spec.model_copy(update={"scheme": InitScheme.LECUN_NORMAL})
    net = init_network(arch, spec)
    if spec.scheme == InitScheme.LSUV:
        probe = sample_inputs(target_id, config.batch_size, make_generator(config.seed, STREAM_DATA))
        net = lsuv_rescale(net, probe)
    return apply_normalization(net, config.normalization, dropout_rate=config.dropout_rate), spec


def train(arch: Architecture, spec: InitializerSpec, target_id: str, config: TrainConfig) -> TrainReport:
    net, spec = build_initial_network(arch, spec, target_id, config)
    return train_network(net, target_id, config, init=spec)


class TrainJob(BaseModel):
    """一次独立训练运行的全部输入，可以被进程池 pickle。"""

    model_config = ConfigDict(frozen=True)

    arch: Architecture
    init: InitializerSpec
    target_id: str
    config: TrainConfig


def train_config_from_section(section: dict, **overrides) -> TrainConfig:
    """由 [training] 配置段和显式参数构造 TrainConfig，显式参数优先。"""
    merged = {**section, **{k: v for k, v in overrides.items() if v is not None}}
    optimizer = OptimizerConfig(
        name=merged.pop("optimizer", "adam"),
        lr=merged.pop("lr", 1e-3),
        **{k: merged.pop(k) for k in ("momentum", "rho", "beta1", "beta2", "epsilon", "initial_accumulator") if k in merged},
    )
    fields = set(TrainConfig.model_fields) - {"optimizer"}
    return TrainConfig(optimizer=optimizer, **{k: v for k, v in merged.items() if k in fields})


def _run_job(job: TrainJob) -> TrainReport:
    return train(job.arch, job.init, job.target_id, job.config)


def train_many(jobs: Sequence[TrainJob], workers: int = 1) -> List[TrainReport]:
    """按顺序返回每个 job 的报告；每个 job 只依赖自己的种子，结果与 workers 无关。"""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    logger.info(f"用 {workers} 个进程并行训练 {len(jobs)} 个网络")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_job, jobs))
