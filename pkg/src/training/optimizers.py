"""
一阶优化器：sgd / sgd_nesterov / adagrad / rmsprop / adam。

优化器按名称注册，状态与参数都以新对象返回，不修改传入的数组。
所有状态槽都以 0 初始化 (adagrad 的累加器除外，取 initial_accumulator)，
因此梯度历史恒为零的参数更新也恒为零。
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Type, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.network import LayerArrays
from src.utils.errors import ShapeError, UnsupportedError

ArrayList = List[np.ndarray]


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "adam"
    lr: float = Field(default=1e-3, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-7, gt=0.0)
    initial_accumulator: float = Field(default=0.1, ge=0.0)


@dataclass
class OptimizerState:
    step: int = 0
    slots: Dict[str, ArrayList] = field(default_factory=dict)


class Optimizer(ABC):
    """优化器基类，子类实现 init_slots 与 update。"""

    name = "base"

    def __init__(self, config: OptimizerConfig):
        self.config = config

    def init_state(self, arrays: Sequence[np.ndarray]) -> OptimizerState:
        return OptimizerState(step=0, slots=self.init_slots(arrays))

    def init_slots(self, arrays: Sequence[np.ndarray]) -> Dict[str, ArrayList]:
        return {}

    @abstractmethod
    def update(self, state: OptimizerState, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> Tuple[OptimizerState, ArrayList]:
        pass


class SGD(Optimizer):
    name = "sgd"

    def update(self, state, arrays, grads):
        lr = self.config.lr
        return OptimizerState(state.step + 1, {}), [p - lr * g for p, g in zip(arrays, grads)]


class NesterovSGD(Optimizer):
    """v <- μ v - lr g;  p <- p + μ v - lr g"""

    name = "sgd_nesterov"

    def init_slots(self, arrays):
        return {"velocity": [np.zeros_like(p) for p in arrays]}

    def update(self, state, arrays, grads):
        lr, mu = self.config.lr, self.config.momentum
        velocity = [mu * v - lr * g for v, g in zip(state.slots["velocity"], grads)]
        new = [p + mu * v - lr * g for p, v, g in zip(arrays, velocity, grads)]
        return OptimizerState(state.step + 1, {"velocity": velocity}), new


class AdaGrad(Optimizer):
    name = "adagrad"

    def init_slots(self, arrays):
        return {"accumulator": [np.full_like(p, self.config.initial_accumulator) for p in arrays]}

    def update(self, state, arrays, grads):
        lr, eps = self.config.lr, self.config.epsilon
        acc = [a + g * g for a, g in zip(state.slots["accumulator"], grads)]
        new = [p - lr * g / (np.sqrt(a) + eps) for p, g, a in zip(arrays, grads, acc)]
        return OptimizerState(state.step + 1, {"accumulator": acc}), new


class RMSProp(Optimizer):
    name = "rmsprop"

    def init_slots(self, arrays):
        return {"mean_square": [np.zeros_like(p) for p in arrays]}

    def update(self, state, arrays, grads):
        lr, rho, eps = self.config.lr, self.config.rho, self.config.epsilon
        ms = [rho * s + (1.0 - rho) * g * g for s, g in zip(state.slots["mean_square"], grads)]
        new = [p - lr * g / (np.sqrt(s) + eps) for p, g, s in zip(arrays, grads, ms)]
        return OptimizerState(state.step + 1, {"mean_square": ms}), new


class Adam(Optimizer):
    name = "adam"

    def init_slots(self, arrays):
        return {"m": [np.zeros_like(p) for p in arrays], "v": [np.zeros_like(p) for p in arrays]}

    def update(self, state, arrays, grads):
        c = self.config
        t = state.step + 1
        m = [c.beta1 * mi + (1.0 - c.beta1) * g for mi, g in zip(state.slots["m"], grads)]
        v = [c.beta2 * vi + (1.0 - c.beta2) * g * g for vi, g in zip(state.slots["v"], grads)]
        corr1 = 1.0 - c.beta1**t
        corr2 = 1.0 - c.beta2**t
        new = [p - c.lr * (mi / corr1) / (np.sqrt(vi / corr2) + c.epsilon) for p, mi, vi in zip(arrays, m, v)]
        return OptimizerState(t, {"m": m, "v": v}), new


OPTIMIZERS: Dict[str, Type[Optimizer]] = {cls.name: cls for cls in (SGD, NesterovSGD, AdaGrad, RMSProp, Adam)}


def create_optimizer(config: OptimizerConfig) -> Optimizer:
    try:
        return OPTIMIZERS[config.name](config)
    except KeyError as e:
        raise UnsupportedError(f"不支持的优化器: {config.name!r} (可选: {', '.join(OPTIMIZERS)})") from e


Params = Union[LayerArrays, Sequence[np.ndarray]]


def _as_list(values: Params) -> ArrayList:
    if isinstance(values, LayerArrays):
        return values.arrays()
    return [np.asarray(v, dtype=np.float64) for v in values]


def optimizer_step(state: OptimizerState, params: Params, grads: Params, config: OptimizerConfig):
    """
    按 config 指定的规则做一次更新，返回 (新状态, 新参数)。

    params 可以是 Parameters 或数组列表，返回值与输入同类型。
    """
    arrays, grad_list = _as_list(params), _as_list(grads)
    if len(arrays) != len(grad_list) or any(p.shape != g.shape for p, g in zip(arrays, grad_list)):
        raise ShapeError("参数与梯度的形状不一致")
    optimizer = create_optimizer(config)
    if not state.slots and state.step == 0:
        state = optimizer.init_state(arrays)
    state, new = optimizer.update(state, arrays, grad_list)
    if isinstance(params, LayerArrays):
        return state, params.rebuild(new)
    return state, new
