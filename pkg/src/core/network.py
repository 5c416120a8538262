"""
前馈网络的表示、前向计算 (完整 trace)、反向传播以及有限差分梯度。

约定：
- 第 l 层 (1..L) 的权重形状为 (N^l, N^{l-1})，批量输入形状为 (n, d_in)。
- 隐藏层总是带激活；最后一层仅当 last_layer_relu 为 True 时带激活。
- BN 放在激活之前，只作用于带激活的层；dropout 只作用于隐藏层输出。
- 网络对象构造后不可变，训练一步产生新的 Parameters。
"""

import json
import re
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from src.core.layers import (
    ActivationKind,
    NormalizationConfig,
    activate,
    activation_derivative,
    batchnorm_backward_eval,
    batchnorm_backward_train,
    batchnorm_eval,
    batchnorm_train,
    dropout_mask,
    parse_activation,
    weightnorm_backward,
    weightnorm_effective,
)
from src.core.rng import STREAM_DROPOUT, make_generator
from src.training.losses import LossKind, loss_gradient, loss_value
from src.utils.errors import ArgumentError, ShapeError, UnsupportedError
from src.utils.io import atomic_write

NETWORK_FORMAT = "collapselab.network/v1"


class Architecture(BaseModel):
    """层宽 N^1..N^L、输入维度 d_in 以及两个结构开关。"""

    model_config = ConfigDict(frozen=True)

    widths: Tuple[int, ...]
    d_in: int = 1
    last_layer_relu: bool = False
    bias_free: bool = False

    @field_validator("widths")
    @classmethod
    def _check_widths(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(v) == 0:
            raise ValueError("widths 不能为空")
        if any(int(w) < 1 for w in v):
            raise ValueError(f"所有层宽必须 >= 1: {v}")
        return tuple(int(w) for w in v)

    @field_validator("d_in")
    @classmethod
    def _check_d_in(cls, v: int) -> int:
        if v < 1:
            raise ValueError("d_in 必须 >= 1")
        return v

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.d_in,) + self.widths

    def weight_shape(self, layer: int) -> Tuple[int, int]:
        return self.layer_sizes[layer], self.layer_sizes[layer - 1]

    def has_activation(self, layer: int) -> bool:
        return layer < self.depth or self.last_layer_relu


def parse_widths(text: str) -> Tuple[int, ...]:
    """解析 '3x10' (宽 3、10 层) 或 '2,3,4' 形式的层宽描述。"""
    text = text.strip()
    m = re.fullmatch(r"(\d+)\s*[xX]\s*(\d+)", text)
    try:
        if m:
            return (int(m.group(1)),) * int(m.group(2))
        widths = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as e:
        raise ArgumentError(f"无法解析层宽描述: {text!r}") from e
    if not widths:
        raise ArgumentError(f"无法解析层宽描述: {text!r}")
    return widths


_FIELDS = ("weights", "biases", "gains", "bn_gamma", "bn_beta")


@dataclass(frozen=True)
class LayerArrays:
    """按层存放的数组集合。空 tuple 表示该字段不存在，元素为 None 表示该层没有此项。"""

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    gains: Tuple[Optional[np.ndarray], ...] = ()
    bn_gamma: Tuple[Optional[np.ndarray], ...] = ()
    bn_beta: Tuple[Optional[np.ndarray], ...] = ()

    @property
    def depth(self) -> int:
        return len(self.weights)

    def named_arrays(self) -> List[Tuple[str, int, np.ndarray]]:
        """固定顺序的 (字段名, 层号, 数组) 列表，优化器与有限差分都依赖这个顺序。"""
        out = []
        for name in _FIELDS:
            for index, arr in enumerate(getattr(self, name)):
                if arr is not None:
                    out.append((name, index + 1, arr))
        return out

    def arrays(self) -> List[np.ndarray]:
        return [a for _, _, a in self.named_arrays()]

    def rebuild(self, arrays: Sequence[np.ndarray]):
        """用同样顺序的新数组替换全部项，返回同类型的新对象。"""
        it = iter(arrays)
        updates = {}
        for name in _FIELDS:
            current = getattr(self, name)
            updates[name] = tuple(None if a is None else next(it) for a in current)
        return replace(self, **updates)

    def layer_arrays(self, layer: int) -> List[np.ndarray]:
        return [a for _, idx, a in self.named_arrays() if idx == layer]


@dataclass(frozen=True)
class Parameters(LayerArrays):
    """网络参数。weightnorm 模式下 weights 存放方向向量 v，gains 存放 g。"""

    def copy(self) -> "Parameters":
        return self.rebuild([a.copy() for a in self.arrays()])


@dataclass(frozen=True)
class GradientSet(LayerArrays):
    """与 Parameters 形状一致的梯度"""

    def max_abs_per_layer(self) -> List[float]:
        return [max((float(np.max(np.abs(a))) if a.size else 0.0) for a in self.layer_arrays(l)) for l in range(1, self.depth + 1)]

    def is_zero_layer(self, layer: int) -> bool:
        return all(bool(np.all(a == 0.0)) for a in self.layer_arrays(layer))


@dataclass(frozen=True)
class Network:
    arch: Architecture
    params: Parameters
    activation: ActivationKind = ActivationKind.RELU
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    running_mean: Tuple[Optional[np.ndarray], ...] = ()
    running_var: Tuple[Optional[np.ndarray], ...] = ()

    def __post_init__(self):
        arch, params = self.arch, self.params
        if params.depth != arch.depth or len(params.biases) != arch.depth:
            raise ShapeError(f"参数层数 {params.depth} 与结构层数 {arch.depth} 不一致")
        for l in range(1, arch.depth + 1):
            w, b = params.weights[l - 1], params.biases[l - 1]
            if w.shape != arch.weight_shape(l):
                raise ShapeError(f"第 {l} 层权重形状 {w.shape} 应为 {arch.weight_shape(l)}")
            if b.shape != (arch.widths[l - 1],):
                raise ShapeError(f"第 {l} 层偏置形状 {b.shape} 应为 ({arch.widths[l - 1]},)")
        if arch.bias_free and any(np.any(b != 0.0) for b in params.biases):
            raise ArgumentError("bias_free 网络的所有偏置必须严格为 0")
        if self.normalization.uses_weightnorm and len(params.gains) != arch.depth:
            raise ShapeError("weightnorm 网络需要每层的 gains")
        if self.normalization.uses_batchnorm and len(params.bn_gamma) != arch.depth:
            raise ShapeError("batchnorm 网络需要每层的 bn_gamma / bn_beta")

    @property
    def depth(self) -> int:
        return self.arch.depth

    def layer_activation(self, layer: int) -> ActivationKind:
        return self.activation if self.arch.has_activation(layer) else ActivationKind.IDENTITY

    def effective_weight(self, layer: int) -> np.ndarray:
        v = self.params.weights[layer - 1]
        if self.normalization.uses_weightnorm:
            return weightnorm_effective(v, self.params.gains[layer - 1])
        return v

    def uses_batchnorm_at(self, layer: int) -> bool:
        return self.normalization.uses_batchnorm and self.arch.has_activation(layer)

    def with_params(self, params: Parameters) -> "Network":
        return replace(self, params=params)

    def with_running_stats(self, mean, var) -> "Network":
        return replace(self, running_mean=tuple(mean), running_var=tuple(var))


@dataclass
class BatchTrace:
    """批量前向 trace。h/z/x 的下标 l-1 对应第 l 层；z 是 BN 之后、激活之前的值。"""

    inputs: np.ndarray
    h: List[np.ndarray]
    z: List[np.ndarray]
    x: List[np.ndarray]
    masks: List[Optional[np.ndarray]]
    x_hat: List[Optional[np.ndarray]]
    bn_mean: List[Optional[np.ndarray]]
    bn_var: List[Optional[np.ndarray]]
    training: bool

    @property
    def output(self) -> np.ndarray:
        return self.x[-1]

    def layer_input(self, layer: int) -> np.ndarray:
        return self.inputs if layer == 1 else self.x[layer - 2]


@dataclass(frozen=True)
class ForwardTrace:
    """单个输入的 trace"""

    h: Tuple[np.ndarray, ...]
    x: Tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.x[-1]


def _as_batch(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.arch.d_in:
        raise ShapeError(f"输入形状 {X.shape} 与 d_in={net.arch.d_in} 不一致 (应为 (n, d_in))")
    return X


def affine(net: Network, layer: int, x_prev: np.ndarray) -> np.ndarray:
    """h^l = x^{l-1} W^T + b，前向与 trace 复算共用"""
    return x_prev @ net.effective_weight(layer).T + net.params.biases[layer - 1]


def forward_batch(
    net: Network, X, training: bool = False, rng: Optional[np.random.Generator] = None
) -> BatchTrace:
    """
    批量前向计算。

    training=True 时 BN 使用 batch 统计量、dropout 生效 (需要 rng，缺省时用种子 0 的 dropout 流)；
    否则 BN 使用 running 统计量、dropout 关闭。
    """
    X = _as_batch(net, X)
    norm = net.normalization
    if training and norm.uses_batchnorm and X.shape[0] == 0:
        raise ArgumentError("训练模式的 batchnorm 需要非空 batch")
    if training and norm.uses_dropout and norm.dropout_rate > 0.0 and rng is None:
        rng = make_generator(0, STREAM_DROPOUT)

    trace = BatchTrace(X, [], [], [], [], [], [], [], training)
    x_prev = X
    for l in range(1, net.depth + 1):
        h = affine(net, l, x_prev)
        z, x_hat, mean, var, mask = h, None, None, None, None
        if net.uses_batchnorm_at(l):
            gamma, beta = net.params.bn_gamma[l - 1], net.params.bn_beta[l - 1]
            if training:
                z, x_hat, mean, var = batchnorm_train(h, gamma, beta, norm.bn_eps)
            else:
                z, x_hat = batchnorm_eval(h, gamma, beta, net.running_mean[l - 1], net.running_var[l - 1], norm.bn_eps)
        x = activate(net.layer_activation(l), z)
        if training and norm.uses_dropout and l < net.depth and norm.dropout_rate > 0.0:
            mask = dropout_mask(rng, x.shape, norm.dropout_rate)
            x = x * mask
        trace.h.append(h)
        trace.z.append(z)
        trace.x.append(x)
        trace.masks.append(mask)
        trace.x_hat.append(x_hat)
        trace.bn_mean.append(mean)
        trace.bn_var.append(var)
        x_prev = x
    return trace


def forward(net: Network, x) -> ForwardTrace:
    """单个输入的前向计算，返回每层的 h^l 与 x^l。"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.arch.d_in:
        raise ShapeError(f"输入长度 {x.shape} 与 d_in={net.arch.d_in} 不一致")
    trace = forward_batch(net, x[None, :])
    return ForwardTrace(tuple(h[0] for h in trace.h), tuple(v[0] for v in trace.x))


def predict(net: Network, X) -> np.ndarray:
    return forward_batch(net, X).output


def _check_targets(net: Network, X: np.ndarray, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1 and net.arch.d_out == 1:
        Y = Y[:, None]
    if Y.shape != (X.shape[0], net.arch.d_out):
        raise ShapeError(f"目标形状 {Y.shape} 应为 ({X.shape[0]}, {net.arch.d_out})")
    return Y


def loss_and_gradients(
    net: Network,
    X,
    Y,
    loss: LossKind = LossKind.MSE,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, GradientSet, BatchTrace]:
    """batch 平均损失及其对全部参数的梯度 (反向模式)。"""
    X = _as_batch(net, X)
    if X.shape[0] == 0:
        raise ArgumentError("batch 不能为空")
    Y = _check_targets(net, X, Y)
    norm = net.normalization
    trace = forward_batch(net, X, training=training, rng=rng)
    value = loss_value(loss, trace.output, Y)

    L = net.depth
    d_weights: List[np.ndarray] = [None] * L  # type: ignore[list-item]
    d_biases: List[np.ndarray] = [None] * L  # type: ignore[list-item]
    d_gains: List[Optional[np.ndarray]] = [None] * L
    d_gamma: List[Optional[np.ndarray]] = [None] * L
    d_beta: List[Optional[np.ndarray]] = [None] * L

    delta = loss_gradient(loss, trace.output, Y)
    for l in range(L, 0, -1):
        if trace.masks[l - 1] is not None:
            delta = delta * trace.masks[l - 1]
        delta = delta * activation_derivative(net.layer_activation(l), trace.z[l - 1])
        if net.uses_batchnorm_at(l):
            gamma = net.params.bn_gamma[l - 1]
            if training:
                delta, d_gamma[l - 1], d_beta[l - 1] = batchnorm_backward_train(
                    delta, trace.x_hat[l - 1], gamma, trace.bn_var[l - 1], norm.bn_eps
                )
            else:
                delta, d_gamma[l - 1], d_beta[l - 1] = batchnorm_backward_eval(
                    delta, trace.x_hat[l - 1], gamma, net.running_var[l - 1], norm.bn_eps
                )
        w_eff = net.effective_weight(l)
        d_w = delta.T @ trace.layer_input(l)
        d_biases[l - 1] = delta.sum(axis=0)
        if norm.uses_weightnorm:
            d_weights[l - 1], d_gains[l - 1] = weightnorm_backward(net.params.weights[l - 1], net.params.gains[l - 1], d_w)
        else:
            d_weights[l - 1] = d_w
        if l > 1:
            delta = delta @ w_eff

    if net.arch.bias_free:
        d_biases = [np.zeros_like(b) for b in d_biases]

    p = net.params
    grads = GradientSet(
        weights=tuple(d_weights),
        biases=tuple(d_biases),
        gains=tuple(d_gains) if p.gains else (),
        bn_gamma=tuple(d_gamma) if p.bn_gamma else (),
        bn_beta=tuple(d_beta) if p.bn_beta else (),
    )
    return value, grads, trace


def backward(
    net: Network,
    X,
    Y,
    loss: LossKind = LossKind.MSE,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> GradientSet:
    return loss_and_gradients(net, X, Y, loss, training=training, rng=rng)[1]


def batch_loss(
    net: Network, X, Y, loss: LossKind = LossKind.MSE, training: bool = False, rng_seed: Optional[int] = None
) -> float:
    X = _as_batch(net, X)
    Y = _check_targets(net, X, Y)
    rng = make_generator(rng_seed, STREAM_DROPOUT) if rng_seed is not None else None
    return loss_value(loss, forward_batch(net, X, training=training, rng=rng).output, Y)


def finite_diff_grad(
    net: Network,
    X,
    Y,
    loss: LossKind = LossKind.MSE,
    eps: float = 1e-6,
    training: bool = False,
    rng_seed: Optional[int] = None,
) -> GradientSet:
    """
    中心差分 (L(θ+eps) - L(θ-eps)) / (2 eps) 逐项估计梯度。

    rng_seed 给定时每次求值都重建同一个 dropout 流，保证两侧使用相同的掩码。
    """
    if eps <= 0:
        raise ArgumentError("eps 必须 > 0")
    X = _as_batch(net, X)
    if X.shape[0] == 0:
        raise ArgumentError("batch 不能为空")
    Y = _check_targets(net, X, Y)

    base = [a.copy() for a in net.params.arrays()]
    estimates = []
    for k, arr in enumerate(base):
        est = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus = [a.copy() for a in base]
            minus = [a.copy() for a in base]
            plus[k][idx] += eps
            minus[k][idx] -= eps
            f_plus = batch_loss(net.with_params(net.params.rebuild(plus)), X, Y, loss, training, rng_seed)
            f_minus = batch_loss(net.with_params(net.params.rebuild(minus)), X, Y, loss, training, rng_seed)
            est[idx] = (f_plus - f_minus) / (2.0 * eps)
        estimates.append(est)
    names = [name for name, _, _ in net.params.named_arrays()]
    if net.arch.bias_free:
        estimates = [np.zeros_like(e) if n == "biases" else e for n, e in zip(names, estimates)]
    return GradientSet(**_regroup(net.params, estimates))


def _regroup(template: LayerArrays, arrays: Sequence[np.ndarray]) -> dict:
    rebuilt = template.rebuild(arrays)
    return {name: getattr(rebuilt, name) for name in _FIELDS}


# --- Monte Carlo 用的批量参数前向 ---


def forward_parameter_batch(
    arch: Architecture,
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    X: np.ndarray,
    activation: ActivationKind = ActivationKind.RELU,
    keep_layers: bool = False,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    同时计算 m 个网络在 k 个输入上的输出。

    weights[l-1] 形状为 (m, N^l, N^{l-1})，biases[l-1] 为 (m, N^l)，X 为 (k, d_in)。
    返回 (输出 (m, k, d_out), 各层 h^l 列表 (keep_layers=True 时))。
    """
    X = np.asarray(X, dtype=np.float64)
    m = weights[0].shape[0]
    x = np.broadcast_to(X, (m,) + X.shape)
    layers: List[np.ndarray] = []
    for l in range(1, arch.depth + 1):
        h = x @ np.swapaxes(weights[l - 1], 1, 2) + biases[l - 1][:, None, :]
        if keep_layers:
            layers.append(h)
        x = activate(activation if arch.has_activation(l) else ActivationKind.IDENTITY, h)
    return x, layers


# --- 构造与参考网络 ---


def build_network(
    arch: Architecture,
    weights: Sequence,
    biases: Optional[Sequence] = None,
    activation=ActivationKind.RELU,
    normalization: Optional[NormalizationConfig] = None,
) -> Network:
    """由普通列表/数组构造网络，biases 缺省为全零。"""
    w = tuple(np.array(a, dtype=np.float64).reshape(arch.weight_shape(l + 1)) for l, a in enumerate(weights))
    if biases is None:
        b = tuple(np.zeros(n) for n in arch.widths)
    else:
        b = tuple(np.array(a, dtype=np.float64).reshape(arch.widths[l]) for l, a in enumerate(biases))
    return Network(
        arch=arch,
        params=Parameters(weights=w, biases=b),
        activation=parse_activation(activation),
        normalization=normalization or NormalizationConfig(),
    )


def reference_network(target_id: str) -> Network:
    """|x| = ReLU(x) + ReLU(-x) 的精确构造 (1 维与 2 维)"""
    if target_id == "abs1d":
        arch = Architecture(widths=(2, 1), d_in=1)
        return build_network(arch, [[[1.0], [-1.0]], [[1.0, 1.0]]])
    if target_id == "abs2d":
        arch = Architecture(widths=(4, 2), d_in=2)
        w1 = [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]
        w2 = [[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]
        return build_network(arch, [w1, w2])
    raise UnsupportedError(f"没有 '{target_id}' 的参考网络 (支持 abs1d, abs2d)")


# --- JSON 序列化 ---


def _opt(values: Tuple[Optional[np.ndarray], ...], index: int):
    if not values or values[index] is None:
        return None
    return values[index].tolist()


def network_to_dict(net: Network) -> dict:
    layers = []
    for i in range(net.depth):
        layers.append(
            {
                "weight": net.params.weights[i].tolist(),
                "bias": net.params.biases[i].tolist(),
                "gain": _opt(net.params.gains, i),
                "bn_gamma": _opt(net.params.bn_gamma, i),
                "bn_beta": _opt(net.params.bn_beta, i),
                "running_mean": _opt(net.running_mean, i),
                "running_var": _opt(net.running_var, i),
            }
        )
    return {
        "format": NETWORK_FORMAT,
        "architecture": net.arch.model_dump(mode="json"),
        "activation": net.activation.value,
        "normalization": net.normalization.model_dump(mode="json"),
        "layers": layers,
    }


def network_from_dict(doc: dict) -> Network:
    try:
        if doc.get("format") != NETWORK_FORMAT:
            raise ArgumentError(f"未知的网络文件格式: {doc.get('format')!r}")
        arch = Architecture.model_validate(doc["architecture"])
        normalization = NormalizationConfig.model_validate(doc.get("normalization", {}))
        layers = doc["layers"]

        def column(key: str):
            values = [layer.get(key) for layer in layers]
            if all(v is None for v in values):
                return ()
            return tuple(None if v is None else np.asarray(v, dtype=np.float64) for v in values)

        params = Parameters(
            weights=tuple(np.asarray(l["weight"], dtype=np.float64).reshape(arch.weight_shape(i + 1)) for i, l in enumerate(layers)),
            biases=tuple(np.asarray(l["bias"], dtype=np.float64).reshape(arch.widths[i]) for i, l in enumerate(layers)),
            gains=column("gain"),
            bn_gamma=column("bn_gamma"),
            bn_beta=column("bn_beta"),
        )
        return Network(
            arch=arch,
            params=params,
            activation=parse_activation(doc.get("activation", "relu")),
            normalization=normalization,
            running_mean=column("running_mean"),
            running_var=column("running_var"),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ArgumentError | ShapeError):
            raise
        raise ArgumentError(f"网络文件内容无效: {e}") from e


def save_network(net: Network, path: str) -> str:
    return atomic_write(path, json.dumps(network_to_dict(net), indent=2, sort_keys=True) + "\n")


def load_network(path: str) -> Network:
    with open(path, "r", encoding="utf-8") as f:
        return network_from_dict(json.load(f))
