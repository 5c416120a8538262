"""
塌缩状态的检测与分类：零层搜索、整体 / 局部塌缩判定、梯度消失验证以及目标统计量。
"""

import math
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import integrate, ndimage

from src.core.network import Network, backward, forward_batch
from src.core.targets import KINKS, SQRT3, get_target, target_function
from src.training.losses import LossKind
from src.utils.errors import ArgumentError
from src.utils.logger import get_logger

logger = get_logger("CollapseDetect")

DEFAULT_TOL = 2e-2
DEFAULT_GRID_POINTS_1D = 2048
DEFAULT_GRID_POINTS_2D = 64
MEDIAN_GRID_1D = 1 << 21
MEDIAN_GRID_2D = 2048
# 包含对角方向的 8 邻域
_NEIGHBOURS = np.ones((3, 3), dtype=bool)

Model = Union[Network, Callable[[np.ndarray], np.ndarray]]


class CollapseKind(str, Enum):
    FITTED = "fitted"
    FULL_COLLAPSE = "full_collapse"
    PARTIAL_COLLAPSE = "partial_collapse"
    OTHER = "other"


class CollapseRegion(BaseModel):
    """局部塌缩区域：区间 (1 维) 或包围盒 (2 维) 及其上的常数"""

    model_config = ConfigDict(frozen=True)

    lo: List[float]
    hi: List[float]
    n_points: int
    constant: List[float]
    conditional_target: List[float]


class CollapseReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: CollapseKind
    zero_layer: Optional[int] = None
    constant_value: Optional[List[float]] = None
    reference_value: Optional[List[float]] = None
    constant_matches: Optional[bool] = None
    regions: List[CollapseRegion] = []
    max_abs_error: float
    tol: float
    max_grad_norm_prefix: Optional[float] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == CollapseKind.FULL_COLLAPSE and self.constant_value is None:
            raise ValueError("full_collapse 必须给出 constant_value")
        if self.kind == CollapseKind.PARTIAL_COLLAPSE and not self.regions:
            raise ValueError("partial_collapse 必须给出至少一个区域")
        return self


class TargetStatistics(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    mean: List[float]
    median_set: List[Tuple[float, float]]


class GradientReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_layer_max_abs: List[float]
    zero_layer: Optional[int] = None
    prefix_exact_zero: Optional[bool] = None
    all_zero: bool
    at_empirical_mean: bool
    partial_mean: bool


# --- 网格与模型求值 ---


def default_grid(d_in: int, points: Optional[int] = None) -> np.ndarray:
    """d_in = 1 时 [-√3, √3] 上 2048 个等距点；d_in = 2 时 64 x 64 张量网格 (x1 为慢变维)。"""
    if d_in == 1:
        return np.linspace(-SQRT3, SQRT3, points or DEFAULT_GRID_POINTS_1D)[:, None]
    if d_in == 2:
        k = points or DEFAULT_GRID_POINTS_2D
        axis = np.linspace(-SQRT3, SQRT3, k)
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([g1.ravel(), g2.ravel()], axis=1)
    raise ArgumentError(f"默认网格只支持 d_in = 1 或 2，收到 {d_in}")


def model_output(model: Model, X: np.ndarray) -> np.ndarray:
    if isinstance(model, Network):
        return forward_batch(model, X).output
    out = np.asarray(model(X), dtype=np.float64)
    return out.reshape(X.shape[0], -1)


# --- 零层 ---


def detect_zero_layer(net: Network, grid: Optional[np.ndarray] = None) -> Optional[int]:
    """在网格的每个点上 x^l 都严格为零的最小层号 l；不存在时返回 None。"""
    X = default_grid(net.arch.d_in) if grid is None else np.asarray(grid, dtype=np.float64)
    trace = forward_batch(net, X)
    zero_layers = [l for l in range(1, net.depth + 1) if not np.any(trace.x[l - 1] != 0.0)]
    if not zero_layers:
        return None
    first = zero_layers[0]
    if net.arch.bias_free and zero_layers != list(range(first, net.depth + 1)):
        # 无偏置网络的零层之后必然全为零层
        logger.warning(f"无偏置网络第 {first} 层为零层，但后续层并非全为零: {zero_layers}")
    return first


# --- 目标统计量 ---


def _mean_1d(fn, j: int, a: float, b: float, kinks) -> float:
    points = [k for k in kinks if a < k < b] or None
    value, _ = integrate.quad(lambda t: float(fn(np.array([[t]]))[0, j]), a, b, points=points, limit=400)
    return value / (b - a)


def _grid_values(target_id: str, d_in: int) -> np.ndarray:
    fn = target_function(target_id)
    if d_in == 1:
        n = MEDIAN_GRID_1D
        # 中点网格，正负两半各占一半
        x = -SQRT3 + (np.arange(n) + 0.5) * (2 * SQRT3 / n)
        return fn(x[:, None])
    n = MEDIAN_GRID_2D
    axis = -SQRT3 + (np.arange(n) + 0.5) * (2 * SQRT3 / n)
    out = []
    for a in axis:
        block = np.stack([np.full(n, a), axis], axis=1)
        out.append(fn(block))
    return np.concatenate(out, axis=0)


@lru_cache(maxsize=None)
def target_statistics(target_id: str) -> TargetStatistics:
    """
    均值用自适应数值积分 (scipy quad / nquad) 求；中位数集合由密集中点网格上的次序统计量给出：
    第 n/2 与 n/2+1 个次序统计量分别是 CDF 越过 1/2 的左右端点，CDF 在 1/2 处平坦时二者分开。
    """
    spec = get_target(target_id)
    fn = target_function(target_id)
    if spec.d_in == 1:
        means = [_mean_1d(fn, j, spec.low, spec.high, KINKS[target_id]) for j in range(spec.d_out)]
    else:
        area = (spec.high - spec.low) ** 2
        means = []
        for j in range(spec.d_out):
            sign = 1.0 if j == 0 else -1.0

            def inner_opts(v, _s=sign):
                # |u + v| 的折点在 u = -v，|u - v| 在 u = v
                return {"points": [-_s * v], "limit": 200}

            value, _ = integrate.nquad(
                lambda u, v, _j=j: float(fn(np.array([[u, v]]))[0, _j]),
                [[spec.low, spec.high], [spec.low, spec.high]],
                opts=[inner_opts, {"limit": 200}],
            )
            means.append(value / area)

    values = _grid_values(target_id, spec.d_in)
    n = values.shape[0]
    median_set = []
    for j in range(spec.d_out):
        part = np.partition(values[:, j], [n // 2 - 1, n // 2])
        median_set.append((float(part[n // 2 - 1]), float(part[n // 2])))
    return TargetStatistics(target_id=target_id, mean=[float(m) for m in means], median_set=median_set)


# --- 分类 ---


def _reference_constant(stats: TargetStatistics, loss: LossKind) -> List[float]:
    if loss == LossKind.MSE:
        return list(stats.mean)
    return [0.5 * (lo + hi) for lo, hi in stats.median_set]


def _constant_matches(c: np.ndarray, stats: TargetStatistics, loss: LossKind, tol: float) -> bool:
    if loss == LossKind.MSE:
        return bool(np.all(np.abs(c - np.asarray(stats.mean)) <= tol))
    return all(lo - tol <= cj <= hi + tol for cj, (lo, hi) in zip(c, stats.median_set))


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """mask 中连续 True 的 [start, end) 区间"""
    runs, start = [], None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _regional_target(values: np.ndarray, loss: LossKind) -> np.ndarray:
    if loss == LossKind.MSE:
        return values.mean(axis=0)
    return np.median(values, axis=0)


def _partial_regions_1d(
    X: np.ndarray, N: np.ndarray, Y: np.ndarray, target_id: str, loss: LossKind, tol: float
) -> Optional[List[CollapseRegion]]:
    x = X[:, 0]
    order = np.argsort(x, kind="stable")
    x, N, Y = x[order], N[order], Y[order]
    slope = np.max(np.abs(np.diff(N, axis=0)), axis=1) / np.diff(x)
    flat_cells = slope < tol / 10.0
    deviating = np.max(np.abs(N - Y), axis=1) >= tol

    fn = target_function(target_id)
    covered = np.zeros(len(x), dtype=bool)
    regions = []
    for a, b in _runs(flat_cells):
        # 单元 a..b-1 平坦 => 网格点 a..b 构成平台
        idx = np.arange(a, b + 1)
        if len(idx) < 3 or not np.any(deviating[idx]):
            continue
        c = N[idx].mean(axis=0)
        if loss == LossKind.MSE:
            cond = np.array([_mean_1d(fn, j, x[a], x[b], KINKS[target_id]) for j in range(Y.shape[1])])
        else:
            cond = _regional_target(Y[idx], loss)
        if np.any(np.abs(c - cond) >= tol):
            return None
        covered[max(a - 1, 0) : min(b + 2, len(x))] = True
        regions.append(
            CollapseRegion(
                lo=[float(x[a])], hi=[float(x[b])], n_points=len(idx), constant=c.tolist(), conditional_target=cond.tolist()
            )
        )
    if not regions:
        return None
    if np.any(np.abs(N[~covered] - Y[~covered]) >= tol):
        return None
    return regions


def _partial_regions_2d(
    X: np.ndarray, N: np.ndarray, Y: np.ndarray, loss: LossKind, tol: float
) -> Optional[List[CollapseRegion]]:
    k = int(round(math.sqrt(X.shape[0])))
    if k * k != X.shape[0]:
        return None
    # 要求网格按 default_grid 的 (x1 慢变, x2 快变) 顺序排列
    Xg = X.reshape(k, k, 2)
    Ng = N.reshape(k, k, -1)
    Yg = Y.reshape(k, k, -1)
    h = Xg[1, 0, 0] - Xg[0, 0, 0]
    if h <= 0:
        return None
    d1 = np.max(np.abs(np.diff(Ng, axis=0)), axis=2) / h
    d2 = np.max(np.abs(np.diff(Ng, axis=1)), axis=2) / h
    # 网格点处的最大单侧差分
    grad = np.zeros((k, k))
    grad[:-1, :] = np.maximum(grad[:-1, :], d1)
    grad[1:, :] = np.maximum(grad[1:, :], d1)
    grad[:, :-1] = np.maximum(grad[:, :-1], d2)
    grad[:, 1:] = np.maximum(grad[:, 1:], d2)
    deviating = np.max(np.abs(Ng - Yg), axis=2) >= tol
    candidate = (grad < tol / 10.0) & deviating
    labels, count = ndimage.label(candidate)
    regions, covered = [], np.zeros((k, k), dtype=bool)
    for lab in range(1, count + 1):
        comp = labels == lab
        if comp.sum() < 2:
            continue
        c = Ng[comp].mean(axis=0)
        cond = _regional_target(Yg[comp], loss)
        if np.any(np.abs(c - cond) >= tol):
            return None
        covered |= ndimage.binary_dilation(comp, structure=_NEIGHBOURS)
        pts = Xg[comp]
        regions.append(
            CollapseRegion(
                lo=pts.min(axis=0).tolist(),
                hi=pts.max(axis=0).tolist(),
                n_points=int(comp.sum()),
                constant=c.tolist(),
                conditional_target=cond.tolist(),
            )
        )
    if not regions:
        return None
    if np.any(np.abs(Ng[~covered] - Yg[~covered]) >= tol):
        return None
    return regions


def classify_state(
    model: Model,
    target_id: str,
    grid: Optional[np.ndarray] = None,
    loss: LossKind = LossKind.MSE,
    tol: float = DEFAULT_TOL,
    stats: Optional[TargetStatistics] = None,
) -> CollapseReport:
    """
    按 fitted -> full_collapse -> partial_collapse -> other 的顺序判定。

    tol 相对于网格上目标值的范围；model 可以是 Network 或任意 (n, d_in) -> (n, d_out) 的函数。
    """
    if tol <= 0:
        raise ArgumentError("tol 必须 > 0")
    spec = get_target(target_id)
    X = default_grid(spec.d_in) if grid is None else np.asarray(grid, dtype=np.float64)
    N = model_output(model, X)
    Y = target_function(target_id)(X)
    if N.shape != Y.shape:
        raise ArgumentError(f"模型输出形状 {N.shape} 与目标 {target_id} 的形状 {Y.shape} 不一致")

    scale = float(np.max(Y.max(axis=0) - Y.min(axis=0))) or 1.0
    tol_abs = tol * scale
    max_err = float(np.max(np.abs(N - Y))) if np.all(np.isfinite(N)) else float("inf")

    zero_layer, grad_prefix = None, None
    if isinstance(model, Network):
        zero_layer = detect_zero_layer(model, X)
        if np.all(np.isfinite(N)):
            grads = backward(model, X, Y, loss)
            per_layer = grads.max_abs_per_layer()
            upto = zero_layer if zero_layer is not None else len(per_layer)
            grad_prefix = float(max(per_layer[:upto]))

    common = dict(zero_layer=zero_layer, max_abs_error=max_err, tol=tol_abs, max_grad_norm_prefix=grad_prefix)
    if max_err < tol_abs:
        return CollapseReport(kind=CollapseKind.FITTED, **common)

    if not np.all(np.isfinite(N)):
        return CollapseReport(kind=CollapseKind.OTHER, **common)

    stats = stats or target_statistics(target_id)
    if float(np.max(N.max(axis=0) - N.min(axis=0))) < tol_abs:
        c = N.mean(axis=0)
        return CollapseReport(
            kind=CollapseKind.FULL_COLLAPSE,
            constant_value=c.tolist(),
            reference_value=_reference_constant(stats, loss),
            constant_matches=_constant_matches(c, stats, loss, tol_abs),
            **common,
        )

    if spec.d_in == 1:
        regions = _partial_regions_1d(X, N, Y, target_id, loss, tol_abs)
    else:
        regions = _partial_regions_2d(X, N, Y, loss, tol_abs)
    if regions:
        return CollapseReport(kind=CollapseKind.PARTIAL_COLLAPSE, regions=regions, **common)
    return CollapseReport(kind=CollapseKind.OTHER, **common)


# --- 梯度消失 ---


def verify_vanishing_gradients(
    net: Network, X, Y, loss: LossKind = LossKind.MSE, partial_tol: float = 1e-6
) -> GradientReport:
    """
    数据集上逐层的最大梯度绝对值，以及三个标志：
    零层之前 (含零层) 的梯度是否严格为零；全部梯度是否严格为零；
    输出是否为数据集经验均值 (mse)；输出是否满足局部均值条件。
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ArgumentError("数据集不能为空")
    grads = backward(net, X, Y, loss)
    per_layer = grads.max_abs_per_layer()
    zero_layer = detect_zero_layer(net, X)
    prefix = None
    if zero_layer is not None:
        prefix = all(grads.is_zero_layer(l) for l in range(1, zero_layer + 1))

    N = forward_batch(net, X).output
    Yarr = np.asarray(Y, dtype=np.float64).reshape(N.shape)
    constant = bool(np.all(N == N[0]))
    at_mean = loss == LossKind.MSE and constant and bool(np.allclose(N[0], Yarr.mean(axis=0), rtol=0.0, atol=1e-12))

    # 局部均值：偏离目标的点按输出值分组，每组的输出等于该组目标的均值
    partial = False
    if loss == LossKind.MSE and not constant:
        dev = np.max(np.abs(N - Yarr), axis=1) > partial_tol
        if np.any(dev):
            values = np.round(N[dev] / partial_tol) * partial_tol
            _, inverse = np.unique(values, axis=0, return_inverse=True)
            inverse = np.asarray(inverse).reshape(-1)
            partial = all(
                np.allclose(N[dev][inverse == g].mean(axis=0), Yarr[dev][inverse == g].mean(axis=0), atol=partial_tol)
                for g in range(inverse.max() + 1)
            )
    return GradientReport(
        per_layer_max_abs=per_layer,
        zero_layer=zero_layer,
        prefix_exact_zero=prefix,
        all_zero=all(v == 0.0 for v in per_layer),
        at_empirical_mean=at_mean,
        partial_mean=partial,
    )
