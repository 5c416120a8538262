"""
精确与闭式分析：宽度 2 网络的 16 状态吸收马尔可夫链、塌缩概率上界、安全深度公式。

宽度 2、无偏置、d_in = 1 的网络在输入的两条射线 (x > 0 与 x < 0) 上都是线性的，
每一层在两条射线上的激活模式各有 4 种 (两个神经元都非零 / 仅第一个 / 仅第二个 / 都为零)，
组合成 16 个状态。状态编号 = 4 * 正射线模式 + 负射线模式 + 1。状态 16 (两条射线上都为零) 是吸收态。
"""

import math
from typing import List, Sequence, Tuple

import numpy as np
import sympy as sp

from src.utils.errors import ArgumentError

N_CASES = 16
ABSORBING_CASE = 16

# 单条射线上的激活模式
PATTERN_BOTH = 0
PATTERN_FIRST = 1
PATTERN_SECOND = 2
PATTERN_NONE = 3

_R = sp.Rational

# 转移矩阵的行 (j = 1..16)，列为当前状态 i = 1..16
_ROW_A = [_R(17, 96), _R(7, 48), _R(7, 48), 0, _R(7, 48), _R(1, 4), _R(1, 16), 0, _R(7, 48), _R(1, 16), _R(1, 4), 0, 0, 0, 0, 0]
_ROW_B = [_R(1, 32), _R(1, 24), _R(1, 24), 0, _R(1, 24), 0, _R(1, 16), 0, _R(1, 24), _R(1, 16), 0, 0, 0, 0, 0, 0]
_ROW_C = [_R(1, 96), _R(1, 48), _R(1, 48), _R(1, 4), _R(1, 48), 0, _R(1, 16), _R(1, 4), _R(1, 48), _R(1, 16), 0, _R(1, 4), 0, 0, 0, 0]
_ROW_D = [_R(1, 96), _R(1, 48), _R(1, 48), 0, _R(1, 48), 0, _R(1, 16), 0, _R(1, 48), _R(1, 16), 0, 0, 0, 0, 0, 0]
_ROW_E = [_R(1, 32), _R(1, 24), _R(1, 24), _R(1, 4), _R(1, 24), 0, _R(1, 16), _R(1, 4), _R(1, 24), _R(1, 16), 0, _R(1, 4), 0, 0, 0, 0]
_ROW_F = [_R(1, 96), _R(1, 48), _R(1, 48), 0, _R(1, 48), 0, _R(1, 16), 0, _R(1, 48), _R(1, 16), 0, 0, _R(1, 4), _R(1, 4), _R(1, 4), 0]
_ROW_G = [_R(1, 32), _R(1, 24), _R(1, 24), 0, _R(1, 24), 0, _R(1, 16), 0, _R(1, 24), _R(1, 16), 0, 0, _R(1, 4), _R(1, 4), _R(1, 4), 0]
_ROW_H = [
    _R(17, 96), _R(7, 48), _R(7, 48), _R(1, 4), _R(7, 48), _R(1, 4), _R(1, 16), _R(1, 4),
    _R(7, 48), _R(1, 16), _R(1, 4), _R(1, 4), _R(1, 4), _R(1, 4), _R(1, 4), 1,
]  # fmt: skip

_ROWS = [
    _ROW_A, _ROW_B, _ROW_B, _ROW_C,
    _ROW_B, _ROW_A, _ROW_D, _ROW_E,
    _ROW_B, _ROW_D, _ROW_A, _ROW_E,
    _ROW_F, _ROW_G, _ROW_G, _ROW_H,
]  # fmt: skip


def transition_matrix() -> sp.Matrix:
    """16x16 有理数矩阵，元素 (j, i) 为当前状态 i 时下一层状态为 j 的概率 (列随机)。"""
    return sp.Matrix([[sp.Rational(v) for v in row] for row in _ROWS])


def initial_distribution() -> sp.Matrix:
    """第一隐藏层的状态分布 (16x1)"""
    pi = [sp.Integer(0)] * N_CASES
    for case in (4, 7, 10, 13):
        pi[case - 1] = sp.Rational(1, 4)
    return sp.Matrix(pi)


def case_index(positive_pattern: int, negative_pattern: int) -> int:
    """由两条射线上的激活模式 (0..3) 得到状态编号 1..16。"""
    for p in (positive_pattern, negative_pattern):
        if p not in (PATTERN_BOTH, PATTERN_FIRST, PATTERN_SECOND, PATTERN_NONE):
            raise ArgumentError(f"激活模式必须在 0..3 之间: {p}")
    return 4 * positive_pattern + negative_pattern + 1


def _pattern(x: np.ndarray) -> np.ndarray:
    first = x[..., 0] != 0.0
    second = x[..., 1] != 0.0
    return np.where(first & second, PATTERN_BOTH, np.where(first, PATTERN_FIRST, np.where(second, PATTERN_SECOND, PATTERN_NONE)))


def classify_width2_case(x_pos, x_neg):
    """
    由宽度 2 的层在输入 +1 与 -1 处的激活值判定状态编号。

    支持批量：x_pos、x_neg 的最后一维为 2，返回同形状 (去掉最后一维) 的整数数组；
    单个向量返回 int。
    """
    x_pos = np.asarray(x_pos, dtype=np.float64)
    x_neg = np.asarray(x_neg, dtype=np.float64)
    if x_pos.shape[-1] != 2 or x_neg.shape != x_pos.shape:
        raise ArgumentError("classify_width2_case 需要最后一维为 2 且形状相同的两个数组")
    cases = 4 * _pattern(x_pos) + _pattern(x_neg) + 1
    return int(cases) if cases.ndim == 0 else cases


def _distribution_at(L: int) -> sp.Matrix:
    """π^L = P^{L-1} π^1，逐层做矩阵向量乘法"""
    P = transition_matrix()
    pi = initial_distribution()
    for _ in range(L - 1):
        pi = P * pi
    return pi


def exact_constant_trajectory(L_max: int, last_layer_relu: bool = True) -> List[sp.Rational]:
    """L = 1..L_max 时网络初始化为常函数的精确概率。"""
    if L_max < 1:
        raise ArgumentError("L 必须 >= 1")
    P = transition_matrix()
    pi = initial_distribution()
    last = [pi[ABSORBING_CASE - 1]]  # last[k] = (π^{k+1})_16
    for _ in range(L_max - 1):
        pi = P * pi
        last.append(pi[ABSORBING_CASE - 1])
    if last_layer_relu:
        return last
    # 最后一层为仿射层时，输出为常数当且仅当倒数第二层处于吸收态
    return [sp.Integer(0)] + last[: L_max - 1]


def exact_constant_probability(L: int, last_layer_relu: bool = True) -> sp.Rational:
    if L < 1:
        raise ArgumentError("L 必须 >= 1")
    if last_layer_relu:
        return _distribution_at(L)[ABSORBING_CASE - 1]
    if L == 1:
        return sp.Integer(0)
    return _distribution_at(L - 1)[ABSORBING_CASE - 1]


def _activated_widths(widths: Sequence[int], last_layer_relu: bool) -> Tuple[int, ...]:
    widths = tuple(int(w) for w in widths)
    if not widths or any(w < 1 for w in widths):
        raise ArgumentError(f"层宽必须非空且全部 >= 1: {widths}")
    return widths if last_layer_relu else widths[:-1]


def bias_output_probability(widths: Sequence[int], last_layer_relu: bool) -> float:
    """
    偏置非零时，对固定输入输出恰好等于最后一层偏置 (无末层 ReLU) 或为零 (末层 ReLU) 的概率。

    末层 ReLU: (1/2)^{N^L}；否则 (1/2)^{N^{L-1}}，单层且无末层 ReLU 时为 0。
    """
    activated = _activated_widths(widths, last_layer_relu)
    if not activated:
        return 0.0
    return 0.5 ** activated[-1]


def collapse_probability_bound(widths: Sequence[int], last_layer_relu: bool = True, biases_nonzero: bool = False) -> float:
    """
    初始化时塌缩概率。零偏置时为 1 - Π(1 - (1/2)^{N^l})，乘积遍历带 ReLU 的层；
    偏置非零时见 bias_output_probability。
    """
    if biases_nonzero:
        return bias_output_probability(widths, last_layer_relu)
    activated = _activated_widths(widths, last_layer_relu)
    log_survive = math.fsum(math.log1p(-(0.5**w)) for w in activated)
    return -math.expm1(log_survive)


def max_safe_depth(width: int, p: float) -> int:
    """floor(ln(1-p) / ln(1-(1/2)^width))：塌缩概率上界不超过 p 的最大深度"""
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"p 必须在 (0, 1) 内: {p}")
    if width < 1:
        raise ArgumentError(f"width 必须 >= 1: {width}")
    ratio = math.log1p(-p) / math.log1p(-(0.5**width))
    # 比值恰为整数时消除舍入误差
    return int(math.floor(ratio + 1e-12))


def safe_region(widths: Sequence[int], ps: Sequence[float]) -> List[Tuple[int, float, int]]:
    """(width, p, max_depth) 行，按 p 再按 width 排序"""
    return [(int(w), float(p), max_safe_depth(int(w), float(p))) for p in ps for w in widths]


def rational_to_float(value) -> float:
    return float(sp.Rational(value))
