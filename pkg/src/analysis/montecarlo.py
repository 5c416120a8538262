"""
随机初始化下零输出 / 零函数 / 输出等于末层偏置的概率的 Monte Carlo 估计。

样本按固定大小 chunk_size 分块，第 k 块使用 (seed, STREAM_MONTECARLO, *cell, k) 派生的生成器。
因此无论用几个进程、以什么顺序计算，同样的参数得到逐位相同的结果。
零的判定使用精确相等：零偏置时所有预激活 <= 0 的 ReLU 输出严格为 0.0。
"""

from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.stats import binomtest

from src.core.initializers import BiasMode, InitializerSpec, draw_parameter_batch
from src.core.layers import ActivationKind
from src.core.network import Architecture, forward_parameter_batch
from src.core.rng import STREAM_DIRECTIONS, STREAM_MONTECARLO, make_generator
from src.utils.errors import ArgumentError
from src.utils.logger import get_logger

logger = get_logger("MonteCarlo")

DEFAULT_CHUNK_SIZE = 10_000
# 单个分块中参数数组的浮点数上限
CHUNK_FLOAT_BUDGET = 4_000_000
N_DIRECTIONS = 64
# 方向集合固定，不随用户种子变化
_DIRECTION_SEED = 0


class MCEvent(str, Enum):
    ZERO_AT_POINT = "point"
    ZERO_FUNCTION = "function"
    BIAS_OUTPUT = "bias"


class MCEstimate(BaseModel):
    """p_hat 及其 95% Wilson 区间"""

    model_config = ConfigDict(frozen=True)

    p_hat: float
    n: int
    successes: int
    ci_low: float
    ci_high: float
    seed: int
    event: MCEvent = MCEvent.ZERO_FUNCTION

    @model_validator(mode="after")
    def _check_interval(self):
        if not (0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0):
            raise ValueError(f"Wilson 区间不合法: {self.ci_low} <= {self.p_hat} <= {self.ci_high}")
        return self


def wilson_estimate(successes: int, n: int, seed: int, event: MCEvent = MCEvent.ZERO_FUNCTION) -> MCEstimate:
    if n < 1:
        raise ArgumentError("样本数 n 必须 >= 1")
    ci = binomtest(int(successes), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    p_hat = successes / n
    # Wilson 区间总是包含 p_hat，这里只消除端点的浮点误差
    return MCEstimate(
        p_hat=p_hat,
        n=n,
        successes=int(successes),
        ci_low=min(float(ci.low), p_hat),
        ci_high=max(float(ci.high), p_hat),
        seed=seed,
        event=event,
    )


def fixed_directions(d_in: int, count: int = N_DIRECTIONS) -> np.ndarray:
    """d_in >= 2 时零函数判定使用的单位方向"""
    z = make_generator(_DIRECTION_SEED, STREAM_DIRECTIONS, d_in).standard_normal((count, d_in))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _probe_inputs(event: MCEvent, arch: Architecture, point: Optional[np.ndarray]) -> np.ndarray:
    if event == MCEvent.ZERO_FUNCTION:
        if arch.d_in == 1:
            # 无偏置网络在两条射线上各自线性，检查 +1 与 -1 即可
            return np.array([[1.0], [-1.0]])
        return fixed_directions(arch.d_in)
    return np.asarray(point, dtype=np.float64).reshape(1, arch.d_in)


def _count_chunk(task) -> int:
    """单个分块的事件计数。模块级函数，便于进程池 pickle。"""
    event, arch_doc, spec_doc, probe, seed, cell, chunk, m = task
    arch = Architecture.model_validate(arch_doc)
    spec = InitializerSpec.model_validate(spec_doc)
    weights, biases = draw_parameter_batch(arch, spec, m, make_generator(seed, STREAM_MONTECARLO, *cell, chunk))
    out, _ = forward_parameter_batch(arch, weights, biases, probe, activation=ActivationKind.RELU)
    if event == MCEvent.BIAS_OUTPUT and not arch.last_layer_relu:
        hit = np.all(out == biases[-1][:, None, :], axis=(1, 2))
    else:
        hit = np.all(out == 0.0, axis=(1, 2))
    return int(np.count_nonzero(hit))


def _effective_chunk(arch: Architecture, chunk_size: int) -> int:
    """大网络时缩小分块以限制内存；只依赖结构与 chunk_size，结果仍然与调度无关。"""
    per_net = sum(a * b + a for a, b in zip(arch.layer_sizes[1:], arch.layer_sizes[:-1]))
    return max(1, min(chunk_size, CHUNK_FLOAT_BUDGET // per_net))


def _chunk_tasks(event, arch, spec, probe, n, seed, cell, chunk_size) -> List[tuple]:
    chunk_size = _effective_chunk(arch, chunk_size)
    arch_doc = arch.model_dump(mode="json")
    spec_doc = spec.model_dump(mode="json")
    tasks, done, chunk = [], 0, 0
    while done < n:
        m = min(chunk_size, n - done)
        tasks.append((event, arch_doc, spec_doc, probe, seed, tuple(cell), chunk, m))
        done += m
        chunk += 1
    return tasks


def _run_tasks(tasks: Sequence[tuple], workers: int) -> List[int]:
    if workers <= 1 or len(tasks) <= 1:
        return [_count_chunk(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_count_chunk, tasks))


def _estimate(
    event: MCEvent,
    arch: Architecture,
    spec: InitializerSpec,
    point: Optional[np.ndarray],
    n: int,
    seed: int,
    cell: Tuple[int, ...],
    chunk_size: int,
    workers: int,
) -> MCEstimate:
    if n < 1:
        raise ArgumentError("样本数 n 必须 >= 1")
    if chunk_size < 1:
        raise ArgumentError("chunk_size 必须 >= 1")
    probe = _probe_inputs(event, arch, point)
    counts = _run_tasks(_chunk_tasks(event, arch, spec, probe, n, seed, cell, chunk_size), workers)
    est = wilson_estimate(sum(counts), n, seed, event)
    logger.debug(
        f"{event.value}: widths={list(arch.widths)}, scheme={spec.scheme.value}, "
        f"p_hat={est.p_hat:.6f} [{est.ci_low:.6f}, {est.ci_high:.6f}] (n={n})"
    )
    return est


def _zero_biases(arch: Architecture, spec: InitializerSpec) -> bool:
    return arch.bias_free or spec.bias_mode == BiasMode.ZERO


def estimate_zero_at_point(
    arch: Architecture,
    spec: InitializerSpec,
    point,
    n: int,
    seed: int = 0,
    cell: Tuple[int, ...] = (),
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> MCEstimate:
    """对固定非零输入，输出恰为零向量的频率。"""
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.shape[0] != arch.d_in:
        raise ArgumentError(f"输入长度 {point.shape[0]} 与 d_in={arch.d_in} 不一致")
    if np.all(point == 0.0) and _zero_biases(arch, spec):
        raise ArgumentError("零输入且偏置全为零时输出恒为 0，估计没有意义")
    return _estimate(MCEvent.ZERO_AT_POINT, arch, spec, point, n, seed, cell, chunk_size, workers)


def estimate_zero_function(
    arch: Architecture,
    spec: InitializerSpec,
    n: int,
    seed: int = 0,
    cell: Tuple[int, ...] = (),
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> MCEstimate:
    """
    无偏置网络在整个定义域上为零函数的频率。

    d_in = 1 时由 ±1 两点精确判定；d_in >= 2 时在 64 个固定单位方向上判定 (近似)。
    """
    if not _zero_biases(arch, spec):
        raise ArgumentError("estimate_zero_function 只适用于无偏置网络 (bias_free 或 bias_mode=zero)")
    return _estimate(MCEvent.ZERO_FUNCTION, arch, spec, None, n, seed, cell, chunk_size, workers)


def estimate_bias_output(
    arch: Architecture,
    spec: InitializerSpec,
    point,
    n: int,
    seed: int = 0,
    cell: Tuple[int, ...] = (),
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> MCEstimate:
    """偏置非零时，输出等于末层偏置 (末层 ReLU 时为零) 的频率。"""
    if _zero_biases(arch, spec):
        raise ArgumentError("estimate_bias_output 需要非零偏置 (bias_mode=symmetric)")
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.shape[0] != arch.d_in:
        raise ArgumentError(f"输入长度 {point.shape[0]} 与 d_in={arch.d_in} 不一致")
    return _estimate(MCEvent.BIAS_OUTPUT, arch, spec, point, n, seed, cell, chunk_size, workers)


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int
    depth: int
    scheme: str
    estimate: MCEstimate

    def as_csv_row(self) -> list:
        e = self.estimate
        return [self.width, self.depth, self.scheme, e.n, e.p_hat, e.ci_low, e.ci_high, e.seed]


SWEEP_COLUMNS = ["width", "depth", "scheme", "n", "p_hat", "ci_low", "ci_high", "seed"]


def sweep(
    widths: Iterable[int],
    depths: Iterable[int],
    specs: Iterable[InitializerSpec],
    n: int,
    seed: int = 0,
    last_layer_relu: bool = True,
    event: MCEvent = MCEvent.ZERO_FUNCTION,
    point=(1.0,),
    d_in: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> List[SweepRow]:
    """
    对 (width, depth, spec) 网格的每个单元给出一个估计。

    单元 (width, depth, 第 k 个 spec) 的随机流路径为 (width, depth, k)，与网格的其它部分无关。
    """
    widths, depths, specs = list(widths), list(depths), list(specs)
    if not widths or not depths or not specs:
        raise ArgumentError("sweep 的网格不能为空")
    event = MCEvent(event)
    probe_point = None if event == MCEvent.ZERO_FUNCTION else np.asarray(point, dtype=np.float64).reshape(-1)

    cells, tasks, spans = [], [], []
    for w in widths:
        for d in depths:
            for k, spec in enumerate(specs):
                arch = Architecture(
                    widths=(int(w),) * int(d), d_in=d_in, last_layer_relu=last_layer_relu, bias_free=event == MCEvent.ZERO_FUNCTION
                )
                if event == MCEvent.ZERO_AT_POINT and np.all(probe_point == 0.0) and _zero_biases(arch, spec):
                    raise ArgumentError("零输入且偏置全为零时输出恒为 0，估计没有意义")
                probe = _probe_inputs(event, arch, probe_point)
                cell_tasks = _chunk_tasks(event, arch, spec, probe, n, seed, (int(w), int(d), k), chunk_size)
                spans.append((len(tasks), len(tasks) + len(cell_tasks)))
                tasks.extend(cell_tasks)
                cells.append((int(w), int(d), spec))

    logger.info(f"开始 sweep: {len(cells)} 个单元, 每单元 n={n}, 共 {len(tasks)} 个分块, workers={workers}")
    counts = _run_tasks(tasks, workers)
    rows = []
    for (w, d, spec), (a, b) in zip(cells, spans):
        rows.append(SweepRow(width=w, depth=d, scheme=spec.scheme.value, estimate=wilson_estimate(sum(counts[a:b]), n, seed, event)))
    logger.info("sweep 完成。")
    return rows
