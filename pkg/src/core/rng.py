"""
随机数来源。

所有随机性都来自 numpy 的 Philox (计数器型、可拆分) 生成器。子流通过
``SeedSequence(entropy=seed, spawn_key=path)`` 派生，path 是一组固定的整数，
因此任意并行划分下每个任务拿到的随机数都相同。
"""

from typing import Tuple

import numpy as np

# 算法标识写入每个产物的 provenance，变更派生方式时必须同时修改版本号
RNG_ALGORITHM = "philox4x64-numpy-seedsequence-v1"

_MASK64 = (1 << 64) - 1

# 子流编号。顺序固定，不要复用。
STREAM_INIT = 1
STREAM_DATA = 2
STREAM_TRAIN_BATCH = 3
STREAM_DROPOUT = 4
STREAM_MONTECARLO = 5
STREAM_DIRECTIONS = 6
STREAM_LENGTH = 7
STREAM_RUNS = 8


def normalize_seed(seed: int) -> int:
    """把任意 Python 整数映射到 64 位无符号种子"""
    return int(seed) & _MASK64


def make_generator(seed: int, *path: int) -> np.random.Generator:
    """根据 (seed, path) 构造独立的 Philox 生成器。"""
    ss = np.random.SeedSequence(entropy=normalize_seed(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


class SymmetricStream:
    """
    对称分布的抽样流。

    flip=True 时每一次正态、均匀和 Rademacher 抽样都取相反数，
    对称初始化在相同种子下因此得到恰好取反的参数。
    """

    def __init__(self, generator: np.random.Generator, flip: bool = False):
        self.generator = generator
        self.flip = flip
        self._sign = -1.0 if flip else 1.0

    @classmethod
    def from_seed(cls, seed: int, *path: int, flip: bool = False) -> "SymmetricStream":
        return cls(make_generator(seed, *path), flip=flip)

    def normal(self, std: float, size: Tuple[int, ...]) -> np.ndarray:
        return self._sign * std * self.generator.standard_normal(size)

    def uniform(self, bound: float, size: Tuple[int, ...]) -> np.ndarray:
        # [-bound, bound)
        return self._sign * bound * (2.0 * self.generator.random(size) - 1.0)

    def rademacher(self, scale: float, size: Tuple[int, ...]) -> np.ndarray:
        bits = self.generator.integers(0, 2, size=size, dtype=np.int8)
        return self._sign * scale * (2.0 * bits.astype(np.float64) - 1.0)

    def standard_normal(self, size: Tuple[int, ...]) -> np.ndarray:
        return self._sign * self.generator.standard_normal(size)


def spawn_seeds(seed: int, count: int, *path: int) -> Tuple[int, ...]:
    """为 count 个独立运行派生整数种子 (例如 50 次训练实验)。"""
    ss = np.random.SeedSequence(entropy=normalize_seed(seed), spawn_key=tuple(int(p) for p in path))
    words = ss.generate_state(2 * count, dtype=np.uint32).astype(np.uint64)
    return tuple(int((words[2 * i] << np.uint64(32)) | words[2 * i + 1]) for i in range(count))
