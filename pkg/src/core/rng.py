import zlib

import numpy as np

from src.model.errors import ConfigurationError


def stream(seed: int, tag: str) -> np.random.Generator:
    """
    由 (seed, tag) 派生一条独立的 Philox 随机流
    不同 tag 的流互不相关，同一 (seed, tag) 永远得到同一序列
    """
    if seed is None or int(seed) < 0:
        raise ConfigurationError(f"随机种子必须是非负整数: {seed}")
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), key])))
