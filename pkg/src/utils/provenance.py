import hashlib
import json
from typing import Any, Dict

__version__ = "0.1.0"

TOOL_NAME = "collapselab"


def canonical_json(obj: Any) -> str:
    """键排序、无多余空白的 JSON，用于计算配置哈希。"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)


def config_hash(config: Dict[str, Any]) -> str:
    """完整解析后配置的 sha256 前 16 位"""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def provenance_record(seed: int, config: Dict[str, Any]) -> Dict[str, Any]:
    """每个产物都要嵌入的 (seed, config hash, version) 三元组"""
    from src.core.rng import RNG_ALGORITHM

    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "seed": int(seed),
        "config_hash": config_hash(config),
        "rng": RNG_ALGORITHM,
    }
