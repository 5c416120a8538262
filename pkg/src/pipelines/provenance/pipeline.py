from typing import Any, Dict, Optional

from src.core.pipeline_manager import Artifact, ArtifactPipeline
from src.utils.provenance import provenance_record


class ProvenancePipeline(ArtifactPipeline):
    """给产物盖上 (tool, version, seed, config_hash, rng) 戳，后续写出的每个文件都会嵌入它。"""

    priority = 100

    def __init__(self, config: Dict[str, Any]):
        super().__init__(config)
        self.extra_fields: Dict[str, Any] = dict(self.config.get("extra_fields", {}))

    def process(self, artifact: Artifact) -> Optional[Artifact]:
        record = provenance_record(artifact.seed, artifact.config)
        record.update(self.extra_fields)
        artifact.provenance = record
        self.logger.debug(f"产物 '{artifact.name}': seed={record['seed']}, config_hash={record['config_hash']}")
        return artifact
