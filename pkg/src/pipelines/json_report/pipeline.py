import json
from typing import Any, Dict, Optional

from src.core.pipeline_manager import Artifact, ArtifactPipeline
from src.utils.io import atomic_write


class JsonReportPipeline(ArtifactPipeline):
    """写出 JSON 文档 (TrainReport、CollapseReport、网络文件等)，并嵌入 provenance 字段。"""

    priority = 250

    def __init__(self, config: Dict[str, Any]):
        super().__init__(config)
        self.indent = int(self.config.get("indent", 2))
        self.embed_config = bool(self.config.get("embed_config", True))

    def process(self, artifact: Artifact) -> Optional[Artifact]:
        if artifact.document is None:
            return artifact
        doc = dict(artifact.document)
        doc["provenance"] = artifact.provenance
        if self.embed_config:
            doc.setdefault("resolved_config", artifact.config)
        text = json.dumps(doc, indent=self.indent, sort_keys=True, ensure_ascii=False, allow_nan=True) + "\n"
        path = atomic_write(artifact.path_for("json"), text)
        artifact.written["json"] = path
        self.logger.info(f"已写出 JSON: {path}")
        return artifact
