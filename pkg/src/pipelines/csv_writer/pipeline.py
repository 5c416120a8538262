import csv
import io
from typing import Any, Dict, Optional

from src.core.pipeline_manager import Artifact, ArtifactPipeline
from src.utils.io import atomic_write


def format_cell(value: Any) -> str:
    """浮点数用 repr (最短可往返表示)，保证同一结果写出的字节一致"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def render_csv(artifact: Artifact, header_prefix: str = "# ") -> str:
    buf = io.StringIO()
    for key in sorted(artifact.provenance):
        buf.write(f"{header_prefix}{key}: {artifact.provenance[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(artifact.columns)
    for row in artifact.rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


class CsvWriterPipeline(ArtifactPipeline):
    """把产物的数值行写成 CSV (规范输出)，文件头是 # 开头的溯源注释。"""

    priority = 200

    def __init__(self, config: Dict[str, Any]):
        super().__init__(config)
        self.header_prefix = self.config.get("header_prefix", "# ")

    def process(self, artifact: Artifact) -> Optional[Artifact]:
        if not artifact.columns:
            return artifact
        if any(len(row) != len(artifact.columns) for row in artifact.rows):
            self.logger.error(f"产物 '{artifact.name}' 的行长度与列数 {len(artifact.columns)} 不一致，跳过 CSV。")
            return artifact
        path = atomic_write(artifact.path_for("csv"), render_csv(artifact, self.header_prefix))
        artifact.written["csv"] = path
        self.logger.info(f"已写出 CSV: {path} ({len(artifact.rows)} 行)")
        return artifact
