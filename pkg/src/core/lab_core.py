import copy
from typing import Any, Dict, List, Optional

from src.core.pipeline_manager import Artifact, PipelineManager, PlotPanel
from src.utils.errors import ArtifactWriteError
from src.utils.logger import get_logger


class LabCore:
    """
    一次命令运行的共享上下文：解析后的配置、全局种子、输出目录和产物管道。

    命令和实验都通过 emit() 写出产物，不直接碰文件。
    """

    def __init__(
        self,
        config: Dict[str, Any],
        seed: int,
        output_dir: str = "output",
        pipeline_manager: Optional[PipelineManager] = None,
        samples: Optional[int] = None,
    ):
        self.logger = get_logger("LabCore")
        self.config = config
        self.seed = int(seed)
        self.output_dir = output_dir
        self.samples_override = samples
        self._pipeline_manager = pipeline_manager
        if pipeline_manager is None:
            self.logger.info("未配置管道管理器，产物不会写出")
        self.emitted: List[Artifact] = []

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.config.get(name, {}))

    # --- Monte Carlo 设置 ---

    def mc_samples(self, default: int) -> int:
        """--samples 优先，其次是调用方给的默认值 (通常来自实验配置)"""
        return int(self.samples_override) if self.samples_override else int(default)

    @property
    def mc_workers(self) -> int:
        return int(self.section("montecarlo").get("workers", 1))

    @property
    def mc_chunk_size(self) -> int:
        return int(self.section("montecarlo").get("chunk_size", 10_000))

    @property
    def train_workers(self) -> int:
        return int(self.section("training").get("workers", 1))

    def resolved_config(self, command: str, params: Dict[str, Any]) -> Dict[str, Any]:
        """嵌入到产物中的完整配置：根配置 + 本次命令的参数"""
        resolved = copy.deepcopy(self.config)
        resolved.pop("pipelines", None)
        resolved["command"] = command
        resolved["params"] = params
        resolved.setdefault("general", {})["seed"] = self.seed
        return resolved

    def make_artifact(
        self,
        name: str,
        command: str,
        params: Dict[str, Any],
        columns: Optional[List[str]] = None,
        rows: Optional[List[list]] = None,
        document: Optional[Dict[str, Any]] = None,
        panels: Optional[List[PlotPanel]] = None,
    ) -> Artifact:
        return Artifact(
            name=name,
            seed=self.seed,
            config=self.resolved_config(command, params),
            columns=list(columns or []),
            rows=list(rows or []),
            document=document,
            panels=list(panels or []),
            output_dir=self.output_dir,
        )

    def emit(self, artifact: Artifact) -> Artifact:
        """让产物经过管道链；任何管道失败都在整条链跑完后抛出 ArtifactWriteError。"""
        if self._pipeline_manager is not None:
            processed = self._pipeline_manager.process(artifact)
            if artifact.failures:
                raise ArtifactWriteError(f"产物 '{artifact.name}' 写出失败: " + "; ".join(artifact.failures))
            artifact = processed or artifact
        self.emitted.append(artifact)
        return artifact
