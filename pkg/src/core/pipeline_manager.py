import importlib
import inspect
import os
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Type

from src.utils.config import load_component_specific_config, merge_component_configs
from src.utils.logger import get_logger

_REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# 没有配置 [pipelines] 时使用的默认管道链
DEFAULT_PIPELINES: Dict[str, Dict[str, Any]] = {
    "provenance": {"priority": 100},
    "csv_writer": {"priority": 200},
    "json_report": {"priority": 250},
    "svg_plot": {"priority": 300},
}


@dataclass
class PlotSeries:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    style: str = "line"  # line | points | dashed | step


@dataclass
class PlotPanel:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    series: List[PlotSeries] = field(default_factory=list)
    logy: bool = False


@dataclass
class Artifact:
    """
    一次运行产生的产物。

    rows/columns 是规范的数值结果 (CSV)，document 是 JSON 文档 (例如 TrainReport)，
    panels 只描述如何画图，画图永远不会修改 rows。
    """

    name: str
    seed: int
    config: Dict[str, Any]
    columns: List[str] = field(default_factory=list)
    rows: List[list] = field(default_factory=list)
    document: Optional[Dict[str, Any]] = None
    panels: List[PlotPanel] = field(default_factory=list)
    output_dir: str = "output"
    provenance: Dict[str, Any] = field(default_factory=dict)
    written: Dict[str, str] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)

    def path_for(self, extension: str) -> str:
        return os.path.join(self.output_dir, f"{self.name}.{extension}")


class ArtifactPipeline(ABC):
    """
    产物管道基类。产物按优先级依次经过每个管道，数值越小越先执行。
    """

    priority = 1000

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.logger = get_logger(self.__class__.__name__)

    @abstractmethod
    def process(self, artifact: Artifact) -> Optional[Artifact]:
        """
        处理产物。

        Returns:
            处理后的产物；返回 None 表示丢弃，后续管道不再处理。
        """


class PipelineManager:
    """负责加载、排序和执行产物管道。"""

    def __init__(self):
        self._pipelines: List[ArtifactPipeline] = []
        self._sorted = True
        self.logger = get_logger("PipelineManager")

    @property
    def pipelines(self) -> List[ArtifactPipeline]:
        self._ensure_sorted()
        return list(self._pipelines)

    def register_pipeline(self, pipeline: ArtifactPipeline) -> None:
        self._pipelines.append(pipeline)
        self._sorted = False
        self.logger.debug(f"管道已注册: {pipeline.__class__.__name__} (优先级: {pipeline.priority})")

    def _ensure_sorted(self) -> None:
        if not self._sorted:
            self._pipelines.sort(key=lambda p: p.priority)
            self._sorted = True
            self.logger.debug("管道顺序: " + ", ".join(f"{p.__class__.__name__}({p.priority})" for p in self._pipelines))

    def process(self, artifact: Artifact) -> Optional[Artifact]:
        """按优先级让产物依次通过所有管道。单个管道出错时记入 artifact.failures 并继续。"""
        self._ensure_sorted()
        current = artifact
        for pipeline in self._pipelines:
            try:
                result = pipeline.process(current)
            except Exception as e:
                self.logger.error(f"管道 {pipeline.__class__.__name__} 处理产物 '{artifact.name}' 时出错: {e}", exc_info=True)
                artifact.failures.append(f"{pipeline.__class__.__name__}: {e}")
                continue
            if result is None:
                self.logger.info(f"产物 '{artifact.name}' 被管道 {pipeline.__class__.__name__} 丢弃")
                return None
            current = result
        return current

    def load_pipelines(
        self, pipeline_base_dir: Optional[str] = None, root_config_pipelines_section: Optional[Dict[str, Any]] = None
    ) -> int:
        """
        从 [pipelines.<name>] 配置加载管道，priority 缺失或无效视为禁用。

        root_config_pipelines_section 为 None 或空时使用默认管道链。
        """
        pipeline_dir_abs = os.path.abspath(pipeline_base_dir or os.path.join(_REPO_ROOT, "src", "pipelines"))
        if not os.path.isdir(pipeline_dir_abs):
            self.logger.warning(f"管道目录不存在: {pipeline_dir_abs}，跳过管道加载。")
            return 0
        if _REPO_ROOT not in sys.path:
            sys.path.insert(0, _REPO_ROOT)

        sections = root_config_pipelines_section or DEFAULT_PIPELINES
        if not root_config_pipelines_section:
            self.logger.debug("未配置 [pipelines]，使用默认管道链。")

        loaded = 0
        for name, settings in sections.items():
            if not isinstance(settings, dict):
                self.logger.warning(f"管道 '{name}' 的配置格式不正确 (应为表), 跳过。")
                continue
            priority = settings.get("priority")
            if not isinstance(priority, int):
                self.logger.info(f"管道 '{name}' 的 'priority' 缺失或无效，视为禁用。")
                continue
            package_path = os.path.join(pipeline_dir_abs, name)
            if not os.path.exists(os.path.join(package_path, "pipeline.py")):
                self.logger.warning(f"管道 '{name}' 已启用 (priority={priority})，但在 '{package_path}' 未找到 pipeline.py，跳过。")
                continue

            overrides = {k: v for k, v in settings.items() if k != "priority"}
            own = load_component_specific_config(package_path, name, "管道")
            final_config = merge_component_configs(own, overrides, name, "管道")

            module_path = f"src.pipelines.{name}.pipeline"
            expected = "".join(word.title() for word in name.split("_")) + "Pipeline"
            try:
                module = importlib.import_module(module_path)
                pipeline_class: Optional[Type[ArtifactPipeline]] = None
                for member_name, obj in inspect.getmembers(module, inspect.isclass):
                    if member_name == expected and issubclass(obj, ArtifactPipeline):
                        pipeline_class = obj
                        break
                if pipeline_class is None:
                    self.logger.error(f"在模块 '{module_path}' 中未找到管道类 '{expected}'。")
                    continue
                instance = pipeline_class(config=final_config)
                instance.priority = priority
                self.register_pipeline(instance)
                loaded += 1
            except ImportError as e:
                self.logger.error(f"导入管道模块 '{module_path}' 失败: {e}", exc_info=True)
            except Exception as e:
                self.logger.error(f"加载管道 '{name}' 时发生错误: {e}", exc_info=True)

        if loaded:
            self.logger.debug(f"管道加载完成，共 {loaded} 个。")
        else:
            self.logger.warning("未加载任何管道，产物不会被写出。")
        self._ensure_sorted()
        return loaded
