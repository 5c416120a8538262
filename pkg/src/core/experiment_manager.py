import importlib
import inspect
import os
import sys
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Type

from src.utils.config import load_component_specific_config, merge_component_configs
from src.utils.errors import UnsupportedError
from src.utils.logger import get_logger

if TYPE_CHECKING:
    from src.core.lab_core import LabCore
    from src.core.pipeline_manager import Artifact

_REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
DEFAULT_EXPERIMENT_DIR = os.path.join(_REPO_ROOT, "src", "experiments")


class BaseExperiment:
    """所有实验 (图表复现脚本) 的基类。"""

    # 实验的简短说明，`experiment list` 会显示
    description = ""

    def __init__(self, core: "LabCore", experiment_config: Dict[str, Any]):
        self.core = core
        self.experiment_config = experiment_config
        self.logger = get_logger(self.__class__.__name__)

    def get(self, key: str, default: Any = None) -> Any:
        return self.experiment_config.get(key, default)

    def run(self) -> List["Artifact"]:
        raise NotImplementedError


class ExperimentManager:
    """发现并运行 src/experiments/<fig_id>/experiment.py 中的实验。"""

    def __init__(self, core: "LabCore", global_experiment_config: Optional[Dict[str, Any]] = None, experiment_dir: str = DEFAULT_EXPERIMENT_DIR):
        self.core = core
        self.global_experiment_config = global_experiment_config or {}
        self.experiment_dir = os.path.abspath(experiment_dir)
        self.logger = get_logger("ExperimentManager")

    def available(self) -> List[str]:
        if not os.path.isdir(self.experiment_dir):
            self.logger.warning(f"实验目录不存在: {self.experiment_dir}")
            return []
        return sorted(
            item
            for item in os.listdir(self.experiment_dir)
            if os.path.exists(os.path.join(self.experiment_dir, item, "experiment.py"))
        )

    def describe(self) -> Dict[str, str]:
        """实验 id -> 说明；加载失败的实验记录错误后跳过。"""
        out = {}
        for fig_id in self.available():
            try:
                out[fig_id] = self._load_class(fig_id).description
            except Exception as e:
                self.logger.error(f"加载实验 '{fig_id}' 失败: {e}", exc_info=True)
        return out

    def _load_class(self, fig_id: str) -> Type[BaseExperiment]:
        if _REPO_ROOT not in sys.path:
            sys.path.insert(0, _REPO_ROOT)
        module_path = f"src.experiments.{fig_id}.experiment"
        module = importlib.import_module(module_path)
        entrypoint = getattr(module, "experiment_entrypoint", None)
        if not (inspect.isclass(entrypoint) and issubclass(entrypoint, BaseExperiment)):
            raise UnsupportedError(f"模块 '{module_path}' 中的 'experiment_entrypoint' 不是 BaseExperiment 的子类")
        return entrypoint

    def config_for(self, fig_id: str) -> Dict[str, Any]:
        own = load_component_specific_config(os.path.join(self.experiment_dir, fig_id), fig_id, "实验")
        overrides = dict(self.global_experiment_config.get(fig_id, {}))
        return merge_component_configs(own, overrides, fig_id, "实验")

    def run(self, fig_id: str) -> List["Artifact"]:
        """运行一个实验并返回它写出的产物。未知 id 抛 UnsupportedError，实验内部的错误原样抛出。"""
        known = self.available()
        if fig_id not in known:
            raise UnsupportedError(f"未知的实验: {fig_id!r} (可选: {', '.join(known)})")
        experiment_class = self._load_class(fig_id)
        instance = experiment_class(self.core, self.config_for(fig_id))
        self.logger.info(f"开始运行实验 {fig_id} ({experiment_class.__name__})")
        artifacts = instance.run()
        self.logger.info(f"实验 {fig_id} 完成，共 {len(artifacts)} 个产物")
        return artifacts
