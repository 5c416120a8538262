import os
import shutil
import sys
from typing import Any, Dict, Optional, Tuple

# 尝试导入 tomllib (Python 3.11+), 否则使用接口相同的 tomli
try:
    import tomllib
except ModuleNotFoundError:
    try:
        import tomli as tomllib  # type: ignore
    except ModuleNotFoundError:
        print("错误：TOML 解析库缺失。请安装 'tomli'。", file=sys.stderr)
        raise

from src.utils.logger import get_logger

logger = get_logger("ConfigManager")

_CONFIG_MANAGER_DIR = os.path.dirname(os.path.abspath(__file__))
# 项目根目录是 src 的上一级
_BASE_DIR = os.path.dirname(os.path.dirname(_CONFIG_MANAGER_DIR))

SEED_ENV_VAR = "COLLAPSELAB_SEED"
DEFAULT_SEED = 0


def load_config(config_filename: str = "config.toml", base_dir: str = _BASE_DIR) -> dict:
    """加载位于指定基础目录下的 TOML 配置文件。config_filename 也可以是绝对路径。"""
    config_path = config_filename if os.path.isabs(config_filename) else os.path.join(base_dir, config_filename)
    logger.debug(f"尝试加载配置文件: {config_path}")
    try:
        with open(config_path, "rb") as f:
            config = tomllib.load(f)
            logger.debug(f"成功加载配置文件: {config_path}")
            return config
    except FileNotFoundError:
        logger.error(f"错误：配置文件 '{config_path}' 未找到。")
        raise
    except tomllib.TOMLDecodeError as e:
        logger.error(f"错误：配置文件 '{config_path}' 格式无效: {e}")
        raise


def check_and_setup_main_config(
    config_filename: str = "config.toml", template_filename: str = "config-template.toml", base_dir: str = _BASE_DIR
) -> bool:
    """
    检查主 config.toml。如果不存在但存在 config-template.toml，则复制模板。
    返回 True 如果文件被复制，否则返回 False。复制失败则抛出 IOError。
    """
    config_path = os.path.join(base_dir, config_filename)
    template_path = os.path.join(base_dir, template_filename)

    if os.path.exists(config_path):
        logger.debug(f"主配置文件 '{config_filename}' 已存在于 '{base_dir}'.")
        return False
    if not os.path.exists(template_path):
        logger.warning(f"主配置文件 '{config_filename}' 和模板 '{template_filename}' 均未找到，将使用内置默认值。")
        return False

    try:
        shutil.copy2(template_path, config_path)
    except OSError as e:
        logger.error(f"从模板 '{template_filename}' 复制主配置文件 '{config_filename}' 失败: {e}")
        raise IOError(f"无法复制主配置文件 {config_filename} 从模板 {template_filename}: {e}") from e
    logger.warning(f"主配置文件 '{config_filename}' 不存在，已从 '{template_filename}' 复制，可按需修改。")
    return True


def load_component_specific_config(
    component_dir_path: str, component_name: str, component_type_name: str = "组件"
) -> Dict[str, Any]:
    """
    加载组件自身目录下的配置。优先读取 config.toml，不存在时读取 config-template.toml。

    如果文件中存在与组件同名的配置段 (例如 fig5a_curves/config.toml 中的 [fig5a_curves])，
    则只使用该段；否则整个文件即为组件配置。

    Returns:
        配置字典，若配置文件不存在或加载失败则返回空字典
    """
    candidates = [
        os.path.join(component_dir_path, "config.toml"),
        os.path.join(component_dir_path, "config-template.toml"),
    ]
    config_path = next((p for p in candidates if os.path.exists(p)), None)
    if config_path is None:
        logger.debug(f"{component_type_name} '{component_name}' 无独立配置文件。")
        return {}

    try:
        with open(config_path, "rb") as f:
            loaded_data = tomllib.load(f)
    except Exception as e:
        logger.error(f"加载{component_type_name} '{component_name}' 的配置文件 '{config_path}' 失败: {e}", exc_info=True)
        return {}

    if isinstance(loaded_data.get(component_name), dict):
        logger.debug(f"从 '{config_path}' 加载了{component_type_name} '{component_name}' 的同名配置段。")
        return loaded_data[component_name].copy()
    logger.debug(f"从 '{config_path}' 加载了{component_type_name} '{component_name}' 的根配置。")
    return dict(loaded_data)


def merge_component_configs(
    specific_config: Dict[str, Any],
    global_override_config: Dict[str, Any],
    component_name: str,
    component_type_name: str = "组件",
) -> Dict[str, Any]:
    """合并组件自身配置和主配置中的覆盖项。主配置优先。"""
    final_config = specific_config.copy()
    final_config.update(global_override_config)
    logger.debug(f"{component_type_name} '{component_name}' 合并后配置: {final_config}")
    return final_config


def resolve_seed(config: Dict[str, Any], cli_seed: Optional[int] = None) -> int:
    """
    解析全局种子。优先级: 命令行 > 环境变量 COLLAPSELAB_SEED > config [general].seed > 0。
    """
    if cli_seed is not None:
        return int(cli_seed)
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is not None and env_value.strip():
        try:
            return int(env_value)
        except ValueError as e:
            raise ValueError(f"环境变量 {SEED_ENV_VAR}='{env_value}' 不是整数") from e
    return int(config.get("general", {}).get("seed", DEFAULT_SEED))


def initialize_configurations(
    base_dir: str = _BASE_DIR,
    main_cfg_name: str = "config.toml",
    main_template_name: str = "config-template.toml",
    config_path: Optional[str] = None,
) -> Tuple[dict, bool]:
    """
    执行配置检查和加载步骤。

    1. 若指定了 config_path，直接加载该文件。
    2. 否则检查主配置 (必要时从模板复制) 并加载。
    返回 (loaded_main_config, main_config_copied)。主配置与模板都不存在时返回空配置。
    """
    if config_path:
        return load_config(os.path.abspath(config_path)), False

    copied = check_and_setup_main_config(main_cfg_name, main_template_name, base_dir)
    if not os.path.exists(os.path.join(base_dir, main_cfg_name)):
        return {}, copied
    return load_config(main_cfg_name, base_dir), copied


__all__ = [
    "load_config",
    "check_and_setup_main_config",
    "load_component_specific_config",
    "merge_component_configs",
    "resolve_seed",
    "initialize_configurations",
    "SEED_ENV_VAR",
]
