import io
from typing import Any, Dict, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from src.core.pipeline_manager import Artifact, ArtifactPipeline, PlotPanel  # noqa: E402
from src.utils.io import atomic_write  # noqa: E402

_STYLES = {
    "line": {"linestyle": "-", "marker": None},
    "dashed": {"linestyle": "--", "marker": None},
    "points": {"linestyle": "none", "marker": "o", "markersize": 3},
    "open_points": {"linestyle": "none", "marker": "o", "markersize": 4, "markerfacecolor": "none"},
    "step": {"linestyle": "-", "marker": None, "drawstyle": "steps-mid"},
}


def _draw_panel(ax, panel: PlotPanel) -> None:
    for s in panel.series:
        ax.plot(list(s.x), list(s.y), label=s.label, linewidth=1.0, **_STYLES.get(s.style, _STYLES["line"]))
    ax.set_title(panel.title, fontsize=9)
    ax.set_xlabel(panel.xlabel, fontsize=8)
    ax.set_ylabel(panel.ylabel, fontsize=8)
    if panel.logy:
        ax.set_yscale("log")
    ax.tick_params(labelsize=7)
    if any(s.label for s in panel.series):
        ax.legend(fontsize=6, frameon=False)


def render_svg(artifact: Artifact, hashsalt: str, columns: int, panel_size) -> str:
    n = len(artifact.panels)
    ncols = min(columns, n)
    nrows = (n + ncols - 1) // ncols
    with plt.rc_context({"svg.hashsalt": hashsalt, "svg.fonttype": "none"}):
        fig, axes = plt.subplots(nrows, ncols, figsize=(panel_size[0] * ncols, panel_size[1] * nrows), squeeze=False)
        try:
            for ax, panel in zip(axes.ravel(), artifact.panels):
                _draw_panel(ax, panel)
            for ax in axes.ravel()[n:]:
                ax.set_visible(False)
            fig.tight_layout()
            buf = io.StringIO()
            # 不写日期元数据，保证输出确定
            fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": f"collapselab {artifact.provenance.get('version', '')}".strip()})
        finally:
            plt.close(fig)
    return buf.getvalue()


class SvgPlotPipeline(ArtifactPipeline):
    """用 matplotlib 渲染静态 SVG。只读取 panels，不修改 rows。"""

    priority = 300

    def __init__(self, config: Dict[str, Any]):
        super().__init__(config)
        self.hashsalt = str(self.config.get("hashsalt", "collapselab"))
        self.columns = int(self.config.get("columns", 2))
        self.panel_size = tuple(self.config.get("panel_size", [4.0, 3.0]))

    def process(self, artifact: Artifact) -> Optional[Artifact]:
        if not artifact.panels:
            return artifact
        path = atomic_write(artifact.path_for("svg"), render_svg(artifact, self.hashsalt, self.columns, self.panel_size))
        artifact.written["svg"] = path
        self.logger.info(f"已写出 SVG: {path}")
        return artifact
