from src.pipelines.svg_plot.pipeline import SvgPlotPipeline

__all__ = ["SvgPlotPipeline"]
