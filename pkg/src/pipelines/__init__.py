# 导出所有管道类，方便导入
from src.pipelines.provenance import ProvenancePipeline
from src.pipelines.csv_writer import CsvWriterPipeline
from src.pipelines.json_report import JsonReportPipeline
from src.pipelines.svg_plot import SvgPlotPipeline

__all__ = ["ProvenancePipeline", "CsvWriterPipeline", "JsonReportPipeline", "SvgPlotPipeline"]
