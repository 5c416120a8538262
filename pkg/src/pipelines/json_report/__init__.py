from src.pipelines.json_report.pipeline import JsonReportPipeline

__all__ = ["JsonReportPipeline"]
