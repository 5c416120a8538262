from src.pipelines.csv_writer.pipeline import CsvWriterPipeline

__all__ = ["CsvWriterPipeline"]
