from src.pipelines.provenance.pipeline import ProvenancePipeline

__all__ = ["ProvenancePipeline"]
