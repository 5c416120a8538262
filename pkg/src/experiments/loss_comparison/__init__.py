from src.experiments.loss_comparison.experiment import LossComparisonExperiment

__all__ = ["LossComparisonExperiment"]
