from src.experiments.normalization_study.experiment import NormalizationStudyExperiment

__all__ = ["NormalizationStudyExperiment"]
