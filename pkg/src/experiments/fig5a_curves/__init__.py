from src.experiments.fig5a_curves.experiment import Fig5aCurvesExperiment

__all__ = ["Fig5aCurvesExperiment"]
