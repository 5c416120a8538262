from src.experiments.fig6_orthogonal.experiment import Fig6OrthogonalExperiment

__all__ = ["Fig6OrthogonalExperiment"]
