from src.experiments.fig5b_safe_region.experiment import Fig5bSafeRegionExperiment

__all__ = ["Fig5bSafeRegionExperiment"]
