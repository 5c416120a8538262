from src.experiments.collapse_gallery.experiment import CollapseGalleryExperiment

__all__ = ["CollapseGalleryExperiment"]
