from .objectives import (
    KldConfig,
    KldObjective,
    MapConfig,
    MapObjective,
    adapt_kld,
    adapt_map,
    interpolate_targets,
    map_gradient,
    map_loss,
)
from .prior import (
    DEFAULT_VAR_FLOOR,
    GaussianPrior,
    WeightVectorSample,
    fit_prior,
    gaussianity_report,
    harvest_speaker_transforms,
    load_prior,
    load_samples,
    save_prior,
    save_samples,
)

__all__ = [
    "KldConfig", "KldObjective", "MapConfig", "MapObjective", "adapt_kld", "adapt_map",
    "interpolate_targets", "map_gradient", "map_loss", "DEFAULT_VAR_FLOOR", "GaussianPrior",
    "WeightVectorSample", "fit_prior", "gaussianity_report", "harvest_speaker_transforms",
    "load_prior", "load_samples", "save_prior", "save_samples",
]
