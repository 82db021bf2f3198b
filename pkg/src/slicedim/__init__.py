"""slicedim: fractal measures with known dimension, and desk-scale checks of
slice and intersection dimension formulas."""

__version__ = "0.1.0"

from .boxdim import (
    DimFit,
    DyadicCover,
    box_count,
    cover_from_ifs,
    dim_fit,
    intersect_sets,
    product_cover,
    scale_ladder,
    slice_set,
)
from .fractal_measures import (
    Ball,
    BoxRegion,
    DiscreteMeasure,
    IfsSpec,
    build_cantor_ifs,
    frostman_constant,
    lebesgue_quadrature,
    lower_density_estimate,
    natural_measure,
    point_mass,
    product_measure,
    restrict,
)
from .geometry import (
    Projection,
    ProjectionFamily,
    Rotation,
    density_at,
    l2_density_functional,
    mollify,
    project_pushforward,
    random_rotation,
    rescale,
    sample_projection,
    tube_mass,
    tube_ratio,
    unit_ball_volume,
)
from .harmonic import (
    FrequencyGrid,
    decay_exponent_fit,
    energy_fourier,
    energy_spatial,
    fourier_transform,
    ifs_fourier_transform,
    riesz_constant,
    rotation_average_identity_check,
    spherical_average,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    FamilyConfig,
    SampleConfig,
    SetConfig,
    ToleranceConfig,
    assumption_audit,
    identity_check_experiment,
    intersection_experiment,
    product_slice_experiment,
    slice_experiment,
    validate_config,
)

__all__ = [name for name in dir() if not name.startswith("_")]
