"""Inter-rater uncertainty for polygon annotations.

Consensus curves from signed distance fields, global and local disagreement
measures, and pre/post comparisons between annotation phases.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    GenerationError,
    InvalidInputError,
    NoContourError,
    NotFoundError,
    OutOfDomainError,
    PolyConsensusError,
    ResourceLimitError,
    SchemaError,
    UnsupportedFormatError,
    ValidationError,
)
from .geometry import (  # noqa: E402
    BBox,
    Polygon,
    contains_point,
    crop_with_margin,
    is_simple,
    perimeter,
    resample_by_arclength,
    self_intersections,
    shoelace_area,
    signed_area,
)
from .raster import GridSpec, RasterGrid, grid_for_polygons, raster_area, rasterize_alltouch  # noqa: E402
from .distance import (  # noqa: E402
    ScalarField,
    edt,
    exact_polyline_distance,
    sample_field,
    signed_distance_field,
    signed_distance_on,
)
from .consensus import (  # noqa: E402
    PHASES,
    ConsensusCurve,
    RaterAnnotation,
    RaterSet,
    asymmetric_distance,
    boundary_distances,
    consensus_objective,
    expected_boundary_distance,
    mean_curve,
    mean_sdf,
    mode_shape,
    phase_fields,
)
from .local_uncertainty import (  # noqa: E402
    DeviationProfile,
    FlaggedSegment,
    flag_segments,
    flagged_length,
    local_sigma,
    signed_deviations,
    variance_heatmap,
)
from .stats import compare_phases, summarize_cohort, welch_t_test  # noqa: E402
from .dataset_io import (  # noqa: E402
    bundled_coco_ids,
    load_coco_polygon,
    load_directory,
    load_multirater,
    prepare_sample,
    save_multirater,
)
from .synth import NoiseModel, make_shape, perturb, simulate_cohort  # noqa: E402
from .analysis import SampleAnalysis, analyze_sample  # noqa: E402
