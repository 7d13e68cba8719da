"""stylemark: style-transfer augmentation and evaluation for landmark datasets.

The toolkit crops annotated faces, stylizes them through pluggable
backends while keeping landmark coordinates untouched, selects style
sources by supervised accuracy ranking, assembles augmented training
sets, and scores detectors with NME / failure-rate / per-region / IoU
metrics plus table and plot reports.
"""

from __future__ import annotations

import json
from importlib import resources

from .dataset import (
    DatasetManifest,
    ImageRecord,
    Landmark,
    LandmarkSet,
    Lineage,
    Split,
    load_manifest,
    save_manifest,
    split_dataset,
    stable_seed,
    union_manifests,
    validate_record,
)
from .detector import DetectorBackend, MeanShapeModel, evaluate, fit_mean_shape, predict
from .errors import (
    AllJobsFailedError,
    BackendError,
    DetectorError,
    GeometryError,
    LossCurveError,
    ManifestParseError,
    MetricError,
    PipelineError,
    ProtocolError,
    RecordValidationError,
    SelectionError,
    StylemarkError,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    Seeds,
    StudyReport,
    builtin_configs,
    compare,
    crop_manifest,
    build_rotated,
    run,
    run_sweep,
)
from .geometry import (
    AffineTransform,
    BinaryMask,
    CropBox,
    apply_transform,
    convex_hull,
    crop_image,
    hull_mask,
    invert_transform,
    landmark_bbox,
    rotate_augment,
    rotate_image,
)
from .metrics import (
    MetricsReport,
    Normalizer,
    PredictionSet,
    RegionMap,
    aggregate,
    failure_rate,
    mask_iou,
    nme,
    per_region_nme,
    score_predictions,
)
from .report import PlotSpec, TableRow, emit_plot, emit_table
from .selection import (
    Pairing,
    RankedImage,
    StylePool,
    assign_styles,
    make_test_st,
    rank_by_nme,
    sst_select,
)
from .style import (
    LossCurve,
    StyleJob,
    StyleResult,
    color_stat_transfer,
    histogram_match,
    jobs_from_pairs,
    make_backend,
    parse_loss_curve,
    run_external,
    run_jobs,
)
from .synthetic import generate_dataset

__version__ = "0.1.0"


def default_region_map(landmark_count: int = 48) -> RegionMap | None:
    """Bundled region grouping; only defined for the 48-landmark layout."""
    if landmark_count != 48:
        return None
    data = resources.files("stylemark.data").joinpath("regions_48.json").read_text()
    return RegionMap({k: tuple(v) for k, v in json.loads(data).items()})
