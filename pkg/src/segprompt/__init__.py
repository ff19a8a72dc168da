"""Prompt synthesis and evaluation harness for promptable image segmenters.

Builds point/box prompts from ground-truth masks, drives in-process oracle
segmenters or external adapter processes over a line protocol, scores
predictions with Dice/IoU, and renders summary tables and figure data.
"""

from .bridge import (
    PROTOCOL_VERSION,
    BoxFillOracle,
    ExternalBackend,
    IdentityOracle,
    PointDiskOracle,
    RegionGrowOracle,
    SegmentRequest,
    parse_backend_spec,
    protocol_check,
    rle_decode,
    rle_encode,
)
from .dataset import (
    DatasetManifest,
    ManifestEntry,
    SplitAssignment,
    load_manifest,
    load_patch,
    read_split,
    split_by_patient,
    write_split,
)
from .errors import SegPromptError
from .masks import (
    BBox,
    BinaryMask,
    LabelMask,
    PixelPoint,
    binarize,
    box_center,
    centroid,
    quadrant_partition,
    tight_bbox,
)
from .metrics import (
    ConfusionCounts,
    ScorePair,
    confusion,
    dice,
    five_number_summary,
    improvement_pct,
    iou,
    score_pair,
)
from .rng import SeededRng, derive_state
from .runner import (
    EvalRecord,
    ExperimentConfig,
    RunLog,
    load_config,
    read_records,
    run_experiment,
    write_records,
)
from .report import (
    ScatterPoint,
    SummaryRow,
    render_overlay,
    scatter_data,
    summarize,
)
from .strategies import (
    Prompt,
    PromptPoint,
    StrategyKind,
    StrategySpec,
    build_prompt,
    jittered_bbox,
    parse_strategy,
    quadrant_sample,
    sample_negative_points,
    sample_positive_points,
)

__version__ = "0.1.0"

__all__ = [
    "PROTOCOL_VERSION",
    "BBox",
    "BinaryMask",
    "BoxFillOracle",
    "ConfusionCounts",
    "DatasetManifest",
    "EvalRecord",
    "ExperimentConfig",
    "ExternalBackend",
    "IdentityOracle",
    "LabelMask",
    "ManifestEntry",
    "PixelPoint",
    "PointDiskOracle",
    "Prompt",
    "PromptPoint",
    "RegionGrowOracle",
    "RunLog",
    "ScatterPoint",
    "ScorePair",
    "SeededRng",
    "SegPromptError",
    "SegmentRequest",
    "SplitAssignment",
    "StrategyKind",
    "StrategySpec",
    "SummaryRow",
    "binarize",
    "box_center",
    "build_prompt",
    "centroid",
    "confusion",
    "derive_state",
    "dice",
    "five_number_summary",
    "improvement_pct",
    "iou",
    "jittered_bbox",
    "load_config",
    "load_manifest",
    "load_patch",
    "parse_backend_spec",
    "parse_strategy",
    "protocol_check",
    "quadrant_partition",
    "quadrant_sample",
    "read_records",
    "read_split",
    "render_overlay",
    "rle_decode",
    "rle_encode",
    "run_experiment",
    "sample_negative_points",
    "sample_positive_points",
    "scatter_data",
    "score_pair",
    "split_by_patient",
    "summarize",
    "tight_bbox",
    "write_records",
    "write_split",
]
