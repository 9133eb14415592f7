"""Desk-scale staged low-fidelity training for temporal action localization.

The package splits into data (synthetic, datasets, annotations), the snippet
and fidelity machinery (snippets, fidelity, anchors), trainable parts
(models), the staged pipeline (training), metrics, and the CLI. The
TemporalActionLocalizer estimator wraps the pipeline in a fit/predict
surface.
"""

from .anchors import anchor_count, enumerate_anchors
from .annotations import (
    AnnotationSet,
    PredictionSet,
    VideoAnnotations,
    VideoPredictions,
    load_annotations,
    load_predictions,
    save_annotations,
    save_predictions,
)
from .datasets import VideoDataset, split_video_ids
from .errors import (
    BudgetError,
    ConfigError,
    DivergenceError,
    GenerationError,
    ParseError,
    ShapeError,
    TalkitError,
    ValidationError,
)
from .estimator import TemporalActionLocalizer
from .fidelity import (
    CostModel,
    FidelityConfig,
    ScheduleSpec,
    build_schedule,
    check_budget,
    default_lofi_configs,
    derive_config,
    estimate_peak_memory,
    memory_report,
    pixel_volume,
    reference_full_config,
)
from .metrics import (
    MetricReport,
    ar_auc,
    average_precision,
    evaluate_predictions,
    map_report,
    postprocess_predictions,
    soft_nms,
    top_k,
)
from .models import (
    AnchorHead,
    ClassificationHead,
    EncoderSpec,
    HeadOutput,
    VideoEncoder,
    assign_targets,
    classification_loss,
    decode_predictions,
    load_checkpoint,
    save_checkpoint,
    snippet_average,
    state_checksum,
    tal_loss,
)
from .segments import ActionInstance, Prediction, Segment, iou_1d
from .snippets import (
    SnippetBatch,
    SnippetPlan,
    batch_shape,
    build_batch,
    rescale_spatial,
    sample_snippet,
    snippet_centers,
    time_grid,
)
from .synthetic import ClipDataset, RawVideo, SynthSpec, generate_dataset, make_trimmed_clips
from .training import (
    RunResult,
    StageHyperparams,
    TrainPlan,
    learning_rate,
    run_experiment,
    stage1_acp,
    stage2_lofi,
    stage3_head,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
