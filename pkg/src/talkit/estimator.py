"""Estimator-style wrapper: fit the staged pipeline, predict scored segments.

The underlying pipeline is directory-in, artifacts-out; this class adapts it
to the familiar fit/predict/score surface so it can sit inside parameter
sweeps and tooling that expects get_params/set_params semantics.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from sklearn.base import BaseEstimator

from .annotations import PredictionSet
from .datasets import VideoDataset
from .errors import ValidationError
from .fidelity import FidelityConfig, ScheduleSpec
from .metrics import evaluate_predictions, postprocess_predictions
from .training import (
    DEFAULT_LR_GRID,
    StageHyperparams,
    TrainPlan,
    extract_features,
    predict_dataset,
    run_experiment,
)


def _check_dataset_dir(x) -> str:
    if isinstance(x, VideoDataset):
        return str(x.root)
    path = Path(str(x))
    if not (path / "annotations.json").exists():
        raise ValidationError(
            f"{path} is not a generated dataset directory (no annotations.json); "
            "run the generator first"
        )
    return str(path)


class TemporalActionLocalizer(BaseEstimator):
    """Three-stage temporal action localization on generated video datasets.

    fit(X) takes a dataset directory (or VideoDataset); predict(X) returns a
    PredictionSet for a directory's videos using the fitted encoder and head.
    All constructor arguments are plain values so get_params/set_params and
    clone() behave as expected.
    """

    def __init__(
        self,
        pretrain: str = "aux-clips",
        lofi: bool = True,
        aux_dir: str | None = None,
        out_dir: str | None = None,
        seed: int = 0,
        full_num_snippets: int = 32,
        batch_size: int = 8,
        stage1_epochs: int = 30,
        stage1_lr: float = 0.1,
        stage2_epochs: int = 36,
        stage2_lr: float = 0.02,
        stage3_epochs: int = 1000,
        lr_grid: tuple[float, ...] = DEFAULT_LR_GRID,
        schedule_mode: str = "long-cycle",
        val_fraction: float = 0.25,
        iou_pos: float = 0.7,
        iou_neg: float = 0.3,
    ):
        self.pretrain = pretrain
        self.lofi = lofi
        self.aux_dir = aux_dir
        self.out_dir = out_dir
        self.seed = seed
        self.full_num_snippets = full_num_snippets
        self.batch_size = batch_size
        self.stage1_epochs = stage1_epochs
        self.stage1_lr = stage1_lr
        self.stage2_epochs = stage2_epochs
        self.stage2_lr = stage2_lr
        self.stage3_epochs = stage3_epochs
        self.lr_grid = lr_grid
        self.schedule_mode = schedule_mode
        self.val_fraction = val_fraction
        self.iou_pos = iou_pos
        self.iou_neg = iou_neg

    def _plan(self, dataset_dir: str) -> TrainPlan:
        dataset = VideoDataset(dataset_dir)
        sample = dataset.frames(dataset.video_ids[0])
        full = FidelityConfig(
            kind="full",
            num_snippets=int(self.full_num_snippets),
            height=sample.shape[1],
            width=sample.shape[2],
        )
        return TrainPlan(
            dataset_dir=dataset_dir,
            aux_dir=self.aux_dir,
            full_config=full,
            pretrain=self.pretrain,
            lofi=self.lofi,
            schedule=ScheduleSpec(mode=self.schedule_mode),
            lr_grid=tuple(self.lr_grid),
            seed=self.seed,
            val_fraction=self.val_fraction,
            stage1=StageHyperparams(
                epochs=self.stage1_epochs,
                batch_size=self.batch_size,
                lr=self.stage1_lr,
                lr_decay_every=max(1, self.stage1_epochs // 3),
            ),
            stage2=StageHyperparams(
                epochs=self.stage2_epochs,
                batch_size=self.batch_size,
                lr=self.stage2_lr,
                lr_decay_every=max(1, self.stage2_epochs // 3),
            ),
            stage3=StageHyperparams(
                epochs=self.stage3_epochs,
                batch_size=self.batch_size,
                lr_decay_every=max(1, self.stage3_epochs // 3),
            ),
            iou_pos=self.iou_pos,
            iou_neg=self.iou_neg,
        )

    def fit(self, X, y=None):
        """Run the staged pipeline on the dataset directory X. y is ignored."""
        dataset_dir = _check_dataset_dir(X)
        out_dir = self.out_dir or tempfile.mkdtemp(prefix="tal-fit-")
        plan = self._plan(dataset_dir)
        result = run_experiment(plan, out_dir)
        self.plan_ = plan
        self.result_ = result
        self.report_ = result.report
        self.chosen_lr_ = result.chosen_lr
        return self

    def _require_fitted(self):
        if not hasattr(self, "result_"):
            raise ValidationError("this estimator is not fitted yet; call fit first")

    def _modules(self):
        from .models import AnchorHead, ClassificationHead, VideoEncoder, load_checkpoint

        self._require_fitted()
        encoder = VideoEncoder(self.plan_.encoder, seed=0)
        head = AnchorHead(
            encoder.feature_dim,
            num_classes=len(VideoDataset(self.plan_.dataset_dir).classes),
            num_snippets=self.plan_.full_config.num_snippets,
            hidden=self.plan_.head_hidden,
            seed=0,
        )
        load_checkpoint(
            Path(self.result_.out_dir) / "checkpoints" / "stage3",
            {"encoder": encoder, "head": head},
        )
        return encoder, head

    def predict(self, X) -> PredictionSet:
        """Post-processed predictions for every video in dataset directory X."""
        dataset = VideoDataset(_check_dataset_dir(X))
        encoder, head = self._modules()
        encoder.requires_grad_(False)
        feats = extract_features(
            encoder, dataset, dataset.video_ids, self.plan_.full_config, self.plan_.snippet_plan
        )
        preds = predict_dataset(head, feats, dataset, self.plan_.full_config, self.plan_.snippet_plan)
        return postprocess_predictions(
            preds,
            self.plan_.nms_threshold,
            self.plan_.nms_sigma,
            self.plan_.nms_method,
            self.plan_.keep_top_k,
        )

    def score(self, X, y=None) -> float:
        """Average mAP of predict(X) against X's own annotations."""
        dataset = VideoDataset(_check_dataset_dir(X))
        report = evaluate_predictions(self.predict(X), dataset.annotations)
        return report.average_map
