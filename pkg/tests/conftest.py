"""Shared fixtures: miniature generated datasets and a desk-default pair.

The micro datasets are deliberately tiny (16x16 videos, ~5 s each) so that
unit tests touching real training loops stay in the seconds range. The
default-sized pair is built lazily and only the acceptance trend test pays
for it.
"""

from __future__ import annotations

import pytest

from talkit import config as cfg
from talkit.annotations import (
    AnnotationSet,
    PredictionSet,
    VideoAnnotations,
    VideoPredictions,
)
from talkit.fidelity import FidelityConfig
from talkit.segments import ActionInstance, Prediction, Segment
from talkit.synthetic import SynthSpec, generate_dataset
from talkit.training import StageHyperparams, TrainPlan

MICRO_SPEC = SynthSpec(
    num_videos=8,
    frames_per_video=120,
    full_height=16,
    full_width=16,
    num_classes=2,
    speed_levels=2,
    instances_per_video=(1, 1),
    min_instance_seconds=2.0,
    max_instance_seconds=3.0,
    noise_std=0.05,
    seed=11,
)

MICRO_AUX_SPEC = SynthSpec(
    num_videos=6,
    frames_per_video=120,
    full_height=16,
    full_width=16,
    num_classes=2,
    speed_levels=2,
    instances_per_video=(1, 1),
    min_instance_seconds=2.0,
    max_instance_seconds=3.0,
    noise_std=0.03,
    seed=12,
)


@pytest.fixture(scope="session")
def micro_target_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro-target")
    generate_dataset(MICRO_SPEC, out)
    return out


@pytest.fixture(scope="session")
def micro_aux_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro-aux")
    generate_dataset(MICRO_AUX_SPEC, out)
    return out


@pytest.fixture
def micro_plan(micro_target_dir, micro_aux_dir):
    """Builder for a full three-stage plan scaled down to run in seconds."""

    def build(**overrides) -> TrainPlan:
        base = dict(
            dataset_dir=str(micro_target_dir),
            aux_dir=str(micro_aux_dir),
            full_config=FidelityConfig(kind="full", num_snippets=16, height=16, width=16),
            pretrain="aux-clips",
            lofi=True,
            lr_grid=(0.002, 0.005),
            seed=0,
            stage1=StageHyperparams(epochs=2, batch_size=2, lr=0.05, lr_decay_every=1),
            stage2=StageHyperparams(epochs=3, batch_size=2, lr=0.02, lr_decay_every=1),
            stage3=StageHyperparams(epochs=4, batch_size=2, lr_decay_every=2),
        )
        base.update(overrides)
        return TrainPlan(**base)

    return build


@pytest.fixture(scope="session")
def default_datasets(tmp_path_factory):
    """The stock target and pretraining datasets, exactly as `generate` writes them."""
    root = tmp_path_factory.mktemp("default-data")
    conf = cfg.load_config()
    dirs = {}
    for section, name in (("synth", "target"), ("aux_synth", "aux")):
        params = dict(conf[section])
        params["instances_per_video"] = tuple(params["instances_per_video"])
        generate_dataset(SynthSpec(**params), root / name)
        dirs[name] = root / name
    return dirs["target"], dirs["aux"]


@pytest.fixture(scope="session")
def to_sets():
    """Convert a plain random_eval_case dict into package annotation types."""

    def convert(case) -> tuple[AnnotationSet, PredictionSet]:
        classes = tuple(f"c{k}" for k in range(case["num_classes"]))
        duration = case["duration"]
        gts = AnnotationSet(
            classes=classes,
            fps=25.0,
            videos={
                vid: VideoAnnotations(
                    duration,
                    tuple(ActionInstance(Segment(s, e), label) for s, e, label in rows),
                )
                for vid, rows in case["gts"].items()
            },
        )
        preds = PredictionSet(
            classes=classes,
            fps=25.0,
            videos={
                vid: VideoPredictions(
                    duration,
                    tuple(Prediction(Segment(s, e), label, score) for s, e, label, score in rows),
                )
                for vid, rows in case["preds"].items()
            },
        )
        return gts, preds

    return convert
