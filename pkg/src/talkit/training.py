"""Three-stage training: clip pretraining, reduced-fidelity joint optimization,
and full-fidelity head training on a frozen encoder.

Stage boundaries are strict: stage 2 is the only place encoder and head are
optimized together, and stage 3 never writes to the encoder (the freeze is
checked by checksum). Every stage is a pure function of (inputs, seed), and
logs carry no timestamps, so identical runs produce identical bytes.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .annotations import AnnotationSet, PredictionSet, VideoPredictions, save_predictions
from .datasets import VideoDataset, split_video_ids
from .errors import ConfigError, DivergenceError, ValidationError
from .fidelity import (
    CYCLE_ORDER,
    FidelityConfig,
    ScheduleSpec,
    config_at,
    default_lofi_configs,
)
from .metrics import (
    DEFAULT_NMS_SIGMA,
    DEFAULT_NMS_THRESHOLD,
    MetricReport,
    evaluate_predictions,
    map_report,
    postprocess_predictions,
)
from .models import (
    AnchorHead,
    ClassificationHead,
    EncoderSpec,
    VideoEncoder,
    assign_targets,
    classification_loss,
    decode_predictions,
    save_checkpoint,
    snippet_average,
    stack_targets,
    state_checksum,
    tal_loss,
)
from .seeding import derive_seed
from .snippets import SnippetPlan, build_batch, time_grid
from .synthetic import ClipDataset, make_trimmed_clips

PRETRAIN_MODES = ("none", "aux-clips", "aux-clips+target")

DEFAULT_LR_GRID = (0.0002, 0.0005, 0.001, 0.002, 0.005)


@dataclass(frozen=True)
class StageHyperparams:
    """SGD settings for one stage. The decay rule is lr * decay^(epoch // every)."""

    epochs: int
    batch_size: int = 16
    lr: float = 0.1
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    weight_decay: float = 1e-4
    momentum: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if min(self.batch_size, self.lr, self.lr_decay, self.lr_decay_every) <= 0:
            raise ValidationError("batch_size, lr, lr_decay, lr_decay_every must be positive")
        if self.weight_decay < 0 or self.momentum < 0:
            raise ValidationError("weight_decay and momentum must be non-negative")


def learning_rate(hp: StageHyperparams, epoch: int) -> float:
    """lr at a given epoch: lr0 * decay^(epoch // every)."""
    return hp.lr * hp.lr_decay ** (epoch // hp.lr_decay_every)


@dataclass(frozen=True)
class TrainPlan:
    """Everything run_experiment needs beyond the datasets themselves."""

    dataset_dir: str
    full_config: FidelityConfig
    aux_dir: str | None = None
    pretrain: str = "aux-clips"
    lofi: bool = True
    carry_head: bool = False
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    lr_grid: tuple[float, ...] = DEFAULT_LR_GRID
    seed: int = 0
    val_fraction: float = 0.25
    stage1: StageHyperparams = field(
        default_factory=lambda: StageHyperparams(epochs=30, batch_size=8, lr=0.1, lr_decay_every=10)
    )
    stage2: StageHyperparams = field(
        default_factory=lambda: StageHyperparams(epochs=36, batch_size=8, lr=0.02, lr_decay_every=12)
    )
    stage3: StageHyperparams = field(
        default_factory=lambda: StageHyperparams(epochs=1000, batch_size=8, lr_decay_every=333)
    )
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    head_hidden: int = 32
    iou_pos: float = 0.7
    iou_neg: float = 0.3
    nms_threshold: float = DEFAULT_NMS_THRESHOLD
    nms_sigma: float = DEFAULT_NMS_SIGMA
    nms_method: str = "gaussian"
    keep_top_k: int = 100
    snippet_plan: SnippetPlan = field(default_factory=SnippetPlan)

    def __post_init__(self):
        if self.pretrain not in PRETRAIN_MODES:
            raise ConfigError(f"pretrain must be one of {PRETRAIN_MODES}, got {self.pretrain!r}")
        if not self.lr_grid:
            raise ConfigError("stage-3 lr grid must be non-empty")
        if self.pretrain != "none" and self.aux_dir is None:
            raise ConfigError(f"pretrain mode {self.pretrain!r} needs aux_dir")
        if self.full_config.kind != "full":
            raise ConfigError("plan.full_config must have kind 'full'")

    @property
    def mode_name(self) -> str:
        return self.pretrain + ("+lofi" if self.lofi else "")


class JsonlLogger:
    """Append-only JSON-lines writer; a None path silently discards."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")
        self.records: list[dict] = []

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


def _shuffled(n: int, seed: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(seed)).permutation(n)


def _snapshot(modules: dict[str, torch.nn.Module]) -> dict[str, dict]:
    return {name: copy.deepcopy(m.state_dict()) for name, m in modules.items()}


def _restore(modules: dict[str, torch.nn.Module], snapshot: dict[str, dict]) -> None:
    for name, module in modules.items():
        module.load_state_dict(snapshot[name])


@dataclass
class StageResult:
    diverged: bool
    history: list[dict]


def _clip_batch(clips: ClipDataset, indices: np.ndarray, plan: SnippetPlan) -> tuple[np.ndarray, np.ndarray]:
    frames, labels = [], []
    for i in indices:
        clip_frames, label = clips.load(int(i))
        # one centered window per clip, so long clips still give F frames
        start = clip_frames.shape[0] // 2 - plan.window // 2
        idx = np.clip(start + np.arange(0, plan.window, plan.stride), 0, clip_frames.shape[0] - 1)
        frames.append(clip_frames[idx])
        labels.append(label)
    batch = np.stack(frames).astype(np.float32)[:, None]  # (B, 1, F, H, W, 3)
    return batch, np.asarray(labels, dtype=np.int64)


def stage1_acp(
    clips: ClipDataset,
    encoder: VideoEncoder,
    classifier: ClassificationHead,
    hp: StageHyperparams,
    seed: int = 0,
    log: JsonlLogger | None = None,
    plan: SnippetPlan | None = None,
) -> StageResult:
    """Cross-entropy pretraining of the encoder on trimmed clips.

    Trains encoder and classifier jointly with SGD. On a non-finite loss the
    last epoch-end parameters are restored and the stage stops early.
    """
    plan = plan or SnippetPlan()
    log = log or JsonlLogger(None)
    if len(clips) == 0 and hp.epochs > 0:
        raise ValidationError("no clips to pretrain on")
    modules = {"encoder": encoder, "classifier": classifier}
    params = list(encoder.parameters()) + list(classifier.parameters())
    optimizer = torch.optim.SGD(params, lr=hp.lr, momentum=hp.momentum, weight_decay=hp.weight_decay)
    last_good = _snapshot(modules)
    step = 0
    for epoch in range(hp.epochs):
        lr = learning_rate(hp, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = _shuffled(len(clips), derive_seed(seed, "stage1", "order", epoch))
        losses, hits, seen = [], 0, 0
        for start in range(0, len(order) - hp.batch_size + 1, hp.batch_size):
            batch, labels = _clip_batch(clips, order[start : start + hp.batch_size], plan)
            logits = classifier(encoder(batch))
            loss = classification_loss(logits, labels)
            if not math.isfinite(loss.detach().item()):
                _restore(modules, last_good)
                log.write({"stage": "stage1", "event": "divergence", "epoch": epoch, "step": step})
                return StageResult(diverged=True, history=log.records)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.detach().item())
            hits += int((logits.argmax(dim=1).numpy() == labels).sum())
            seen += len(labels)
            step += 1
        last_good = _snapshot(modules)
        log.write(
            {
                "stage": "stage1",
                "epoch": epoch,
                "step": step,
                "config_kind": "full",
                "loss": sum(losses) / max(len(losses), 1),
                "accuracy": hits / max(seen, 1),
                "lr": lr,
            }
        )
    return StageResult(diverged=False, history=log.records)


def _video_targets_units(
    annotations: AnnotationSet, video_id: str, num_frames: int, config_l: int, plan: SnippetPlan
) -> tuple[np.ndarray, np.ndarray]:
    """Ground truth for one video in snippet coordinates at the given L."""
    grid = time_grid(num_frames, config_l, annotations.fps, plan)
    instances = annotations.videos[video_id].instances
    segments = np.array(
        [[grid.index(i.segment.start), grid.index(i.segment.end)] for i in instances],
        dtype=np.float64,
    ).reshape(-1, 2)
    labels = np.array([i.label for i in instances], dtype=np.int64)
    return segments, labels


def stage2_lofi(
    dataset: VideoDataset,
    train_ids: tuple[str, ...],
    encoder: VideoEncoder,
    head: AnchorHead,
    schedule: ScheduleSpec,
    configs: dict[str, FidelityConfig],
    hp: StageHyperparams,
    seed: int = 0,
    iou_pos: float = 0.7,
    iou_neg: float = 0.3,
    log: JsonlLogger | None = None,
    plan: SnippetPlan | None = None,
) -> StageResult:
    """Joint encoder+head optimization at scheduled reduced fidelities.

    One optimizer over both parameter groups; the fidelity of global batch b
    is exactly config_at(schedule, b). Batch size stays constant; a trailing
    partial batch is dropped rather than shrunk.
    """
    plan = plan or SnippetPlan()
    log = log or JsonlLogger(None)
    if hp.momentum != 0.0:
        raise ConfigError(f"joint-optimization stage runs momentum 0, got {hp.momentum}")
    batches_per_epoch = len(train_ids) // hp.batch_size
    if hp.epochs > 0 and batches_per_epoch == 0:
        raise ValidationError(
            f"{len(train_ids)} training videos cannot fill one batch of {hp.batch_size}"
        )
    num_classes = len(dataset.classes)
    modules = {"encoder": encoder, "head": head}
    optimizer = torch.optim.SGD(
        [
            {"params": list(encoder.parameters())},
            {"params": list(head.parameters())},
        ],
        lr=hp.lr,
        momentum=hp.momentum,
        weight_decay=hp.weight_decay,
    )
    last_good = _snapshot(modules)
    target_cache: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}
    step = 0
    for epoch in range(hp.epochs):
        lr = learning_rate(hp, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = _shuffled(len(train_ids), derive_seed(seed, "stage2", "order", epoch))
        for b in range(batches_per_epoch):
            config = config_at(schedule, configs, step, batches_per_epoch)
            head.rebind(config.num_snippets)
            ids = [train_ids[int(i)] for i in order[b * hp.batch_size : (b + 1) * hp.batch_size]]
            videos = [dataset.raw_video(vid) for vid in ids]
            batch = build_batch(videos, config, plan)
            targets = []
            for video in videos:
                key = (video.video_id, config.num_snippets)
                if key not in target_cache:
                    target_cache[key] = _video_targets_units(
                        dataset.annotations, video.video_id, video.frames.shape[0], config.num_snippets, plan
                    )
                segments, labels = target_cache[key]
                targets.append(
                    assign_targets(head.anchors, segments, labels, num_classes, iou_pos, iou_neg)
                )
            try:
                output = head(snippet_average(encoder(batch)))
                loss, breakdown = tal_loss(output, stack_targets(targets), num_classes)
            except DivergenceError:
                loss, breakdown = None, None
            if loss is None or not math.isfinite(loss.detach().item()):
                _restore(modules, last_good)
                log.write({"stage": "stage2", "event": "divergence", "epoch": epoch, "step": step})
                return StageResult(diverged=True, history=log.records)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            log.write(
                {
                    "stage": "stage2",
                    "epoch": epoch,
                    "step": step,
                    "config_kind": config.kind,
                    "loss": breakdown,
                    "lr": lr,
                }
            )
            step += 1
        last_good = _snapshot(modules)
    return StageResult(diverged=False, history=log.records)


def extract_features(
    encoder: VideoEncoder,
    dataset: VideoDataset,
    video_ids: tuple[str, ...],
    config: FidelityConfig,
    plan: SnippetPlan | None = None,
) -> dict[str, np.ndarray]:
    """Frozen-encoder snippet features X (C, L) per video.

    The encoder is deterministic, so computing X once and reusing it is
    byte-identical to recomputing per step; this is purely a speed move for
    the frozen stage.
    """
    plan = plan or SnippetPlan()
    feats = {}
    with torch.no_grad():
        for vid in video_ids:
            batch = build_batch([dataset.raw_video(vid)], config, plan)
            feats[vid] = snippet_average(encoder(batch))[0].numpy().astype(np.float32)
    return feats


def _predict_video(
    head: AnchorHead, features: np.ndarray, grid, duration: float
) -> list:
    with torch.no_grad():
        output = head(torch.as_tensor(features, dtype=head.fc1.weight.dtype).unsqueeze(0))
    return decode_predictions(output, grid, duration)


def predict_dataset(
    head: AnchorHead,
    features: dict[str, np.ndarray],
    dataset: VideoDataset,
    config: FidelityConfig,
    plan: SnippetPlan | None = None,
) -> PredictionSet:
    """Raw (pre-NMS) predictions for every video with cached features."""
    plan = plan or SnippetPlan()
    videos = {}
    for vid in sorted(features):
        duration = dataset.duration(vid)
        grid = time_grid(dataset.num_frames(vid), config.num_snippets, dataset.fps, plan)
        preds = _predict_video(head, features[vid], grid, duration)
        videos[vid] = VideoPredictions(duration, tuple(preds))
    return PredictionSet(classes=dataset.classes, fps=dataset.fps, videos=videos)


def subset_annotations(annotations: AnnotationSet, ids) -> AnnotationSet:
    return AnnotationSet(
        classes=annotations.classes,
        fps=annotations.fps,
        videos={vid: annotations.videos[vid] for vid in ids},
    )


@dataclass
class Stage3Result:
    chosen_lr: float
    table: list[dict]
    diverged: bool
    history: list[dict]


def stage3_head(
    plan: TrainPlan,
    dataset: VideoDataset,
    encoder: VideoEncoder,
    train_ids: tuple[str, ...],
    val_ids: tuple[str, ...],
    head: AnchorHead,
    init_state: dict | None = None,
    log: JsonlLogger | None = None,
    feats_train: dict[str, np.ndarray] | None = None,
    feats_val: dict[str, np.ndarray] | None = None,
) -> Stage3Result:
    """Full-fidelity head training over the lr grid with a frozen encoder.

    One fresh head per grid lr (identical init across lrs), selected by
    validation average mAP, ties to the smallest lr. The winning parameters
    are loaded into `head`. Encoder parameters are never touched.
    """
    log = log or JsonlLogger(None)
    hp = plan.stage3
    config = plan.full_config
    num_classes = len(dataset.classes)
    encoder.requires_grad_(False)
    if feats_train is None:
        feats_train = extract_features(encoder, dataset, train_ids, config, plan.snippet_plan)
    if feats_val is None:
        feats_val = extract_features(encoder, dataset, val_ids, config, plan.snippet_plan)
    target_table = {
        vid: assign_targets(
            head.anchors,
            *_video_targets_units(
                dataset.annotations, vid, dataset.num_frames(vid), config.num_snippets, plan.snippet_plan
            ),
            num_classes,
            plan.iou_pos,
            plan.iou_neg,
        )
        for vid in train_ids
    }
    val_gts = subset_annotations(dataset.annotations, sorted(val_ids))
    batches_per_epoch = len(train_ids) // hp.batch_size
    if hp.epochs > 0 and batches_per_epoch == 0:
        raise ValidationError(
            f"{len(train_ids)} training videos cannot fill one batch of {hp.batch_size}"
        )
    # standardize the frozen features so the lr grid is encoder-agnostic
    stacked = np.concatenate([feats_train[v] for v in train_ids], axis=1)
    head.set_feature_scaling(stacked.mean(axis=1), stacked.std(axis=1))
    if init_state is None:
        init_state = copy.deepcopy(head.state_dict())
    else:
        init_state = dict(init_state)
        init_state["feat_shift"] = head.feat_shift.clone()
        init_state["feat_scale"] = head.feat_scale.clone()
    table: list[dict] = []
    best: tuple[float, float] | None = None  # (-val_map, lr), smaller is better
    best_state = None
    for lr0 in plan.lr_grid:
        head.load_state_dict(init_state)
        optimizer = torch.optim.SGD(
            head.parameters(), lr=lr0, momentum=hp.momentum, weight_decay=hp.weight_decay
        )
        run_hp = replace(hp, lr=lr0)
        diverged = False
        step = 0
        for epoch in range(hp.epochs):
            lr = learning_rate(run_hp, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = _shuffled(len(train_ids), derive_seed(plan.seed, "stage3", "order", lr0, epoch))
            losses = []
            for b in range(batches_per_epoch):
                ids = [train_ids[int(i)] for i in order[b * hp.batch_size : (b + 1) * hp.batch_size]]
                x = torch.as_tensor(np.stack([feats_train[v] for v in ids]))
                output = head(x)
                loss, breakdown = tal_loss(
                    output, stack_targets([target_table[v] for v in ids]), num_classes
                )
                if not math.isfinite(loss.detach().item()):
                    diverged = True
                    break
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.detach().item())
                step += 1
            if diverged:
                break
            log.write(
                {
                    "stage": "stage3",
                    "lr_grid_value": lr0,
                    "epoch": epoch,
                    "step": step,
                    "config_kind": config.kind,
                    "loss": sum(losses) / max(len(losses), 1),
                    "lr": lr,
                }
            )
        if diverged:
            log.write({"stage": "stage3", "event": "divergence", "lr_grid_value": lr0})
            table.append({"lr": lr0, "val_average_map": None})
            continue
        preds = predict_dataset(head, feats_val, dataset, config, plan.snippet_plan)
        preds = postprocess_predictions(
            preds, plan.nms_threshold, plan.nms_sigma, plan.nms_method, plan.keep_top_k
        )
        _, val_map, _ = map_report(preds, val_gts)
        table.append({"lr": lr0, "val_average_map": val_map})
        key = (-val_map, lr0)
        if best is None or key < best:
            best = key
            best_state = copy.deepcopy(head.state_dict())
    if best_state is None:
        raise DivergenceError(
            f"every stage-3 learning rate diverged; table: {json.dumps(table)}", stage="stage3"
        )
    head.load_state_dict(best_state)
    chosen = -best[0], best[1]
    log.write({"stage": "stage3", "event": "selected", "lr": chosen[1], "val_average_map": chosen[0]})
    return Stage3Result(chosen_lr=chosen[1], table=table, diverged=False, history=log.records)


@dataclass
class RunResult:
    mode: str
    out_dir: Path
    report: MetricReport
    chosen_lr: float
    lr_table: list[dict]
    checksums: dict[str, str]
    diverged: dict[str, bool]


def run_experiment(plan: TrainPlan, out_dir: str | Path) -> RunResult:
    """Execute the staged pipeline per plan and write all artifacts.

    Artifacts: per-stage JSONL logs, per-stage checkpoints, postprocessed
    validation predictions, report.json, and the comparison-row table.txt.
    Bit-identical for identical (plan, datasets).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = VideoDataset(plan.dataset_dir)
    num_classes = len(dataset.classes)
    train_ids, val_ids = split_video_ids(
        dataset.video_ids, plan.val_fraction, derive_seed(plan.seed, "split")
    )

    encoder = VideoEncoder(plan.encoder, seed=derive_seed(plan.seed, "encoder"))
    checksums = {"encoder_init": state_checksum(encoder)}
    diverged = {}

    # stage 1: classification pretraining (and optional target-clip pass).
    # The aux dataset brings its own class inventory; only the encoder crosses
    # over, so the counts need not match the target's.
    if plan.pretrain != "none":
        aux = VideoDataset(plan.aux_dir)
        clips = make_trimmed_clips(aux, aux.annotations, plan.snippet_plan.window)
        classifier = ClassificationHead(
            encoder.feature_dim, len(aux.classes), seed=derive_seed(plan.seed, "classifier")
        )
        log1 = JsonlLogger(out_dir / "stage1.jsonl")
        result1 = stage1_acp(
            clips, encoder, classifier, plan.stage1, plan.seed, log1, plan.snippet_plan
        )
        diverged["stage1"] = result1.diverged
        if plan.pretrain == "aux-clips+target":
            target_clips = make_trimmed_clips(
                dataset, subset_annotations(dataset.annotations, train_ids), plan.snippet_plan.window
            )
            classifier = ClassificationHead(
                encoder.feature_dim, num_classes, seed=derive_seed(plan.seed, "classifier-target")
            )
            result1b = stage1_acp(
                target_clips,
                encoder,
                classifier,
                plan.stage1,
                derive_seed(plan.seed, "target-clips"),
                log1,
                plan.snippet_plan,
            )
            diverged["stage1_target"] = result1b.diverged
        save_checkpoint(
            out_dir / "checkpoints" / "stage1",
            {"encoder": encoder, "classifier": classifier},
            {"stage": "stage1", "mode": plan.pretrain, "seed": plan.seed},
        )
    checksums["encoder_after_stage1"] = state_checksum(encoder)

    head = AnchorHead(
        encoder.feature_dim,
        num_classes,
        plan.full_config.num_snippets,
        plan.head_hidden,
        seed=derive_seed(plan.seed, "head"),
    )
    carried_state = None

    # stage 2: joint encoder+head optimization at reduced fidelities
    if plan.lofi:
        configs = default_lofi_configs(plan.full_config)
        log2 = JsonlLogger(out_dir / "stage2.jsonl")
        result2 = stage2_lofi(
            dataset,
            train_ids,
            encoder,
            head,
            plan.schedule,
            configs,
            plan.stage2,
            plan.seed,
            plan.iou_pos,
            plan.iou_neg,
            log2,
            plan.snippet_plan,
        )
        diverged["stage2"] = result2.diverged
        save_checkpoint(
            out_dir / "checkpoints" / "stage2",
            {"encoder": encoder, "head": head},
            {"stage": "stage2", "schedule_mode": plan.schedule.mode, "seed": plan.seed},
        )
        if plan.carry_head:
            head.rebind(plan.full_config.num_snippets)
            carried_state = copy.deepcopy(head.state_dict())
    checksums["encoder_after_stage2"] = state_checksum(encoder)

    # stage 3: full-fidelity head on the frozen encoder
    head = AnchorHead(
        encoder.feature_dim,
        num_classes,
        plan.full_config.num_snippets,
        plan.head_hidden,
        seed=derive_seed(plan.seed, "head-full"),
    )
    log3 = JsonlLogger(out_dir / "stage3.jsonl")
    encoder.requires_grad_(False)
    feats_train = extract_features(encoder, dataset, train_ids, plan.full_config, plan.snippet_plan)
    feats_val = extract_features(encoder, dataset, val_ids, plan.full_config, plan.snippet_plan)
    result3 = stage3_head(
        plan, dataset, encoder, train_ids, val_ids, head, carried_state, log3, feats_train, feats_val
    )
    checksums["encoder_after_stage3"] = state_checksum(encoder)
    checksums["head_final"] = state_checksum(head)
    diverged["stage3"] = result3.diverged
    save_checkpoint(
        out_dir / "checkpoints" / "stage3",
        {"encoder": encoder, "head": head},
        {"stage": "stage3", "chosen_lr": result3.chosen_lr, "seed": plan.seed},
    )

    # final evaluation on the validation split (reuses the frozen features)
    preds = predict_dataset(head, feats_val, dataset, plan.full_config, plan.snippet_plan)
    preds = postprocess_predictions(
        preds, plan.nms_threshold, plan.nms_sigma, plan.nms_method, plan.keep_top_k
    )
    save_predictions(preds, out_dir / "predictions.json")
    report = evaluate_predictions(preds, subset_annotations(dataset.annotations, sorted(val_ids)))

    payload = {
        "mode": plan.mode_name,
        "seed": plan.seed,
        "train_videos": len(train_ids),
        "val_videos": len(val_ids),
        "chosen_lr": result3.chosen_lr,
        "lr_table": result3.table,
        "checksums": checksums,
        "diverged": diverged,
        "metrics": report.to_json_dict(),
    }
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "table.txt").write_text(
        f"{plan.mode_name}\n{report.format_table()}\n", encoding="utf-8"
    )
    return RunResult(
        mode=plan.mode_name,
        out_dir=out_dir,
        report=report,
        chosen_lr=result3.chosen_lr,
        lr_table=result3.table,
        checksums=checksums,
        diverged=diverged,
    )
