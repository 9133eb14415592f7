"""Trainable components: video encoder, snippet averaging, anchor head, losses.

The encoder is a small strided 2-D CNN with a TSM-style channel shift between
layers, so temporal information can flow between adjacent frames of a snippet
without 3-D convolutions. Frame features are averaged per snippet into
X of shape (B, C, L); the anchor head scores every (t_s, t_e) pair over a
pooled span feature. Deliberately no graph convolutions or boundary maps:
the training procedure, not the head, is the subject here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .anchors import anchor_count, enumerate_anchors
from .errors import DivergenceError, ShapeError, ValidationError
from .segments import Prediction, Segment, interval_iou
from .snippets import SnippetBatch, TimeGrid


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture knobs for the video encoder.

    feature_dim is the last width; the temporal shift moves shift_fraction of
    channels one frame forward and the same fraction one frame back.
    """

    widths: tuple[int, ...] = (16, 24, 32)
    shift_fraction: float = 0.25
    shift_enabled: bool = True

    def __post_init__(self):
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValidationError(f"channel widths must be positive, got {self.widths}")
        if not 0.0 < self.shift_fraction <= 0.5:
            raise ValidationError(f"shift_fraction must lie in (0, 0.5], got {self.shift_fraction}")

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]


def temporal_shift(x: torch.Tensor, fraction: float) -> torch.Tensor:
    """Shift a fraction of channels one frame forward, a fraction one frame
    back, zero-filling at snippet edges. x: (N, F, C, H, W)."""
    n_shift = int(x.shape[2] * fraction)
    if n_shift == 0:
        return x
    out = x.clone()
    out[:, 1:, :n_shift] = x[:, :-1, :n_shift]
    out[:, :1, :n_shift] = 0.0
    out[:, :-1, n_shift : 2 * n_shift] = x[:, 1:, n_shift : 2 * n_shift]
    out[:, -1:, n_shift : 2 * n_shift] = 0.0
    return out


class VideoEncoder(nn.Module):
    """Strided 2-D CNN over frames with inter-layer temporal shift.

    Input (B, L, F, H, W, 3); output frame features (B, L, F, C) after a
    spatial global average pool. Without the shift, each frame's feature
    depends only on that frame.
    """

    def __init__(self, spec: EncoderSpec = EncoderSpec(), seed: int = 0):
        super().__init__()
        self.spec = spec
        # stem doubles the input channels with gated frame differences
        widths = (6,) + tuple(spec.widths)
        gen = torch.Generator().manual_seed(seed)
        self.convs = nn.ModuleList()
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            conv = nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1)
            std = (2.0 / (c_in * 9)) ** 0.5
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                conv.bias.zero_()
            self.convs.append(conv)

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    def forward(self, batch: SnippetBatch | np.ndarray | torch.Tensor) -> torch.Tensor:
        tensor = batch.tensor if isinstance(batch, SnippetBatch) else batch
        dtype = next(self.parameters()).dtype
        x = torch.as_tensor(np.asarray(tensor) if isinstance(tensor, np.ndarray) else tensor)
        x = x.to(dtype)
        if x.ndim != 6:
            raise ShapeError(f"encoder expects (B, L, F, H, W, 3), got shape {tuple(x.shape)}")
        b, l, f, h, w, c = x.shape
        x = x.reshape(b * l, f, h, w, c).permute(0, 1, 4, 2, 3)  # (B*L, F, 3, H, W)
        x = (x - 0.5) / 0.25  # fixed pixel normalization, roughly unit scale
        diff = torch.zeros_like(x)
        if self.spec.shift_enabled:
            # static background cancels here, so these channels carry motion;
            # zeroed when temporal modelling is off to keep frames independent
            diff[:, 1:] = x[:, 1:] - x[:, :-1]
        x = torch.cat([x, diff], dim=2)
        for conv in self.convs:
            if self.spec.shift_enabled:
                x = temporal_shift(x, self.spec.shift_fraction)
            n, frames, ch, hh, ww = x.shape
            x = conv(x.reshape(n * frames, ch, hh, ww))
            x = torch.relu(x)
            x = x.reshape(n, frames, *x.shape[1:])
        feats = x.mean(dim=(3, 4))  # (B*L, F, C)
        feats = feats.reshape(b, l, f, feats.shape[-1])
        if not torch.isfinite(feats).all():
            bad = torch.nonzero(~torch.isfinite(feats).reshape(b, -1).all(dim=1))
            raise DivergenceError(
                "encoder produced non-finite activations",
                batch_index=int(bad[0]) if len(bad) else None,
            )
        return feats


def snippet_average(frame_features: torch.Tensor) -> torch.Tensor:
    """(B, L, F, C) -> X of shape (B, C, L): arithmetic mean over frames."""
    if frame_features.ndim != 4:
        raise ShapeError(f"expected (B, L, F, C), got shape {tuple(frame_features.shape)}")
    return frame_features.mean(dim=2).permute(0, 2, 1)


@dataclass(frozen=True)
class HeadOutput:
    """Per-anchor predictions, one row per anchor in enumerate_anchors order."""

    logits: torch.Tensor  # (B, A, num_classes + 1), background last
    offsets: torch.Tensor  # (B, A, 2) in snippet units
    anchors: np.ndarray  # (A, 2) int64


class AnchorHead(nn.Module):
    """Two-layer MLP over pooled anchor-span features.

    The anchor table is bound to one L at a time; rebind() swaps it when the
    fidelity (and hence L) changes. Forward rejects X whose length disagrees
    with the bound table.
    """

    def __init__(self, feature_dim: int, num_classes: int, num_snippets: int, hidden: int = 32, seed: int = 0):
        super().__init__()
        if num_classes < 1:
            raise ValidationError(f"need at least one class, got {num_classes}")
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.hidden = hidden
        gen = torch.Generator().manual_seed(seed)
        self.fc1 = nn.Linear(feature_dim, hidden)
        self.fc2 = nn.Linear(hidden, num_classes + 1 + 2)
        for layer in (self.fc1, self.fc2):
            std = (2.0 / layer.in_features) ** 0.5
            with torch.no_grad():
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen) * std)
                layer.bias.zero_()
        self.register_buffer("feat_shift", torch.zeros(feature_dim))
        self.register_buffer("feat_scale", torch.ones(feature_dim))
        self.num_snippets = 0
        self._anchors = np.zeros((0, 2), dtype=np.int64)
        self.rebind(num_snippets)

    def set_feature_scaling(self, mean, std) -> None:
        """Standardize incoming features with fixed per-channel moments.

        With a frozen encoder the feature scale is whatever training left
        behind; standardizing against the train split makes one lr grid
        behave the same regardless of which encoder produced the features.
        """
        with torch.no_grad():
            self.feat_shift.copy_(torch.as_tensor(mean, dtype=self.feat_shift.dtype))
            scale = 1.0 / torch.as_tensor(std, dtype=self.feat_scale.dtype).clamp(min=1e-6)
            self.feat_scale.copy_(scale)

    def rebind(self, num_snippets: int) -> None:
        """Point the head at a new snippet count; MLP weights are untouched."""
        if num_snippets < 3:
            raise ValidationError(
                f"no valid anchors for L={num_snippets}; need L >= 3 so 0 < t_s < t_e < L is satisfiable"
            )
        if num_snippets != self.num_snippets:
            self.num_snippets = num_snippets
            self._anchors = enumerate_anchors(num_snippets)

    @property
    def anchors(self) -> np.ndarray:
        return self._anchors

    def forward(self, x: torch.Tensor) -> HeadOutput:
        if x.ndim != 3:
            raise ShapeError(f"expected X of shape (B, C, L), got {tuple(x.shape)}")
        if x.shape[2] != self.num_snippets:
            raise ShapeError(
                f"X has L={x.shape[2]} but the head is bound to L={self.num_snippets}; call rebind()"
            )
        dtype = self.fc1.weight.dtype
        x = x.to(dtype)
        x = (x - self.feat_shift[None, :, None]) * self.feat_scale[None, :, None]
        anchors = torch.as_tensor(self._anchors, device=x.device)
        cs = torch.cumsum(x, dim=2)
        cs = torch.cat([torch.zeros_like(cs[:, :, :1]), cs], dim=2)  # (B, C, L+1)
        starts, ends = anchors[:, 0], anchors[:, 1]
        span = (cs[:, :, ends + 1] - cs[:, :, starts]) / (ends - starts + 1).to(dtype)
        pooled = span.permute(0, 2, 1)  # (B, A, C)
        out = self.fc2(torch.relu(self.fc1(pooled)))
        return HeadOutput(
            logits=out[..., : self.num_classes + 1],
            offsets=out[..., self.num_classes + 1 :],
            anchors=self._anchors,
        )


@dataclass(frozen=True)
class AnchorTargets:
    """Per-anchor supervision: class index (background = num_classes), offset
    regression target, and a weight that is 0 for ignored anchors."""

    class_target: np.ndarray  # (A,) int64
    offset_target: np.ndarray  # (A, 2) float64
    weight: np.ndarray  # (A,) float64, 1.0 or 0.0


def assign_targets(
    anchors: np.ndarray,
    gt_segments: np.ndarray,
    gt_labels: np.ndarray,
    num_classes: int,
    iou_pos: float = 0.7,
    iou_neg: float = 0.3,
) -> AnchorTargets:
    """Match anchors to ground truth in snippet coordinates.

    max-IoU >= iou_pos: positive, class = matched label, offsets = gt - anchor.
    max-IoU <= iou_neg: background. In between: ignored (weight 0). Ties on
    IoU resolve to the earliest instance.
    """
    if not 0.0 <= iou_neg < iou_pos <= 1.0:
        raise ValidationError(f"need 0 <= iou_neg < iou_pos <= 1, got {iou_neg}, {iou_pos}")
    num_anchors = anchors.shape[0]
    class_target = np.full(num_anchors, num_classes, dtype=np.int64)
    offset_target = np.zeros((num_anchors, 2), dtype=np.float64)
    weight = np.ones(num_anchors, dtype=np.float64)
    if gt_segments.size == 0:
        return AnchorTargets(class_target, offset_target, weight)
    for i in range(num_anchors):
        t_s, t_e = float(anchors[i, 0]), float(anchors[i, 1])
        ious = np.array(
            [interval_iou(t_s, t_e, float(g[0]), float(g[1])) for g in gt_segments]
        )
        best = int(np.argmax(ious))
        if ious[best] >= iou_pos:
            class_target[i] = int(gt_labels[best])
            offset_target[i, 0] = gt_segments[best, 0] - t_s
            offset_target[i, 1] = gt_segments[best, 1] - t_e
        elif ious[best] > iou_neg:
            weight[i] = 0.0
    return AnchorTargets(class_target, offset_target, weight)


def stack_targets(targets: list[AnchorTargets]) -> AnchorTargets:
    return AnchorTargets(
        class_target=np.stack([t.class_target for t in targets]),
        offset_target=np.stack([t.offset_target for t in targets]),
        weight=np.stack([t.weight for t in targets]),
    )


def tal_loss(
    output: HeadOutput,
    targets: AnchorTargets,
    num_classes: int,
    regression_weight: float = 1.0,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted cross-entropy over anchors plus smooth-L1 on positive offsets.

    Positive anchors are a sliver of the anchor set, so their cross-entropy
    weight is boosted until background holds at most 3x the positive mass;
    otherwise "everything is background" is a loss minimum. Returns (scalar
    loss, breakdown); the regression entry already includes
    regression_weight, so the breakdown sums to the total.
    """
    dtype = output.logits.dtype
    class_t = torch.as_tensor(targets.class_target).reshape(-1)
    offset_t = torch.as_tensor(targets.offset_target, dtype=dtype).reshape(-1, 2)
    weight = torch.as_tensor(targets.weight, dtype=dtype).reshape(-1)
    logits = output.logits.reshape(-1, num_classes + 1)
    offsets = output.offsets.reshape(-1, 2)
    if logits.shape[0] != class_t.shape[0]:
        raise ShapeError(
            f"{logits.shape[0]} anchor rows vs {class_t.shape[0]} targets; did L change without rebind?"
        )
    used = weight > 0
    if not bool(used.any()):
        raise ValidationError("every anchor is ignored; loss is undefined")
    positive = used & (class_t < num_classes)
    pos_mass = float((weight * positive).sum())
    neg_mass = float((weight * (used & ~positive)).sum())
    if pos_mass > 0:
        boost = max(1.0, neg_mass / (3.0 * pos_mass))
        weight = torch.where(positive, weight * boost, weight)
    per_anchor_ce = nn.functional.cross_entropy(logits, class_t, reduction="none")
    ce = (per_anchor_ce * weight).sum() / weight.sum()
    if bool(positive.any()):
        reg = nn.functional.smooth_l1_loss(offsets[positive], offset_t[positive])
    else:
        reg = torch.zeros((), dtype=dtype)
    reg = regression_weight * reg
    total = ce + reg
    breakdown = {
        "classification": float(ce.detach()),
        "regression": float(reg.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown


class ClassificationHead(nn.Module):
    """Linear classifier over globally pooled encoder features (pretraining)."""

    def __init__(self, feature_dim: int, num_classes: int, seed: int = 0):
        super().__init__()
        if num_classes < 2:
            raise ValidationError(f"classification needs >= 2 classes, got {num_classes}")
        self.num_classes = num_classes
        gen = torch.Generator().manual_seed(seed)
        self.fc = nn.Linear(feature_dim, num_classes)
        with torch.no_grad():
            self.fc.weight.copy_(
                torch.randn(self.fc.weight.shape, generator=gen) * (1.0 / feature_dim) ** 0.5
            )
            self.fc.bias.zero_()

    def forward(self, frame_features: torch.Tensor) -> torch.Tensor:
        if frame_features.ndim != 4:
            raise ShapeError(f"expected (B, L, F, C), got {tuple(frame_features.shape)}")
        pooled = frame_features.mean(dim=(1, 2))
        return self.fc(pooled.to(self.fc.weight.dtype))


def classification_loss(logits: torch.Tensor, labels: np.ndarray | torch.Tensor) -> torch.Tensor:
    labels = torch.as_tensor(np.asarray(labels), dtype=torch.int64)
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[-1]):
        raise ValidationError(
            f"label out of range for {logits.shape[-1]} classes: {int(labels.min())}..{int(labels.max())}"
        )
    return nn.functional.cross_entropy(logits, labels)


def decode_predictions(
    output: HeadOutput,
    grid: TimeGrid,
    duration: float,
    item: int = 0,
) -> list[Prediction]:
    """Turn one batch item's head output into scored segments in seconds.

    Background-argmax anchors are dropped; refined boundaries are clamped to
    [0, duration] and anything degenerate (end <= start) is dropped too.
    """
    logits = output.logits[item].detach().to(torch.float64)
    offsets = output.offsets[item].detach().to(torch.float64).numpy()
    probs = torch.softmax(logits, dim=-1).numpy()
    background = probs.shape[1] - 1
    labels = probs.argmax(axis=1)
    keep = np.flatnonzero(labels != background)
    # grid.seconds applied elementwise, then clamped to the video
    start = (grid.lo + (output.anchors[keep, 0] + offsets[keep, 0]) * grid.step) / grid.fps
    end = (grid.lo + (output.anchors[keep, 1] + offsets[keep, 1]) * grid.step) / grid.fps
    start = np.minimum(np.maximum(start, 0.0), duration)
    end = np.minimum(np.maximum(end, 0.0), duration)
    valid = end > start
    return [
        Prediction(
            segment=Segment(float(s), float(e)),
            label=int(labels[a]),
            score=float(probs[a, labels[a]]),
        )
        for a, s, e in zip(keep[valid], start[valid], end[valid])
    ]


def state_checksum(module: nn.Module) -> str:
    """Order-stable sha256 over every parameter and buffer tensor."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        digest.update(name.encode("utf-8"))
        array = state[name].detach().cpu().numpy()
        digest.update(str(array.dtype).encode("utf-8"))
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()


def save_checkpoint(out_dir: str | Path, modules: dict[str, nn.Module], manifest: dict) -> Path:
    """Write each module's tensors in the flat binary format plus manifest.json.

    The manifest gains a `tensors` map (key -> file, dtype, checksum) and a
    per-module checksum; caller-provided keys are preserved.
    """
    from .tensorio import write_tensor

    out_dir = Path(out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    tensor_index = {}
    checksums = {}
    for mod_name, module in modules.items():
        checksums[mod_name] = state_checksum(module)
        for name, value in module.state_dict().items():
            key = f"{mod_name}.{name}"
            filename = key.replace("/", "_") + ".bin"
            array = value.detach().cpu().numpy()
            write_tensor(array.astype(np.float32), out_dir / "tensors" / filename)
            tensor_index[key] = {"file": f"tensors/{filename}", "dtype": str(array.dtype)}
    payload = dict(manifest)
    payload["tensors"] = tensor_index
    payload["checksums"] = checksums
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_checkpoint(ckpt_dir: str | Path, modules: dict[str, nn.Module]) -> dict:
    """Restore module tensors written by save_checkpoint; returns the manifest."""
    from .tensorio import read_tensor

    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / "manifest.json").read_text(encoding="utf-8"))
    for mod_name, module in modules.items():
        state = {}
        for name, value in module.state_dict().items():
            key = f"{mod_name}.{name}"
            if key not in manifest["tensors"]:
                raise ValidationError(f"checkpoint at {ckpt_dir} is missing tensor {key}")
            entry = manifest["tensors"][key]
            array = read_tensor(ckpt_dir / entry["file"]).astype(entry["dtype"])
            state[name] = torch.as_tensor(array).reshape(value.shape)
        module.load_state_dict(state)
    return manifest
