"""Command-line entry point.

One binary, seven subcommands, a single config-resolution path. Exit codes
are stable per error class:

    0  success
    2  usage error (unknown flag/subcommand)
    3  bad or unreadable config
    4  unreadable input file (dataset, checkpoint, JSON)
    5  invalid values or shapes
    6  synthetic generation failure
    7  training divergence
    8  memory-budget violation
    1  anything unexpected

Every artifact-writing subcommand archives its resolved config next to the
artifacts, so a run can be reproduced from the archive plus the seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import config as cfg
from .annotations import load_annotations, load_predictions
from .datasets import VideoDataset, split_video_ids
from .errors import (
    BudgetError,
    ConfigError,
    DivergenceError,
    GenerationError,
    ParseError,
    ShapeError,
    ValidationError,
)
from .fidelity import default_lofi_configs, memory_report
from .metrics import evaluate_predictions
from .models import (
    AnchorHead,
    ClassificationHead,
    VideoEncoder,
    load_checkpoint,
    save_checkpoint,
    state_checksum,
)
from .seeding import derive_seed
from .synthetic import SynthSpec, generate_dataset, make_trimmed_clips
from .training import (
    JsonlLogger,
    extract_features,
    postprocess_predictions,
    predict_dataset,
    run_experiment,
    stage1_acp,
    stage2_lofi,
    stage3_head,
    subset_annotations,
)

OUT_DIR_ENV = "TALKIT_OUT_DIR"

ERROR_EXIT_CODES = (
    (ConfigError, 3),
    (ParseError, 4),
    (GenerationError, 6),
    (DivergenceError, 7),
    (BudgetError, 8),
    (ShapeError, 5),
    (ValidationError, 5),
    (OSError, 4),
)


def _resolved_config(args) -> dict:
    config = cfg.load_config(args.config)
    if args.set:
        config = cfg.apply_overrides(config, args.set)
    if args.seed is not None:
        config["seed"] = int(args.seed)
    return config


def _out_dir(args, required: bool = True) -> Path | None:
    out = args.out or os.environ.get(OUT_DIR_ENV)
    if out is None:
        if required:
            raise ConfigError(f"no output directory: pass --out or set {OUT_DIR_ENV}")
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, payload: dict) -> None:
    if args.json:
        sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def _archive(config: dict, out: Path, name: str) -> str:
    path = out / name
    cfg.save_config(config, path)
    return str(path)


def _load_encoder(config: dict, plan):
    encoder = VideoEncoder(plan.encoder, seed=derive_seed(plan.seed, "encoder"))
    if config["init_checkpoint"]:
        load_checkpoint(config["init_checkpoint"], {"encoder": encoder})
    return encoder


def cmd_generate(args) -> int:
    config = _resolved_config(args)
    out = _out_dir(args)
    synth = dict(config["aux_synth" if args.role == "aux" else "synth"])
    synth["instances_per_video"] = tuple(synth["instances_per_video"])
    spec = SynthSpec(**synth)
    videos, annotations = generate_dataset(spec, out)
    artifacts = [str(out / "annotations.json"), str(out / "videos"), _archive(config, out, "generate-config.json")]
    print(f"generated {len(videos)} videos, {annotations.num_instances()} instances at {out}")
    _emit(
        args,
        {
            "command": "generate",
            "out": str(out),
            "videos": len(videos),
            "instances": annotations.num_instances(),
            "classes": list(annotations.classes),
            "artifacts": artifacts,
        },
    )
    return 0


def cmd_train_acp(args) -> int:
    config = _resolved_config(args)
    out = _out_dir(args)
    plan = cfg.build_plan(config)
    if plan.aux_dir is None:
        raise ConfigError("train-acp needs config key 'aux_dataset' (clip pretraining source)")
    aux = VideoDataset(plan.aux_dir)
    clips = make_trimmed_clips(aux, aux.annotations, plan.snippet_plan.window)
    encoder = _load_encoder(config, plan)
    classifier = ClassificationHead(
        encoder.feature_dim, len(aux.classes), seed=derive_seed(plan.seed, "classifier")
    )
    log = JsonlLogger(out / "stage1.jsonl")
    result = stage1_acp(clips, encoder, classifier, plan.stage1, plan.seed, log, plan.snippet_plan)
    ckpt = save_checkpoint(
        out / "checkpoints" / "stage1",
        {"encoder": encoder, "classifier": classifier},
        {"stage": "stage1", "mode": plan.pretrain, "seed": plan.seed},
    )
    artifacts = [str(out / "stage1.jsonl"), str(ckpt.parent), _archive(config, out, "train-config.json")]
    print(f"clip pretraining done: {len(clips)} clips, diverged={result.diverged}")
    _emit(
        args,
        {
            "command": "train-acp",
            "out": str(out),
            "clips": len(clips),
            "diverged": result.diverged,
            "encoder_checksum": state_checksum(encoder),
            "artifacts": artifacts,
        },
    )
    return 0


def cmd_train_lofi(args) -> int:
    config = _resolved_config(args)
    out = _out_dir(args)
    plan = cfg.build_plan(config)
    dataset = VideoDataset(plan.dataset_dir)
    train_ids, _ = split_video_ids(
        dataset.video_ids, plan.val_fraction, derive_seed(plan.seed, "split")
    )
    encoder = _load_encoder(config, plan)
    head = AnchorHead(
        encoder.feature_dim,
        len(dataset.classes),
        plan.full_config.num_snippets,
        plan.head_hidden,
        seed=derive_seed(plan.seed, "head"),
    )
    log = JsonlLogger(out / "stage2.jsonl")
    result = stage2_lofi(
        dataset,
        train_ids,
        encoder,
        head,
        plan.schedule,
        default_lofi_configs(plan.full_config),
        plan.stage2,
        plan.seed,
        plan.iou_pos,
        plan.iou_neg,
        log,
        plan.snippet_plan,
    )
    ckpt = save_checkpoint(
        out / "checkpoints" / "stage2",
        {"encoder": encoder, "head": head},
        {"stage": "stage2", "schedule_mode": plan.schedule.mode, "seed": plan.seed},
    )
    artifacts = [str(out / "stage2.jsonl"), str(ckpt.parent), _archive(config, out, "train-config.json")]
    print(f"joint reduced-fidelity training done over {len(train_ids)} videos, diverged={result.diverged}")
    _emit(
        args,
        {
            "command": "train-lofi",
            "out": str(out),
            "train_videos": len(train_ids),
            "diverged": result.diverged,
            "encoder_checksum": state_checksum(encoder),
            "artifacts": artifacts,
        },
    )
    return 0


def cmd_train_head(args) -> int:
    config = _resolved_config(args)
    out = _out_dir(args)
    plan = cfg.build_plan(config)
    dataset = VideoDataset(plan.dataset_dir)
    train_ids, val_ids = split_video_ids(
        dataset.video_ids, plan.val_fraction, derive_seed(plan.seed, "split")
    )
    encoder = _load_encoder(config, plan)
    encoder.requires_grad_(False)
    before = state_checksum(encoder)
    head = AnchorHead(
        encoder.feature_dim,
        len(dataset.classes),
        plan.full_config.num_snippets,
        plan.head_hidden,
        seed=derive_seed(plan.seed, "head-full"),
    )
    log = JsonlLogger(out / "stage3.jsonl")
    feats_train = extract_features(encoder, dataset, train_ids, plan.full_config, plan.snippet_plan)
    feats_val = extract_features(encoder, dataset, val_ids, plan.full_config, plan.snippet_plan)
    result = stage3_head(
        plan, dataset, encoder, train_ids, val_ids, head, None, log, feats_train, feats_val
    )
    ckpt = save_checkpoint(
        out / "checkpoints" / "stage3",
        {"encoder": encoder, "head": head},
        {"stage": "stage3", "chosen_lr": result.chosen_lr, "seed": plan.seed},
    )
    preds = predict_dataset(head, feats_val, dataset, plan.full_config, plan.snippet_plan)
    preds = postprocess_predictions(
        preds, plan.nms_threshold, plan.nms_sigma, plan.nms_method, plan.keep_top_k
    )
    from .annotations import save_predictions

    save_predictions(preds, out / "predictions.json")
    report = evaluate_predictions(preds, subset_annotations(dataset.annotations, sorted(val_ids)))
    (out / "report.json").write_text(
        json.dumps(
            {
                "mode": plan.mode_name,
                "seed": plan.seed,
                "chosen_lr": result.chosen_lr,
                "lr_table": result.table,
                "encoder_checksum_before": before,
                "encoder_checksum_after": state_checksum(encoder),
                "metrics": report.to_json_dict(),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "table.txt").write_text(report.format_table() + "\n", encoding="utf-8")
    print(report.format_table())
    print(f"chosen lr: {result.chosen_lr}")
    _emit(
        args,
        {
            "command": "train-head",
            "out": str(out),
            "chosen_lr": result.chosen_lr,
            "lr_table": result.table,
            "average_mAP": report.average_map,
            "artifacts": [
                str(out / "stage3.jsonl"),
                str(ckpt.parent),
                str(out / "predictions.json"),
                str(out / "report.json"),
                str(out / "table.txt"),
                _archive(config, out, "train-config.json"),
            ],
        },
    )
    return 0


def cmd_evaluate(args) -> int:
    config = _resolved_config(args)
    pred_path = args.predictions or config["predictions"]
    gt_path = args.annotations or config["annotations"]
    if not pred_path or not gt_path:
        raise ConfigError("evaluate needs --predictions and --annotations (flags or config keys)")
    preds = load_predictions(pred_path)
    gts = load_annotations(gt_path)
    report = evaluate_predictions(preds, gts)
    out = _out_dir(args, required=False)
    artifacts = []
    if out is not None:
        (out / "report.json").write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out / "table.txt").write_text(report.format_table() + "\n", encoding="utf-8")
        artifacts = [str(out / "report.json"), str(out / "table.txt")]
    print(report.format_table())
    _emit(
        args,
        {"command": "evaluate", "metrics": report.to_json_dict(), "artifacts": artifacts},
    )
    return 0


def cmd_plan_memory(args) -> int:
    config = _resolved_config(args)
    full = cfg.memory_full_config(config)
    cost = cfg.build_cost_model(config)
    mem = config["memory"]
    report = memory_report(
        full,
        default_lofi_configs(full),
        cost,
        int(mem["batch_size"]),
        float(mem["budget_bytes"]),
        int(mem["frames_per_snippet"]),
    )
    out = _out_dir(args, required=False)
    artifacts = []
    if out is not None:
        (out / "memory.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        artifacts = [str(out / "memory.json")]
    gib = 2**30
    print(f"{'config':>16} | {'pixels':>10} | {'est GiB':>8} | feasible")
    for name, entry in report["configs"].items():
        print(
            f"{name:>16} | {entry['pixel_volume']:>10} | {entry['estimate_bytes'] / gib:>8.1f} | "
            f"{'yes' if entry['feasible'] else 'NO'}"
        )
    payload = dict(report)
    payload.update({"command": "plan-memory", "artifacts": artifacts})
    _emit(args, payload)
    return 0


def cmd_report(args) -> int:
    config = _resolved_config(args)
    rows = []
    for run_dir in args.runs:
        path = Path(run_dir) / "report.json"
        doc = json.loads(path.read_text(encoding="utf-8"))
        metrics = doc["metrics"]
        rows.append(
            {
                "run": str(run_dir),
                "mode": doc.get("mode", "?"),
                "0.5": metrics["mAP"]["0.50"],
                "0.75": metrics["mAP"]["0.75"],
                "0.95": metrics["mAP"]["0.95"],
                "average": metrics["average_mAP"],
            }
        )
    width = max([len(r["mode"]) for r in rows] + [6])
    lines = [f"{'mode':<{width}} | {'0.5':>7} | {'0.75':>7} | {'0.95':>7} | {'Average':>7}"]
    for r in rows:
        lines.append(
            f"{r['mode']:<{width}} | {100 * r['0.5']:>7.2f} | {100 * r['0.75']:>7.2f} | "
            f"{100 * r['0.95']:>7.2f} | {100 * r['average']:>7.2f}"
        )
    table = "\n".join(lines)
    print(table)
    out = _out_dir(args, required=False)
    artifacts = []
    if out is not None:
        (out / "comparison.txt").write_text(table + "\n", encoding="utf-8")
        (out / "comparison.json").write_text(
            json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        artifacts = [str(out / "comparison.txt"), str(out / "comparison.json")]
        if args.plots:
            artifacts += _write_plots(args.runs, out)
    elif args.plots:
        raise ConfigError("--plots needs an output directory (--out or TALKIT_OUT_DIR)")
    _emit(args, {"command": "report", "rows": rows, "artifacts": artifacts})
    return 0


def _write_plots(run_dirs, out: Path) -> list[str]:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("plots need matplotlib (install the 'plots' extra)") from exc
    artifacts = []
    fig, ax = plt.subplots(figsize=(7, 4))
    kinds_fig, kinds_ax = plt.subplots(figsize=(7, 2.5))
    kind_levels = {"spatial": 0, "temporal": 1, "spatiotemporal": 2, "full": 3}
    for run_dir in run_dirs:
        run = Path(run_dir)
        label = json.loads((run / "report.json").read_text(encoding="utf-8")).get("mode", run.name)
        for stage_file in ("stage1.jsonl", "stage2.jsonl", "stage3.jsonl"):
            path = run / stage_file
            if not path.exists():
                continue
            records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
            steps = [r["step"] for r in records if "loss" in r]
            losses = [
                r["loss"]["total"] if isinstance(r.get("loss"), dict) else r.get("loss")
                for r in records
                if "loss" in r
            ]
            if steps:
                ax.plot(steps, losses, label=f"{label}:{stage_file.split('.')[0]}")
            if stage_file == "stage2.jsonl":
                ks = [(r["step"], kind_levels.get(r.get("config_kind"), -1)) for r in records if "config_kind" in r]
                if ks:
                    kinds_ax.step([k[0] for k in ks], [k[1] for k in ks], where="post", label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    loss_path = out / "loss-curves.png"
    fig.savefig(loss_path, dpi=120)
    kinds_ax.set_yticks(list(kind_levels.values()), list(kind_levels.keys()))
    kinds_ax.set_xlabel("step")
    kinds_fig.tight_layout()
    timeline_path = out / "fidelity-timeline.png"
    kinds_fig.savefig(timeline_path, dpi=120)
    plt.close(fig)
    plt.close(kinds_fig)
    return [str(loss_path), str(timeline_path)]


def cmd_run(args) -> int:
    # convenience wrapper: all stages per the plan in one process
    config = _resolved_config(args)
    out = _out_dir(args)
    plan = cfg.build_plan(config)
    result = run_experiment(plan, out)
    _archive(config, out, "train-config.json")
    print((out / "table.txt").read_text(encoding="utf-8").rstrip())
    print(f"chosen lr: {result.chosen_lr}")
    _emit(
        args,
        {
            "command": "run",
            "out": str(out),
            "mode": result.mode,
            "chosen_lr": result.chosen_lr,
            "average_mAP": result.report.average_map,
            "artifacts": [str(out / "report.json"), str(out / "predictions.json")],
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talkit",
        description="Staged low-fidelity training for temporal action localization, desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; defaults apply for absent keys")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV})")
        p.add_argument("--json", action="store_true", help="print a machine-readable summary")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key by dotted path, e.g. stage2.lr=0.05",
        )

    handlers = {
        "generate": (cmd_generate, "write a synthetic dataset"),
        "train-acp": (cmd_train_acp, "stage 1: clip-classification pretraining"),
        "train-lofi": (cmd_train_lofi, "stage 2: joint encoder+head training at reduced fidelity"),
        "train-head": (cmd_train_head, "stage 3: full-fidelity head training, frozen encoder"),
        "run": (cmd_run, "all stages end to end per the plan"),
        "evaluate": (cmd_evaluate, "score a prediction file against annotations"),
        "plan-memory": (cmd_plan_memory, "feasibility report for the memory budget"),
        "report": (cmd_report, "aggregate run directories into a comparison table"),
    }
    for name, (func, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "generate":
            p.add_argument(
                "--role",
                choices=("target", "aux"),
                default="target",
                help="which config section to draw from: synth (target) or aux_synth",
            )
        if name == "evaluate":
            p.add_argument("--predictions", help="prediction JSON (or config key 'predictions')")
            p.add_argument("--annotations", help="annotation JSON (or config key 'annotations')")
        if name == "report":
            p.add_argument("runs", nargs="+", help="run directories containing report.json")
            p.add_argument("--plots", action="store_true", help="also write loss/fidelity plots")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostics, stable codes
        for err_type, code in ERROR_EXIT_CODES:
            if isinstance(exc, err_type):
                print(f"talkit: error: {exc}", file=sys.stderr)
                return code
        print(f"talkit: unexpected error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
