"""Supervised and cross-modal distillation training.

The teacher learns from displacement heatmaps; the student learns from RGB
renders while matching the teacher at three levels: temperature-softened
score distributions, action-unit predictions, and CLS features. Teacher
outputs are precomputed once in eval mode, so a distillation run with all
distillation weights at zero is step-for-step identical to a supervised run.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, DimensionError, MetricError
from .fileio import dump_json_line, read_manifest
from .facesynth.dataset import load_heatmap, load_rgb
from .metrics import macro_auroc
from .model import (ModelConfig, ModelOutput, ModelParams, forward,
                    init_params, load_checkpoint, predict, save_checkpoint)
from .optim import adamw_step, cosine_lr, init_optim_state
from .rng import STREAM_SHUFFLE, STREAM_SPLIT, keyed_rng
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    pspi: float = 1.0
    au: float = 1.0
    pspi_distill: float = 0.1
    au_distill: float = 0.3
    feature_distill: float = 0.5
    temperature: float = 4.0

    def __post_init__(self):
        for name in ("pspi", "au", "pspi_distill", "au_distill", "feature_distill"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    freeze_epochs: int = 5
    lr_backbone: float = 5e-6
    lr_heads: float = 5e-5
    floor_fraction: float = 0.01
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 <= self.freeze_epochs <= max(self.epochs, 1):
            raise ConfigError(
                f"freeze_epochs {self.freeze_epochs} must not exceed epochs {self.epochs}")
        if self.lr_backbone <= 0 or self.lr_heads <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TeacherSignals:
    """Detached teacher outputs aligned to a student batch."""

    pspi_logits: Tensor
    au_pred: Tensor
    cls_feature: Tensor


@dataclass
class TrainReport:
    role: str
    seed: int
    train_config: dict
    loss_weights: dict
    model_config: dict
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    best_val_macro_auroc: float | None = None
    wall_clock_s: float = 0.0

    def canonical_lines(self) -> list[str]:
        """Deterministic serialization; wall-clock goes in a sidecar file."""
        meta = {"type": "meta", "role": self.role, "seed": self.seed,
                "train_config": self.train_config,
                "loss_weights": self.loss_weights,
                "model_config": self.model_config,
                "best_epoch": self.best_epoch,
                "best_val_macro_auroc": self.best_val_macro_auroc}
        lines = [dump_json_line(meta)]
        lines += [dump_json_line({"type": "epoch", **rec}) for rec in self.epochs]
        return lines

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(line + "\n" for line in self.canonical_lines()))
        Path(str(path) + ".timing.json").write_text(
            json.dumps({"wall_clock_s": self.wall_clock_s}) + "\n")
        return path


TERM_NAMES = ("pspi", "au", "pspi_distill", "au_distill", "feature_distill")


def compose_loss(student_out: ModelOutput, teacher_out, labels: dict,
                 weights: LossWeights):
    """Weighted sum of the supervised and distillation objectives.

    ``teacher_out`` may be None (distillation terms drop out) or any object
    with pspi_logits / au_pred / cls_feature tensors, which are detached here.
    Returns (total loss tensor, per-term float breakdown).
    """
    pspi_labels = np.asarray(labels["pspi"], dtype=np.int64)
    au_labels = np.asarray(labels["au"], dtype=np.float64)
    if au_labels.shape != student_out.au_pred.shape:
        raise DimensionError(
            f"AU labels {au_labels.shape} do not match predictions "
            f"{student_out.au_pred.shape}")

    computed = {
        "pspi": T.cross_entropy(student_out.pspi_logits, pspi_labels),
        "au": T.mse(student_out.au_pred, Tensor(au_labels)),
    }
    if teacher_out is not None:
        computed["pspi_distill"] = T.kl_temperature(
            teacher_out.pspi_logits.detach(), student_out.pspi_logits,
            weights.temperature)
        computed["au_distill"] = T.mse(student_out.au_pred,
                                       teacher_out.au_pred.detach())
        computed["feature_distill"] = T.mse(student_out.cls_feature,
                                            teacher_out.cls_feature.detach())

    total = None
    terms = {}
    for name in TERM_NAMES:
        weight = getattr(weights, name)
        if name in computed:
            terms[name] = computed[name].item()
        else:
            terms[name] = 0.0
        # Zero-weight terms are skipped entirely so the computation graph of a
        # weightless distillation run matches the supervised run bit for bit.
        if name in computed and weight != 0.0:
            piece = T.mul(computed[name], weight)
            total = piece if total is None else T.add(total, piece)
    if total is None:
        total = Tensor(np.zeros(()))
    terms["total"] = total.item()
    return total, terms


def pair_modalities(rows: list[dict]) -> list[tuple[dict, str | None]]:
    """Pair every RGB frame with its expression's frontal heatmap path.

    Neutral frames pair with None, meaning an all-zero heatmap. A rigged frame
    without a heatmap path is a corrupt manifest and raises DataError.
    """
    pairs = []
    for row in rows:
        if row["expression_id"] is None:
            pairs.append((row, None))
        elif row["heatmap_path"]:
            pairs.append((row, row["heatmap_path"]))
        else:
            raise DataError(
                "manifest row is missing its heatmap: identity "
                f"{row['identity_id']}, expression {row['expression_id']}, "
                f"view {row['view_id']}")
    return pairs


def _teacher_training_rows(rows: list[dict]) -> list[dict]:
    """One row per (identity, expression) that has a heatmap, manifest order."""
    seen = set()
    out = []
    for row in rows:
        if row["expression_id"] is None:
            continue
        if not row["heatmap_path"]:
            raise DataError(
                f"rigged row lacks a heatmap path: identity {row['identity_id']}, "
                f"expression {row['expression_id']}")
        key = (row["identity_id"], row["expression_id"])
        if key not in seen:
            seen.add(key)
            out.append(row)
    if not out:
        raise DataError("manifest has no heatmap rows to train a teacher on")
    return out


def _labels_of(rows: list[dict]):
    pspi = np.array([r["pspi"] for r in rows], dtype=np.int64)
    au = np.array([r["au"] for r in rows], dtype=np.float64)
    subjects = np.array([r["split_subject_id"] for r in rows], dtype=np.int64)
    return pspi, au, subjects


def _check_resolution(inputs: np.ndarray, config: ModelConfig) -> None:
    if inputs.shape[1] != config.image_size or inputs.shape[2] != config.image_size:
        raise ConfigError(
            f"data resolution {inputs.shape[1]}x{inputs.shape[2]} does not "
            f"match model config {config.image_size}x{config.image_size}")


def _identity_split(subjects: np.ndarray, fraction: float, seed: int):
    """Deterministic identity-disjoint train/validation index split."""
    distinct = sorted(set(subjects.tolist()))
    if fraction <= 0 or len(distinct) < 2:
        return np.arange(subjects.size), np.array([], dtype=np.int64)
    rng = keyed_rng(seed, STREAM_SPLIT)
    order = [distinct[i] for i in rng.permutation(len(distinct))]
    n_val = min(len(distinct) - 1, max(1, round(fraction * len(distinct))))
    val_subjects = set(order[:n_val])
    val_mask = np.isin(subjects, list(val_subjects))
    return np.nonzero(~val_mask)[0], np.nonzero(val_mask)[0]


def _train_loop(role: str, inputs: np.ndarray, pspi: np.ndarray, au: np.ndarray,
                subjects: np.ndarray, teacher_arrays, model_config: ModelConfig,
                config: TrainConfig, weights: LossWeights, out_dir: Path):
    t_start = time.perf_counter()
    params = init_params(model_config, config.seed)
    group_of = {n: "backbone" for n in params.backbone_names()}
    group_of.update({n: "heads" for n in params.head_names()})
    state = init_optim_state(params.numpy_state(), group_of, config.weight_decay)

    train_idx, val_idx = _identity_split(subjects, config.val_fraction, config.seed)
    report = TrainReport(role=role, seed=config.seed,
                         train_config=config.to_dict(),
                         loss_weights=weights.to_dict(),
                         model_config=model_config.to_dict())

    ckpt_dir = out_dir / "checkpoint"
    best_auroc = -np.inf
    save_checkpoint(params, ckpt_dir)  # initialization; overwritten on improvement

    def validation_auroc() -> float | None:
        if val_idx.size == 0:
            return None
        probs, _, _ = predict(inputs[val_idx], params, config.batch_size)
        try:
            return macro_auroc(probs, pspi[val_idx])
        except MetricError:
            return None

    global_step = 0
    for epoch in range(config.epochs):
        lr = {"backbone": cosine_lr(epoch, config.epochs, config.lr_backbone,
                                    config.floor_fraction),
              "heads": cosine_lr(epoch, config.epochs, config.lr_heads,
                                 config.floor_fraction)}
        frozen = epoch < config.freeze_epochs
        trainable = params.head_names() if frozen else list(params.tensors)

        order = train_idx[keyed_rng(config.seed, STREAM_SHUFFLE, epoch)
                          .permutation(train_idx.size)]
        term_sums: dict = {}
        n_batches = 0
        for lo in range(0, order.size, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            out = forward(inputs[batch], params, training=True,
                          run_seed=config.seed, step=global_step)
            teacher_out = None
            if teacher_arrays is not None:
                teacher_out = TeacherSignals(
                    pspi_logits=Tensor(teacher_arrays["pspi_logits"][batch]),
                    au_pred=Tensor(teacher_arrays["au_pred"][batch]),
                    cls_feature=Tensor(teacher_arrays["cls_feature"][batch]))
            total, terms = compose_loss(out, teacher_out,
                                        {"pspi": pspi[batch], "au": au[batch]},
                                        weights)
            total.backward()
            grads = {n: params.tensors[n].grad for n in trainable
                     if params.tensors[n].grad is not None}
            params.replace(adamw_step(params.numpy_state(), grads, state, lr,
                                      betas=config.betas,
                                      weight_decay=config.weight_decay))
            for name, value in terms.items():
                term_sums[name] = term_sums.get(name, 0.0) + value
            n_batches += 1
            global_step += 1

        record = {"epoch": epoch, "lr_backbone": lr["backbone"],
                  "lr_heads": lr["heads"], "backbone_frozen": frozen}
        for name, value in term_sums.items():
            record[f"loss_{name}"] = value / max(n_batches, 1)
        val = validation_auroc()
        record["val_macro_auroc"] = val
        report.epochs.append(record)
        if val is not None and val > best_auroc:
            best_auroc = val
            report.best_epoch = epoch
            report.best_val_macro_auroc = val
            save_checkpoint(params, ckpt_dir)

    if report.best_epoch is None and config.epochs > 0:
        # No usable validation signal; keep the final parameters.
        save_checkpoint(params, ckpt_dir)
    report.wall_clock_s = time.perf_counter() - t_start
    report.save(out_dir / "train_report.jsonl")
    return ckpt_dir, report


def _load_stack(loader, rows, root) -> np.ndarray:
    return np.stack([loader(root, row) for row in rows])


def train_teacher(manifest_path, out_dir, model_config: ModelConfig | None = None,
                  train_config: TrainConfig | None = None,
                  loss_weights: LossWeights | None = None):
    """Supervised training on frontal heatmaps, one sample per expression."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    rows = _teacher_training_rows(read_manifest(manifest_path))
    config = train_config or TrainConfig()
    weights = loss_weights or LossWeights()
    model_config = dataclasses.replace(model_config or ModelConfig(), in_channels=1)

    inputs = np.stack([load_heatmap(root, row, model_config.image_size)[..., None]
                       for row in rows])
    _check_resolution(inputs, model_config)
    pspi, au, subjects = _labels_of(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _train_loop("teacher", inputs, pspi, au, subjects, None,
                       model_config, config, weights, out)


def _precompute_teacher_signals(pairs, root, teacher: ModelParams,
                                batch_size: int):
    """Teacher outputs per unique heatmap, gathered back per student frame."""
    resolution = teacher.config.image_size
    unique_paths = []
    index_of = {}
    for _, heatmap_path in pairs:
        key = heatmap_path or "__zero__"
        if key not in index_of:
            index_of[key] = len(unique_paths)
            unique_paths.append(heatmap_path)

    stacked = np.stack([
        (np.zeros((resolution, resolution)) if p is None
         else load_heatmap(root, {"heatmap_path": p}, resolution))[..., None]
        for p in unique_paths])
    logits, au_pred, cls = [], [], []
    for lo in range(0, stacked.shape[0], batch_size):
        out = forward(stacked[lo:lo + batch_size], teacher, training=False)
        logits.append(out.pspi_logits.data)
        au_pred.append(out.au_pred.data)
        cls.append(out.cls_feature.data)
    logits = np.concatenate(logits)
    au_pred = np.concatenate(au_pred)
    cls = np.concatenate(cls)

    gather = np.array([index_of[p or "__zero__"] for _, p in pairs])
    return {"pspi_logits": logits[gather], "au_pred": au_pred[gather],
            "cls_feature": cls[gather]}


def train_student(manifest_path, out_dir, teacher_checkpoint=None,
                  model_config: ModelConfig | None = None,
                  train_config: TrainConfig | None = None,
                  loss_weights: LossWeights | None = None):
    """RGB training; with a teacher checkpoint, adds three-level distillation.

    Without a teacher this is the supervised baseline: same data, same seeds,
    same parameter trajectory as a distillation run whose weights are zero.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    rows = read_manifest(manifest_path)
    config = train_config or TrainConfig()
    weights = loss_weights or LossWeights()
    model_config = dataclasses.replace(model_config or ModelConfig(), in_channels=3)

    inputs = _load_stack(load_rgb, rows, root)
    _check_resolution(inputs, model_config)
    pspi, au, subjects = _labels_of(rows)

    teacher_arrays = None
    role = "student_baseline"
    if teacher_checkpoint is not None:
        teacher = load_checkpoint(teacher_checkpoint)
        if teacher.config.hidden_dim != model_config.hidden_dim:
            raise ConfigError(
                f"teacher hidden dim {teacher.config.hidden_dim} does not match "
                f"student {model_config.hidden_dim}; CLS features cannot align")
        pairs = pair_modalities(rows)
        teacher_arrays = _precompute_teacher_signals(pairs, root, teacher,
                                                     config.batch_size)
        role = "student_distilled"

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _train_loop(role, inputs, pspi, au, subjects, teacher_arrays,
                       model_config, config, weights, out)
