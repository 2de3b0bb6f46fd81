"""Checkpoint evaluation against a dataset manifest."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fileio import read_manifest
from .facesynth.dataset import load_heatmap, load_rgb
from .metrics import FoldPlan, PredictionSet, evaluation_report, subject_kfold
from .model import load_checkpoint, predict


def _rows_for_modality(rows: list[dict], in_channels: int) -> list[dict]:
    if in_channels == 3:
        return rows
    # Heatmap models see one sample per expression, frontal heatmaps only.
    seen = set()
    out = []
    for row in rows:
        if row["expression_id"] is None or not row["heatmap_path"]:
            continue
        key = (row["identity_id"], row["expression_id"])
        if key not in seen:
            seen.add(key)
            out.append(row)
    return out


def prediction_set_from_manifest(params, manifest_path,
                                 batch_size: int = 64) -> PredictionSet:
    """Run eval-mode inference over every applicable manifest row."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    rows = _rows_for_modality(read_manifest(manifest_path),
                              params.config.in_channels)
    if not rows:
        raise ConfigError("manifest has no rows usable by this checkpoint")
    if params.config.in_channels == 1:
        inputs = np.stack([load_heatmap(root, r, params.config.image_size)[..., None]
                           for r in rows])
    else:
        inputs = np.stack([load_rgb(root, r) for r in rows])
    if inputs.shape[1] != params.config.image_size:
        raise ConfigError(
            f"data resolution {inputs.shape[1]} does not match checkpoint "
            f"resolution {params.config.image_size}")
    probs, au_pred, _ = predict(inputs, params, batch_size)
    return PredictionSet(
        pspi_probs=probs,
        au_pred=au_pred,
        true_pspi=np.array([r["pspi"] for r in rows], dtype=np.int64),
        true_au=np.array([r["au"] for r in rows], dtype=np.float64),
        subject_id=np.array([r["split_subject_id"] for r in rows], dtype=np.int64))


def evaluate_model(checkpoint_dir, manifest_path, fold_plan: FoldPlan | None = None,
                   k_folds: int | None = None, thresholds=(2, 3),
                   batch_size: int = 64, seed: int = 0) -> dict:
    """Inference plus the full metric battery, per fold and aggregated.

    Pass either an explicit ``fold_plan``, ``k_folds`` to derive one from the
    manifest's subjects, or neither for a single holdout block.
    """
    params = load_checkpoint(checkpoint_dir)
    pred = prediction_set_from_manifest(params, manifest_path, batch_size)
    if fold_plan is None and k_folds is not None:
        fold_plan = subject_kfold(pred.subject_id.tolist(), k_folds, seed)
    report = evaluation_report(pred, fold_plan, thresholds)
    report["checkpoint_config"] = params.config.to_dict()
    return report
