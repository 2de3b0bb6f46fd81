"""Deterministic, resumable dataset generation.

Every identity derives its own seed stream, so generation is reproducible
per identity and identities can be rendered in parallel. A run writes one
tensor file per frame (RGB) plus one frontal heatmap per expression, then a
line-oriented JSON manifest tying frames to labels and demographics.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..fileio import load_tensor, read_manifest, save_tensor, write_manifest
from ..rng import STREAM_PSPI_TARGET, derive_seed, keyed_rng
from .au import NUM_PSPI_CLASSES, AUVector, pspi_score, sample_au_config
from .demographics import (DemographicProfile, reference_config,
                           sample_demographics, scale_config)
from .mesh import FaceMesh, apply_au_rig, make_identity_mesh
from .render import render_heatmap, render_rgb

DEFAULT_VIEWS = (-30.0, 0.0, 30.0)
HEATMAP_YAW = 0.0  # heatmaps are rendered at the frontal view only


@dataclass(frozen=True)
class DatasetSpec:
    identities: int = 8
    expressions_per_identity: int = 2
    views: tuple = DEFAULT_VIEWS
    resolution: int = 64
    pspi_distribution: tuple = tuple([1.0 / NUM_PSPI_CLASSES] * NUM_PSPI_CLASSES)
    seed: int = 0

    def __post_init__(self):
        if self.identities < 1 or self.expressions_per_identity < 1:
            raise ConfigError("identity and expression counts must be >= 1")
        if len(self.views) < 1:
            raise ConfigError("need at least one camera view")
        dist = np.asarray(self.pspi_distribution, dtype=float)
        if dist.shape != (NUM_PSPI_CLASSES,):
            raise ConfigError(
                f"pspi_distribution needs {NUM_PSPI_CLASSES} entries, got {dist.shape}")
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ConfigError("pspi_distribution must be nonnegative and sum to 1")

    @property
    def frames_total(self) -> int:
        return self.identities * (self.expressions_per_identity + 1) * len(self.views)

    @property
    def heatmaps_total(self) -> int:
        return self.identities * self.expressions_per_identity


@dataclass
class Sample:
    """One dataset record, fully materialized in memory."""

    identity_id: int
    view_id: int
    camera_yaw: float
    rgb: np.ndarray
    au: AUVector
    pspi: int
    demographic: DemographicProfile
    heatmap: np.ndarray | None = None
    expression_id: int | None = None


def _expression_plan(seed: int, identity: int, count: int,
                     distribution) -> list[AUVector]:
    rng = keyed_rng(seed, STREAM_PSPI_TARGET, identity)
    dist = np.asarray(distribution, dtype=float)
    targets = rng.choice(NUM_PSPI_CLASSES, size=count, p=dist / dist.sum())
    return [sample_au_config(int(t), derive_seed(seed, 23, identity, e))
            for e, t in enumerate(targets)]


def _identity_paths(spec: DatasetSpec, identity: int) -> list[str]:
    paths = []
    for view in range(len(spec.views)):
        paths.append(f"frames/id{identity:05d}_neutral_v{view}.p3dt")
    for e in range(spec.expressions_per_identity):
        for view in range(len(spec.views)):
            paths.append(f"frames/id{identity:05d}_x{e:03d}_v{view}.p3dt")
        paths.append(f"heatmaps/id{identity:05d}_x{e:03d}.p3dt")
    return paths


def _identity_rows(spec: DatasetSpec, identity: int,
                   profile: DemographicProfile, plan: list[AUVector]) -> list[dict]:
    zero = AUVector()
    rows = []

    def row(expression_id, view_id, au, heatmap_path):
        if expression_id is None:
            rgb = f"frames/id{identity:05d}_neutral_v{view_id}.p3dt"
        else:
            rgb = f"frames/id{identity:05d}_x{expression_id:03d}_v{view_id}.p3dt"
        return {
            "identity_id": identity,
            "expression_id": expression_id,
            "view_id": view_id,
            "camera_yaw": float(spec.views[view_id]),
            "rgb_path": rgb,
            "heatmap_path": heatmap_path,
            "au": [float(x) for x in au.as_array()],
            "pspi": pspi_score(au),
            "age_group": profile.age_group,
            "ethnicity": profile.ethnicity,
            "gender": profile.gender,
            "split_subject_id": identity,
        }

    for view in range(len(spec.views)):
        rows.append(row(None, view, zero, None))
    for e, au in enumerate(plan):
        heatmap_path = f"heatmaps/id{identity:05d}_x{e:03d}.p3dt"
        for view in range(len(spec.views)):
            rows.append(row(e, view, au, heatmap_path))
    return rows


def _render_identity(spec: DatasetSpec, identity: int,
                     profile: DemographicProfile, plan: list[AUVector],
                     out_dir: str) -> None:
    out = Path(out_dir)
    mesh = make_identity_mesh(profile)

    def write_rgb(mesh_variant: FaceMesh, rel: str, yaw: float):
        img = render_rgb(mesh_variant, profile, yaw, spec.resolution)
        save_tensor(out / rel, img.astype(np.float32))

    for view, yaw in enumerate(spec.views):
        write_rgb(mesh, f"frames/id{identity:05d}_neutral_v{view}.p3dt", yaw)
    for e, au in enumerate(plan):
        rigged = apply_au_rig(mesh, au)
        for view, yaw in enumerate(spec.views):
            write_rgb(rigged, f"frames/id{identity:05d}_x{e:03d}_v{view}.p3dt", yaw)
        heat = render_heatmap(mesh, rigged, HEATMAP_YAW, spec.resolution)
        save_tensor(out / f"heatmaps/id{identity:05d}_x{e:03d}.p3dt",
                    heat.astype(np.float32))


def _render_identity_star(args) -> None:
    _render_identity(*args)


def build_dataset(spec: DatasetSpec, out_dir, demographics: dict | None = None,
                  resume: bool = False, workers: int | None = None):
    """Render the full dataset and write its manifest; returns the manifest path.

    With ``resume`` set, identities whose files all exist are skipped; content
    is deterministic per identity so a resumed build is byte-identical to an
    uninterrupted one.
    """
    out = Path(out_dir)
    try:
        (out / "frames").mkdir(parents=True, exist_ok=True)
        (out / "heatmaps").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc

    config = demographics if demographics is not None else \
        scale_config(reference_config(), spec.identities)
    profiles = sample_demographics(config, spec.seed)
    if len(profiles) != spec.identities:
        raise ConfigError(
            f"demographics config yields {len(profiles)} identities, "
            f"spec wants {spec.identities}")

    plans = [_expression_plan(spec.seed, i, spec.expressions_per_identity,
                              spec.pspi_distribution)
             for i in range(spec.identities)]

    pending = []
    for i in range(spec.identities):
        if resume and all((out / p).exists() for p in _identity_paths(spec, i)):
            continue
        pending.append((spec, i, profiles[i], plans[i], str(out)))

    if workers is None:
        workers = int(os.environ.get("PAINFORGE_THREADS", "1"))
    if workers > 1 and len(pending) > 1:
        with Pool(processes=workers) as pool:
            pool.map(_render_identity_star, pending, chunksize=1)
    else:
        for task in pending:
            _render_identity_star(task)

    rows = []
    for i in range(spec.identities):
        rows.extend(_identity_rows(spec, i, profiles[i], plans[i]))
    manifest_path = out / "manifest.jsonl"
    write_manifest(manifest_path, rows)
    return manifest_path


def load_rgb(root, row: dict) -> np.ndarray:
    return load_tensor(Path(root) / row["rgb_path"]).astype(np.float64)


def load_heatmap(root, row: dict, resolution: int) -> np.ndarray:
    """The row's heatmap, or an all-zero one for neutral frames."""
    if row["heatmap_path"] is None:
        return np.zeros((resolution, resolution))
    return load_tensor(Path(root) / row["heatmap_path"]).astype(np.float64)


def load_sample(root, row: dict) -> Sample:
    heatmap = None
    if row["heatmap_path"] is not None:
        heatmap = load_tensor(Path(root) / row["heatmap_path"]).astype(np.float64)
    au = AUVector.from_array(np.asarray(row["au"]))
    profile = DemographicProfile(age_group=row["age_group"],
                                 ethnicity=row["ethnicity"],
                                 gender=row["gender"],
                                 identity_seed=0)
    return Sample(identity_id=row["identity_id"], view_id=row["view_id"],
                  camera_yaw=row["camera_yaw"], rgb=load_rgb(root, row),
                  au=au, pspi=row["pspi"], demographic=profile,
                  heatmap=heatmap, expression_id=row["expression_id"])


def demographic_summary(rows: list[dict]) -> dict:
    """Identity-level marginal counts in the same shape as a config dict."""
    by_identity = {}
    for row in rows:
        by_identity[row["identity_id"]] = (row["age_group"], row["ethnicity"],
                                           row["gender"])
    summary = {"age": {}, "ethnicity": {}, "gender": {}}
    for age, eth, gender in by_identity.values():
        summary["age"][age] = summary["age"].get(age, 0) + 1
        summary["ethnicity"][eth] = summary["ethnicity"].get(eth, 0) + 1
        summary["gender"][gender] = summary["gender"].get(gender, 0) + 1
    summary["total"] = len(by_identity)
    return summary


def read_rows(manifest_path) -> list[dict]:
    return read_manifest(manifest_path)
