"""Command-line pipeline: generate, train, evaluate, or run everything.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, PainforgeError
from .evaluation import evaluate_model
from .facesynth.dataset import build_dataset, demographic_summary, read_rows
from .fileio import file_sha256, write_manifest
from .rng import STREAM_SPLIT, keyed_rng
from .training import train_student, train_teacher

TABLE_ROWS = (("Baseline", "baseline"),
              ("+AU-Query", "auquery"),
              ("+AU-Query+Heatmap", "distilled"),
              ("Teacher", "teacher"))


class RunLedger:
    """Append-only record tying every stage's outputs to its config hash."""

    def __init__(self, out_root: Path):
        self.path = Path(out_root) / "ledger.jsonl"

    def append(self, stage: str, config_hash: str, seed: int,
               input_manifest: str | None, outputs: list[str],
               wall_time_s: float) -> None:
        record = {"stage": stage, "config_hash": config_hash, "seed": seed,
                  "input_manifest_hash": (file_sha256(input_manifest)
                                          if input_manifest else None),
                  "outputs": [str(p) for p in outputs],
                  "wall_time_s": round(wall_time_s, 3)}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _print_summary(rows) -> None:
    summary = demographic_summary(rows)
    frames = len(rows)
    heatmaps = len({r["heatmap_path"] for r in rows if r["heatmap_path"]})
    print(f"frames: {frames}")
    print(f"heatmaps: {heatmaps}")
    print(f"identities: {summary['total']}")
    for category in ("age", "ethnicity", "gender"):
        entries = ", ".join(f"{k} {v}" for k, v in sorted(summary[category].items()))
        print(f"  {category}: {entries}")


def cmd_generate(args) -> int:
    config = load_config(args.config).override(**{
        "seed": args.seed, "out": args.out})
    out_root = config.out_root
    data_dir = out_root / "data"
    t0 = time.perf_counter()
    manifest = build_dataset(config.dataset_spec(), data_dir, resume=args.resume)
    rows = read_rows(manifest)
    _print_summary(rows)
    print(f"manifest: {manifest}")
    RunLedger(out_root).append("generate", config.hash(), config.seed, None,
                               [manifest], time.perf_counter() - t0)
    return 0


def _train_dispatch(role: str, config: RunConfig, manifest: Path,
                    teacher_ckpt, out_dir: Path, seed: int):
    train_config = config.train_config(seed=seed)
    weights = config.loss_weights()
    if role == "teacher":
        return train_teacher(manifest, out_dir,
                             model_config=config.model_config(in_channels=1),
                             train_config=train_config, loss_weights=weights)
    use_queries = role != "baseline"
    return train_student(manifest, out_dir, teacher_checkpoint=teacher_ckpt,
                         model_config=config.model_config(
                             in_channels=3, use_au_queries=use_queries),
                         train_config=train_config, loss_weights=weights)


def cmd_train(args) -> int:
    if args.role == "baseline" and args.teacher:
        raise ConfigError("--role baseline does not take --teacher")
    if args.role == "teacher" and args.teacher:
        raise ConfigError("--role teacher does not take --teacher")
    config = load_config(args.config).override(**{
        "seed": args.seed, "out": args.out})
    out_dir = config.out_root / f"train_{args.role}"
    manifest = Path(args.data)
    t0 = time.perf_counter()
    ckpt, report = _train_dispatch(args.role, config, manifest, args.teacher,
                                   out_dir, config.seed)
    print(f"checkpoint: {ckpt}")
    if report.best_val_macro_auroc is not None:
        print(f"best validation macro AUROC: {report.best_val_macro_auroc:.4f} "
              f"(epoch {report.best_epoch})")
    RunLedger(config.out_root).append(
        f"train_{args.role}", config.hash(), config.seed, str(manifest),
        [str(ckpt), str(out_dir / 'train_report.jsonl')],
        time.perf_counter() - t0)
    return 0


def _print_metrics_table(rows: list[tuple[str, dict]]) -> None:
    header = f"{'model':>22} | {'macroAUROC':>10} | {'acc':>6} | {'acc±1':>6} | {'acc±2':>6}"
    print(header)
    print("-" * len(header))
    for name, block in rows:
        print(f"{name:>22} | {block['macro_auroc']:>10.4f} | "
              f"{block['acc_exact']:>6.3f} | {block['acc_tol1']:>6.3f} | "
              f"{block['acc_tol2']:>6.3f}")


def cmd_evaluate(args) -> int:
    thresholds = tuple(int(t) for t in args.thresholds.split(","))
    t0 = time.perf_counter()
    report = evaluate_model(args.ckpt, args.data,
                            k_folds=None if args.holdout else args.folds,
                            thresholds=thresholds, seed=args.seed or 0)
    out_path = Path(args.out) if args.out else Path(args.ckpt).parent / "eval_report.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    blocks = [("aggregate", report["aggregate"])]
    blocks += [(f"fold {b['fold']}", b) for b in report["folds"]]
    _print_metrics_table(blocks)
    for threshold in thresholds:
        entry = report["overall"]["binary"][str(threshold)]
        auroc = "n/a" if entry["auroc"] is None else f"{entry['auroc']:.4f}"
        print(f"binary @ PSPI >= {threshold}: AUROC {auroc}, "
              f"F1@0.5 {entry['f1_at_0.5']:.4f}, best F1 {entry['f1_best']:.4f}")
    print(f"report: {out_path}")
    RunLedger(out_path.parent).append("evaluate", "-", args.seed or 0,
                                      str(args.data), [str(out_path)],
                                      time.perf_counter() - t0)
    return 0


def _subject_holdout_split(rows, seed: int, fraction: float = 0.2):
    subjects = sorted({r["split_subject_id"] for r in rows})
    rng = keyed_rng(seed, STREAM_SPLIT, 999)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n_test = min(len(subjects) - 1, max(1, round(fraction * len(subjects))))
    test = set(order[:n_test])
    return ([r for r in rows if r["split_subject_id"] not in test],
            [r for r in rows if r["split_subject_id"] in test])


def cmd_pipeline(args) -> int:
    config = load_config(args.config).override(**{"out": args.out})
    out_root = config.out_root
    ledger = RunLedger(out_root)
    stage = "generate"
    try:
        t0 = time.perf_counter()
        manifest = build_dataset(config.dataset_spec(), out_root / "data",
                                 resume=True)
        rows = read_rows(manifest)
        _print_summary(rows)
        ledger.append("generate", config.hash(), config.seed, None, [manifest],
                      time.perf_counter() - t0)

        train_rows, test_rows = _subject_holdout_split(rows, config.seed)
        train_manifest = out_root / "data" / "manifest_train.jsonl"
        test_manifest = out_root / "data" / "manifest_test.jsonl"
        write_manifest(train_manifest, train_rows)
        write_manifest(test_manifest, test_rows)

        checkpoints = {}
        for stage_name in ("teacher", "baseline", "auquery", "distilled"):
            stage = f"train_{stage_name}"
            t0 = time.perf_counter()
            teacher_ckpt = checkpoints["teacher"] if stage_name == "distilled" else None
            role = {"teacher": "teacher", "baseline": "baseline",
                    "auquery": "student", "distilled": "student"}[stage_name]
            ckpt, report = _train_dispatch(role, config, train_manifest,
                                           teacher_ckpt, out_root / stage,
                                           config.seed)
            checkpoints[stage_name] = ckpt
            ledger.append(stage, config.hash(), config.seed, str(train_manifest),
                          [str(ckpt)], time.perf_counter() - t0)
            print(f"{stage} done")

        stage = "evaluate"
        t0 = time.perf_counter()
        table = []
        final = {"config_hash": config.hash(), "seed": config.seed, "models": {}}
        for label, key in TABLE_ROWS:
            report = evaluate_model(checkpoints[key], test_manifest)
            final["models"][key] = report
            table.append((label, report["overall"]))
        final_path = out_root / "final_report.json"
        final_path.write_text(json.dumps(final, sort_keys=True, indent=1) + "\n")
        _print_metrics_table(table)
        print(f"final report: {final_path}")
        ledger.append(stage, config.hash(), config.seed, str(test_manifest),
                      [str(final_path)], time.perf_counter() - t0)
        return 0
    except PainforgeError as exc:
        print(f"pipeline failed at stage {stage}: {exc}", file=sys.stderr)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="painforge",
        description="Synthetic facial pain data generation, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a dataset and write its manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model role")
    p.add_argument("--role", required=True, choices=["teacher", "student", "baseline"])
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--teacher", default=None, help="teacher checkpoint for distillation")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--folds", type=int, default=None)
    group.add_argument("--holdout", action="store_true")
    p.add_argument("--thresholds", default="2,3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="generate, train all roles, evaluate")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PainforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
