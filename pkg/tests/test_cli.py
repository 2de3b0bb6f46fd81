"""Command-line interface: exit codes, artifacts, reproducibility."""

import json

import pytest

from painforge.cli import main
from painforge.config import load_config, parse_config_text
from painforge.errors import ConfigError
from painforge.fileio import file_sha256, read_manifest

TOY_CONFIG = """\
# toy run
seed = 4
dataset.identities = 8
dataset.expressions = 2
dataset.views = 0
dataset.resolution = 32
model.hidden_dim = 32
model.patch_size = 16
model.num_layers = 1
model.num_heads = 2
train.epochs = 2
train.freeze_epochs = 1
train.batch_size = 8
train.lr_backbone = 3e-4
train.lr_heads = 3e-3
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(TOY_CONFIG + f"out = {tmp_path / 'run'}\n")
    return path


class TestConfig:
    def test_hash_ignores_order_comments_whitespace(self):
        a = parse_config_text("seed = 3\ntrain.epochs = 7\n")
        b = parse_config_text("# hi\ntrain.epochs=7\n\nseed =   3\n")
        assert a.hash() == b.hash()

    def test_hash_changes_on_value_change(self):
        a = parse_config_text("seed = 3\n")
        b = parse_config_text("seed = 4\n")
        assert a.hash() != b.hash()

    def test_hash_ignores_output_root(self):
        a = parse_config_text("seed = 3\nout = runs/here\n")
        b = parse_config_text("seed = 3\nout = /elsewhere\n")
        assert a.hash() == b.hash()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("dataset.bananas = 7\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("train.epochs = many\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.cfg")

    def test_typed_views(self, config_file):
        config = load_config(config_file)
        spec = config.dataset_spec()
        assert spec.views == (0.0,)
        assert spec.identities == 8
        model = config.model_config(in_channels=1)
        assert model.in_channels == 1 and model.hidden_dim == 32


class TestGenerate:
    def test_generate_writes_manifest_and_ledger(self, config_file, tmp_path,
                                                 capsys):
        assert main(["generate", "--config", str(config_file)]) == 0
        captured = capsys.readouterr().out
        assert "frames: 24" in captured
        assert "heatmaps: 16" in captured
        run_dir = tmp_path / "run"
        rows = read_manifest(run_dir / "data" / "manifest.jsonl")
        assert len(rows) == 24
        ledger_lines = (run_dir / "ledger.jsonl").read_text().splitlines()
        record = json.loads(ledger_lines[0])
        assert record["stage"] == "generate"
        assert record["outputs"]

    def test_resume_is_noop_with_identical_hash(self, config_file, tmp_path):
        main(["generate", "--config", str(config_file)])
        manifest = tmp_path / "run" / "data" / "manifest.jsonl"
        before = file_sha256(manifest)
        assert main(["generate", "--config", str(config_file), "--resume"]) == 0
        assert file_sha256(manifest) == before

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["generate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["generate"])  # missing --config
        assert exc.value.code == 2


class TestTrainEvaluate:
    @pytest.fixture()
    def generated(self, config_file, tmp_path):
        main(["generate", "--config", str(config_file)])
        return config_file, tmp_path / "run" / "data" / "manifest.jsonl"

    def test_teacher_then_student_then_evaluate(self, generated, tmp_path, capsys):
        config_file, manifest = generated
        assert main(["train", "--role", "teacher", "--data", str(manifest),
                     "--config", str(config_file)]) == 0
        teacher_ckpt = tmp_path / "run" / "train_teacher" / "checkpoint"
        assert (teacher_ckpt / "index.json").exists()

        assert main(["train", "--role", "student", "--data", str(manifest),
                     "--teacher", str(teacher_ckpt),
                     "--config", str(config_file)]) == 0
        student_ckpt = tmp_path / "run" / "train_student" / "checkpoint"

        assert main(["evaluate", "--ckpt", str(student_ckpt),
                     "--data", str(manifest), "--folds", "4",
                     "--thresholds", "2,3"]) == 0
        out = capsys.readouterr().out
        assert "binary @ PSPI >= 2" in out and "binary @ PSPI >= 3" in out
        report = json.loads((student_ckpt.parent / "eval_report.json").read_text())
        assert len(report["folds"]) == 4

    def test_student_without_teacher_is_supervised(self, generated, tmp_path):
        config_file, manifest = generated
        assert main(["train", "--role", "student", "--data", str(manifest),
                     "--config", str(config_file)]) == 0
        report_path = tmp_path / "run" / "train_student" / "train_report.jsonl"
        meta = json.loads(report_path.read_text().splitlines()[0])
        assert meta["role"] == "student_baseline"

    def test_baseline_with_teacher_exits_2(self, generated):
        config_file, manifest = generated
        code = main(["train", "--role", "baseline", "--data", str(manifest),
                     "--teacher", "whatever", "--config", str(config_file)])
        assert code == 2

    def test_teacher_on_rgb_only_manifest_exits_1(self, generated, tmp_path):
        config_file, manifest = generated
        from painforge.fileio import write_manifest
        rows = [r for r in read_manifest(manifest) if r["expression_id"] is None]
        bad = tmp_path / "rgb_only.jsonl"
        write_manifest(bad, rows)
        assert main(["train", "--role", "teacher", "--data", str(bad),
                     "--config", str(config_file)]) == 1

    def test_same_seed_reproduces_checkpoint_bytes(self, generated, tmp_path):
        config_file, manifest = generated
        main(["train", "--role", "teacher", "--data", str(manifest),
              "--config", str(config_file), "--out", str(tmp_path / "a")])
        main(["train", "--role", "teacher", "--data", str(manifest),
              "--config", str(config_file), "--out", str(tmp_path / "b")])
        ck_a = tmp_path / "a" / "train_teacher" / "checkpoint"
        ck_b = tmp_path / "b" / "train_teacher" / "checkpoint"
        for f in sorted(ck_a.iterdir()):
            assert f.read_bytes() == (ck_b / f.name).read_bytes()


class TestPipeline:
    def test_end_to_end_table_and_report(self, tmp_path, capsys):
        config = tmp_path / "p.cfg"
        config.write_text(
            "seed = 1\n"
            "dataset.identities = 8\ndataset.expressions = 2\n"
            "dataset.views = 0\ndataset.resolution = 32\n"
            "model.hidden_dim = 32\nmodel.patch_size = 16\n"
            "model.num_layers = 1\nmodel.num_heads = 2\n"
            "train.epochs = 2\ntrain.freeze_epochs = 1\ntrain.batch_size = 8\n"
            f"out = {tmp_path / 'pipe'}\n")
        assert main(["pipeline", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        for label in ("Baseline", "+AU-Query", "+AU-Query+Heatmap", "Teacher"):
            assert label in out
        final = json.loads((tmp_path / "pipe" / "final_report.json").read_text())
        assert set(final["models"]) == {"baseline", "auquery", "distilled",
                                        "teacher"}
        ledger = (tmp_path / "pipe" / "ledger.jsonl").read_text().splitlines()
        stages = [json.loads(line)["stage"] for line in ledger]
        assert stages[0] == "generate" and "evaluate" in stages
