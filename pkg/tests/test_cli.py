import json

import numpy as np
import pytest

from intentcf import load_checkpoint
from intentcf.cli import build_parser, gradient_check_report, main

from conftest import blocky_dataset, write_tsv


@pytest.fixture
def tsv_path(tmp_path):
    rng = np.random.default_rng(1)
    return write_tsv(tmp_path / "ds.tsv", blocky_dataset(rng))


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


SMALL_TRAIN_FLAGS = [
    "--d", "8", "--num-layers", "2", "--num-user-intents", "4", "--num-item-intents", "4",
    "--epochs", "3", "--warmup-epochs", "1", "--batch-size", "128",
    "--target-steps", "100", "--eval-ns", "5,10,20",
]


class TestHelp:
    def test_subcommand_help_smoke(self, capsys):
        for cmd in ("prepare", "train", "evaluate", "gen-targets", "grad-check",
                    "verify-theorem", "sweep"):
            with pytest.raises(SystemExit) as exc:
                build_parser().parse_args([cmd, "--help"])
            assert exc.value.code == 0
            capsys.readouterr()

    def test_train_help_documents_defaults(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--help"])
        text = capsys.readouterr().out
        assert "--lambda1" in text and "0.01" in text
        assert "--batch-size" in text and "2048" in text


class TestPrepareTrainEvaluate:
    def test_round_trip(self, tmp_path, tsv_path, capsys):
        prepared = str(tmp_path / "prep.npz")
        code, out, _ = run_cli(
            capsys, "prepare", "--data", tsv_path, "--out", prepared,
            "--split-seed", "11",
        )
        assert code == 0
        summary = json.loads(out)
        assert summary["split"]["train"] > 0

        ckpt_path = str(tmp_path / "model.ckpt")
        log_path = str(tmp_path / "log.jsonl")
        code, out, _ = run_cli(
            capsys, "train", "--data-path", prepared, "--data-format", "prepared",
            "--checkpoint-path", ckpt_path, "--log-path", log_path,
            *SMALL_TRAIN_FLAGS,
        )
        assert code == 0
        result = json.loads(out)
        assert result["epochs_run"] == 3
        assert "recall@10" in result["test"]

        code, out, _ = run_cli(
            capsys, "evaluate", "--checkpoint", ckpt_path, "--prepared", prepared,
            "--phase", "test", "--ns", "5,10",
        )
        assert code == 0
        report = json.loads(out)
        assert report["phase"] == "test"
        assert report["recall@10"] == pytest.approx(result["test"]["recall@10"])

    def test_config_file_with_flag_override(self, tmp_path, tsv_path, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text(
            f"data_path = {tsv_path}\nepochs = 2\nwarmup_epochs = 1\nd = 8\n"
            "num_layers = 2\nnum_user_intents = 4\nnum_item_intents = 4\n"
            "batch_size = 128\ntarget_steps = 100\neval_ns = 5,10,20\n",
            encoding="utf-8",
        )
        code, out, _ = run_cli(capsys, "train", "--config", str(conf), "--epochs", "1")
        assert code == 0
        assert json.loads(out)["epochs_run"] == 1

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        conf = tmp_path / "bad.conf"
        conf.write_text("data_path = x\nbogus_key = 1\n", encoding="utf-8")
        code, _, err = run_cli(capsys, "train", "--config", str(conf))
        assert code == 2
        assert "bogus_key" in err


class TestGenTargets:
    def test_writes_loadable_checkpoint(self, tmp_path, capsys):
        out_path = str(tmp_path / "targets.ckpt")
        code, out, _ = run_cli(
            capsys, "gen-targets", "--user-targets", "6", "--item-targets", "5",
            "--dim", "8", "--steps", "200", "--out", out_path,
        )
        assert code == 0
        ckpt = load_checkpoint(out_path)
        assert ckpt.user_targets.shape == (6, 8)
        assert ckpt.item_targets.shape == (5, 8)
        np.testing.assert_allclose(
            np.linalg.norm(ckpt.user_targets, axis=1), 1.0, atol=1e-6
        )


class TestDiagnostics:
    def test_grad_check_passes(self, capsys):
        code, out, _ = run_cli(capsys, "grad-check", "--seed", "1")
        assert code == 0
        report = json.loads(out)
        assert set(report) == {"rec", "ucl_user", "ucl_item", "mi", "ins_user",
                               "ins_item", "total"}
        assert max(report.values()) <= 1e-4

    def test_gradient_check_report_tight(self):
        report = gradient_check_report(seed=2)
        for name in ("rec", "ucl_user", "ucl_item", "ins_user", "ins_item"):
            assert report[name] <= 1e-5
        assert report["mi"] <= 1e-4 and report["total"] <= 1e-4

    def test_verify_theorem_cli(self, capsys):
        code, out, _ = run_cli(capsys, "verify-theorem", "--trials", "200")
        assert code == 0
        report = json.loads(out)
        assert report["passed"] and report["violations"] == 0


class TestSweep:
    def test_two_cell_grid(self, tmp_path, tsv_path, capsys):
        out_dir = str(tmp_path / "sweep")
        code, out, _ = run_cli(
            capsys, "sweep", "--data-path", tsv_path, "--out-dir", out_dir,
            "--vary", "lambda1=0,0.01", *SMALL_TRAIN_FLAGS,
            "--epochs", "2", "--warmup-epochs", "0",
        )
        assert code == 0
        summary = json.loads(out)
        assert len(summary) == 2
        assert {cell["cell"]["lambda1"] for cell in summary} == {"0", "0.01"}
        for cell in summary:
            lines = open(cell["log"], encoding="utf-8").read().strip().splitlines()
            assert len(lines) == cell["epochs_run"]
        assert (tmp_path / "sweep" / "summary.json").exists()

    def test_requires_axis(self, tmp_path, tsv_path, capsys):
        code, _, err = run_cli(
            capsys, "sweep", "--data-path", tsv_path,
            "--out-dir", str(tmp_path / "s"),
        )
        assert code == 2
        assert "vary" in err
