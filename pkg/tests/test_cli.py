import json

import numpy as np
import pytest

from iir_edit import checkpoint, model as M
from iir_edit.cli import run
from iir_edit.data import load_png, save_png


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    assert run(["gen-data", "--n", "3", "--size", "16", "--seed", "5",
                "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli_ckpt") / "m.ckpt"
    state = M.init_state(
        M.ModelConfig(image_size=16),
        {"T": 1000, "K": 250, "canny_low": 30.0, "canny_high": 45.0,
         "image_size": 16},
        seed=3)
    checkpoint.save_checkpoint(path, state)
    return path


class TestParsing:
    def test_no_subcommand(self, capsys):
        assert run([]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag_named_in_message(self, capsys):
        assert run(["gen-data", "--n", "1", "--frobnicate", "2"]) == 1
        assert "--frobnicate" in capsys.readouterr().err

    def test_missing_out_without_home(self, monkeypatch, capsys):
        monkeypatch.delenv("IIR_EDIT_HOME", raising=False)
        assert run(["gen-data", "--n", "1"]) == 1
        assert "--out" in capsys.readouterr().err

    def test_home_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv("IIR_EDIT_HOME", str(tmp_path))
        assert run(["gen-data", "--n", "1", "--size", "16"]) == 0
        assert (tmp_path / "gen-data" / "manifest.json").exists()

    def test_missing_file_is_runtime_failure(self, tmp_path, capsys):
        code = run(["edit", "--image", str(tmp_path / "nope.png"),
                    "--mask", "all", "--prompt", "a red circle on solid background",
                    "--ckpt", str(tmp_path / "nope.ckpt"),
                    "--out", str(tmp_path / "o.png")])
        assert code == 2


class TestGenData:
    def test_run_json_echo(self, corpus):
        payload = json.loads((corpus / "run.json").read_text())
        assert payload["subcommand"] == "gen-data"
        assert payload["config"]["n"] == 3
        assert payload["config"]["seed"] == 5
        assert "numpy" in payload["versions"]

    def test_rerun_byte_identical(self, corpus, tmp_path):
        assert run(["gen-data", "--n", "3", "--size", "16", "--seed", "5",
                    "--out", str(tmp_path)]) == 0
        for name in ("images/00000.png", "images/00002.png", "manifest.json"):
            assert (tmp_path / name).read_bytes() == (corpus / name).read_bytes()


class TestTrainConfig:
    def test_precedence_file_set_flag(self, corpus, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps(
            {"total_steps": 9, "seed": 1, "batch_size": 2, "lr": 0.5}))
        out = tmp_path / "t"
        assert run(["train", "--config", str(cfg_file),
                    "--set", "total_steps=2", "--set", "ckpt_every=2",
                    "--data", str(corpus), "--out", str(out),
                    "--seed", "4", "--size", "16"]) == 0
        echoed = json.loads((out / "run.json").read_text())["config"]
        assert echoed["total_steps"] == 2   # --set beats file
        assert echoed["seed"] == 4          # flag beats file
        assert echoed["lr"] == 0.5          # file beats default
        assert (out / "ckpt_latest.ckpt").exists()
        assert (out / "loss.csv").read_text().count("\n") == 3  # header + 2

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"learning_rate": 1e-4}))
        assert run(["train", "--config", str(cfg_file),
                    "--out", str(tmp_path / "t")]) == 1
        assert "learning_rate" in capsys.readouterr().err

    def test_bad_set_pair(self, tmp_path, capsys):
        assert run(["train", "--set", "total_steps",
                    "--out", str(tmp_path / "t")]) == 1
        assert "key=value" in capsys.readouterr().err


class TestEditAndAblate:
    def test_edit_mask_all_writes_png(self, corpus, ckpt, tmp_path):
        out = tmp_path / "edited.png"
        code = run(["edit", "--image", str(corpus / "images" / "00000.png"),
                    "--mask", "all",
                    "--prompt", "a blue square on stripes background",
                    "--ckpt", str(ckpt), "--steps", "2",
                    "--out", str(out)])
        assert code == 0
        img = load_png(out)
        assert img.shape == (16, 16, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_edit_deterministic_rerun(self, corpus, ckpt, tmp_path):
        args = ["edit", "--image", str(corpus / "images" / "00001.png"),
                "--mask", str(corpus / "masks" / "00001.png"),
                "--prompt", "a red circle on solid background",
                "--ckpt", str(ckpt), "--steps", "2", "--seed", "9"]
        assert run(args + ["--out", str(tmp_path / "a.png")]) == 0
        assert run(args + ["--out", str(tmp_path / "b.png")]) == 0
        assert (tmp_path / "a.png").read_bytes() == \
            (tmp_path / "b.png").read_bytes()

    def test_ablate_default_grid(self, corpus, ckpt, tmp_path):
        out = tmp_path / "grid"
        code = run(["ablate", "--image", str(corpus / "images" / "00000.png"),
                    "--mask", "all",
                    "--prompt", "a green triangle on checker background",
                    "--ckpt", str(ckpt), "--steps", "2", "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "grid.json").read_text())
        assert [m["k"] for m in manifest] == [0, 62, 125, 250]
        for m in manifest:
            assert (out / m["filename"]).exists()
        sheet = load_png(out / "contact_sheet.png")
        assert sheet.shape == (16, 64, 3)

    def test_ablate_explicit_ks(self, corpus, ckpt, tmp_path):
        out = tmp_path / "grid2"
        code = run(["ablate", "--image", str(corpus / "images" / "00000.png"),
                    "--mask", "all", "--ks", "10,0",
                    "--prompt", "a green triangle on checker background",
                    "--ckpt", str(ckpt), "--steps", "2", "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "grid.json").read_text())
        assert [m["k"] for m in manifest] == [10, 0]


class TestEval:
    def test_eval_writes_report(self, corpus, ckpt, tmp_path):
        out = tmp_path / "ev"
        code = run(["eval", "--ckpt", str(ckpt), "--data", str(corpus),
                    "--mode", "color", "--ks", "0", "--n", "2",
                    "--steps", "2", "--batch-size", "2", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["records"]) == 2
        header = (out / "report.csv").read_text().splitlines()[0]
        assert header == ("example_id,prompt,k,success,score,"
                          "rmse_outside,rmse_full,psnr")


class TestInspectCondition:
    def test_channels_written(self, corpus, tmp_path):
        out = tmp_path / "cond"
        code = run(["inspect-condition",
                    "--image", str(corpus / "images" / "00000.png"),
                    "--mask", str(corpus / "masks" / "00000.png"),
                    "--k", "100", "--out", str(out)])
        assert code == 0
        for c in range(4):
            ch = load_png(out / f"channel_{c}.png")
            assert ch.shape == (16, 16) or ch.shape == (16, 16, 3)

    def test_bad_k_is_validation_error(self, corpus, tmp_path, capsys):
        code = run(["inspect-condition",
                    "--image", str(corpus / "images" / "00000.png"),
                    "--mask", "all", "--k", "-3",
                    "--out", str(tmp_path / "c")])
        assert code == 1


def test_console_script_installed():
    import shutil
    assert shutil.which("iir-edit") is not None
