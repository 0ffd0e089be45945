import json
import os

import numpy as np
import pytest

from share_hsi import RandomSource, save_cube, synthesize_lowrank_cube
from share_hsi.cli import main
from share_hsi.fixtures import make_fixtures


@pytest.fixture()
def toy_inpaint_config(tmp_path):
    cube = synthesize_lowrank_cube(4, 16, 16, 2, RandomSource(0, "gt"))
    gt_path = save_cube(cube, tmp_path / "gt.f32")
    config = {
        "schema_version": 1,
        "name": "toy-inpaint",
        "task": "inpaint",
        "input": {"ground_truth": str(gt_path), "normalize": "none"},
        "physics": {"mask_ratio": 0.25},
        "noise": {"kind": "gaussian", "sigma": 25 / 255},
        "loss": {"terms": ["sure", "rec"], "alpha": 1.0, "tau": 0.01},
        "transform": "shift",
        "network": {"channels": 8, "spectral_depth": 1, "stages": 2,
                    "patch_size": 4, "bank_rank": 2, "bank_size": 4},
        "train": {"epochs": 2, "seed": 3},
        "output": {"bands": [0, 2]},
    }
    path = tmp_path / "toy_inpaint.json"
    path.write_text(json.dumps(config))
    return path, tmp_path


def test_run_produces_artifacts(toy_inpaint_config, capsys):
    config_path, tmp_path = toy_inpaint_config
    out = tmp_path / "out"
    code = main(["run", "--config", str(config_path), "--out", str(out)])
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"xhat.f32", "xhat.json", "report.json", "loss.jsonl",
            "config_used.json", "checkpoint_best.npz"} <= names
    assert any(n.startswith("band_") and n.endswith(".png") for n in names)
    assert any("abs_error" in n for n in names)
    report = json.loads((out / "report.json").read_text())
    assert set(report["metrics"]) == {"mpsnr", "mssim", "sam"}
    lines = (out / "loss.jsonl").read_text().strip().splitlines()
    assert len(lines) == 2
    assert {"step", "total", "fidelity", "equivariance", "lr"} <= set(
        json.loads(lines[0]))


def test_run_missing_input_exit_2(tmp_path, capsys):
    config = {
        "schema_version": 1, "task": "inpaint",
        "input": {"ground_truth": str(tmp_path / "nope.f32")},
        "physics": {"mask_ratio": 0.2},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config))
    code = main(["run", "--config", str(path), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_run_missing_config_exit_2(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "o")])
    assert code == 2


def test_run_invalid_task_exit_2(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"schema_version": 1, "task": "sharpen",
                                "input": {}}))
    assert main(["run", "--config", str(path)]) == 2


def test_run_divergence_exit_3(toy_inpaint_config, capsys):
    config_path, tmp_path = toy_inpaint_config
    config = json.loads(config_path.read_text())
    config["train"] = {"epochs": 10, "seed": 0, "lr_init": 1e12,
                       "lr_final": 1e12}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(config))
    out = tmp_path / "diverged"
    code = main(["run", "--config", str(bad), "--out", str(out)])
    assert code == 3
    # partial artifacts kept
    assert (out / "report.json").exists()
    assert json.loads((out / "report.json").read_text())["diverged"]


def test_rerun_metrics_byte_identical(toy_inpaint_config):
    config_path, tmp_path = toy_inpaint_config
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config_path), "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(config_path), "--out", str(out_b)]) == 0
    metrics_a = json.dumps(json.loads((out_a / "report.json").read_text())["metrics"],
                           sort_keys=True)
    metrics_b = json.dumps(json.loads((out_b / "report.json").read_text())["metrics"],
                           sort_keys=True)
    assert metrics_a.encode() == metrics_b.encode()


def test_seed_override_changes_result(toy_inpaint_config):
    config_path, tmp_path = toy_inpaint_config
    out_a, out_b = tmp_path / "s3", tmp_path / "s4"
    main(["run", "--config", str(config_path), "--out", str(out_a)])
    main(["run", "--config", str(config_path), "--out", str(out_b),
          "--seed", "4"])
    rep_a = json.loads((out_a / "report.json").read_text())
    rep_b = json.loads((out_b / "report.json").read_text())
    assert rep_a["metrics"] != rep_b["metrics"]


def test_sr_task_runs(tmp_path):
    cube = synthesize_lowrank_cube(4, 16, 16, 2, RandomSource(1, "gt"))
    gt_path = save_cube(cube, tmp_path / "gt.f32")
    config = {
        "schema_version": 1, "name": "toy-sr", "task": "sr",
        "input": {"ground_truth": str(gt_path), "normalize": "none"},
        "physics": {"kernel": {"size": 3, "std": 0.8}, "factor": 2,
                    "boundary": "circular"},
        "noise": {"kind": "gaussian", "sigma": 25 / 255},
        "loss": {"terms": ["sure", "rec"]},
        "transform": "scale",
        "network": {"channels": 8, "spectral_depth": 1, "stages": 1,
                    "patch_size": 4, "bank_rank": 2, "bank_size": 4},
        "train": {"epochs": 2, "seed": 0},
    }
    path = tmp_path / "sr.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    xhat = json.loads((out / "xhat.json").read_text())
    assert (xhat["c"], xhat["h"], xhat["w"]) == (4, 16, 16)


def test_share_out_env_fallback(toy_inpaint_config, monkeypatch):
    config_path, tmp_path = toy_inpaint_config
    config = json.loads(config_path.read_text())
    config.pop("output", None)
    config["name"] = "env-run"
    path = tmp_path / "env.json"
    path.write_text(json.dumps(config))
    monkeypatch.setenv("SHARE_OUT", str(tmp_path / "envroot"))
    monkeypatch.chdir(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    assert (tmp_path / "envroot" / "env-run" / "report.json").exists()


class TestAblate:
    def test_alpha_axis_row_per_value(self, toy_inpaint_config):
        config_path, tmp_path = toy_inpaint_config
        config = json.loads(config_path.read_text())
        config["ablate"] = {"alpha": [0.1, 0.5, 1.0, 1.5, 2.0]}
        config["train"]["epochs"] = 1
        path = tmp_path / "ab.json"
        path.write_text(json.dumps(config))
        out = tmp_path / "ab"
        assert main(["ablate", "--config", str(path), "--axis", "alpha",
                     "--out", str(out)]) == 0
        csv_path = out / "ablate_alpha" / "ablation_alpha.csv"
        rows = csv_path.read_text().strip().splitlines()
        assert len(rows) == 1 + 5
        md = (out / "ablate_alpha" / "ablation_alpha.md").read_text()
        assert md.count("\n") >= 6

    def test_loss_terms_axis_has_seven_rows(self, toy_inpaint_config):
        config_path, tmp_path = toy_inpaint_config
        config = json.loads(config_path.read_text())
        config["train"]["epochs"] = 1
        path = tmp_path / "ab7.json"
        path.write_text(json.dumps(config))
        out = tmp_path / "ab7"
        assert main(["ablate", "--config", str(path), "--axis", "loss-terms",
                     "--out", str(out)]) == 0
        rows = (out / "ablate_loss-terms" / "ablation_loss-terms.csv"
                ).read_text().strip().splitlines()
        assert len(rows) == 1 + 7
        assert all("ok" in row for row in rows[1:])

    def test_dasa_axis_two_rows(self, toy_inpaint_config):
        config_path, tmp_path = toy_inpaint_config
        config = json.loads(config_path.read_text())
        config["train"]["epochs"] = 1
        path = tmp_path / "abd.json"
        path.write_text(json.dumps(config))
        out = tmp_path / "abd"
        assert main(["ablate", "--config", str(path), "--axis", "dasa",
                     "--out", str(out)]) == 0
        rows = (out / "ablate_dasa" / "ablation_dasa.csv"
                ).read_text().strip().splitlines()
        assert len(rows) == 1 + 2


class TestFixturesCommand:
    def test_default_set(self, tmp_path):
        manifest = make_fixtures(tmp_path / "fx")
        assert len(manifest["cubes"]) == 3
        assert len(manifest["masks"]) == 4
        assert len(manifest["kernels"]) == 4

    def test_rerun_byte_identical(self, tmp_path):
        make_fixtures(tmp_path / "fx")
        snapshot = {p.name: p.read_bytes()
                    for p in sorted((tmp_path / "fx").iterdir())}
        make_fixtures(tmp_path / "fx")
        for p in sorted((tmp_path / "fx").iterdir()):
            assert snapshot[p.name] == p.read_bytes(), p.name

    def test_cli_entry(self, tmp_path, capsys):
        assert main(["fixtures", "--out", str(tmp_path / "fx2")]) == 0
        assert (tmp_path / "fx2" / "manifest.json").exists()

    def test_masks_round_trip_into_operator(self, tmp_path):
        from share_hsi import InpaintOperator, load_cube
        make_fixtures(tmp_path / "fx")
        mask = load_cube(tmp_path / "fx" / "mask_12p5.f32")
        op = InpaintOperator(mask.data)
        assert abs(op.mask_ratio() - 0.125) <= 1 / 64 + 1e-9


def test_eval_command(tmp_path, capsys):
    cube = synthesize_lowrank_cube(3, 8, 8, 1, RandomSource(5))
    a = save_cube(cube, tmp_path / "a.f32")
    b = save_cube(cube, tmp_path / "b.f32")
    code = main(["eval", "--restored", str(a), "--reference", str(b),
                 "--out", str(tmp_path / "m.json")])
    assert code == 0
    metrics = json.loads((tmp_path / "m.json").read_text())
    assert metrics["mpsnr"] == 100.0
    assert metrics["mssim"] == pytest.approx(1.0)


def test_eval_missing_file_exit_2(tmp_path):
    assert main(["eval", "--restored", str(tmp_path / "x.f32"),
                 "--reference", str(tmp_path / "y.f32")]) == 2
