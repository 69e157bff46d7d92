import csv
import json
import os

import numpy as np
import pytest

from conceptmem.cli import main


def write_config(tmp_path, **overrides):
    raw = {
        "task": "synthetic",
        "seed": 3,
        "out_dir": str(tmp_path / "run"),
        "embedder": {"kind": "identity", "input_shape": [4], "hidden_size": 4},
        "labels": {"scheme": "one-hot", "l_label": 10},
        "curriculum": [{"n_classes": 2, "length": 4, "episodes": 8,
                        "labeling": "full"}],
        "synthetic": {"n_classes": 5, "dim": 4, "center_scale": 5.0,
                      "noise_sigma": 1.0, "samples_per_class": 12},
        "optimizer": {"lr": 0.001, "batch_size": 4},
        "eval": {"n_way": 3, "k_shot": 1, "episodes": 10, "mann_episodes": 4,
                 "mann_length": 9, "zeroshot_length": 6,
                 "tradeoff_episodes": 8, "tradeoff_interval": 4,
                 "tradeoff_eval_episodes": 5, "transfer_episodes": 20},
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.fixture()
def trained(tmp_path):
    """One tiny train run shared by the eval subcommand tests."""
    cfg_path = write_config(tmp_path)
    assert main(["train", cfg_path]) == 0
    ckpt = str(tmp_path / "run" / "model.ckpt")
    assert os.path.exists(ckpt)
    return cfg_path, ckpt, tmp_path


def test_synth_gen_and_round_trip(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"n_classes": 4, "dim": 3, "seed": 5,
                                     "samples_per_class": 7}))
    out = str(tmp_path / "ds")
    assert main(["synth-gen", str(spec_path), "-o", out]) == 0
    assert "wrote 4 classes" in capsys.readouterr().out
    data = np.load(os.path.join(out, "samples.npz"))
    assert data["class_0"].shape == (7, 3)

    spec_path.write_text(json.dumps({"n_classes": 4, "dim": 3}))
    assert main(["synth-gen", str(spec_path), "-o", out]) == 1


def test_train_writes_log_and_checkpoint(trained, capsys):
    cfg_path, ckpt, tmp_path = trained
    log = tmp_path / "run" / "train_log.csv"
    rows = list(csv.DictReader(open(log)))
    assert len(rows) == 2  # 8 episodes / batch 4
    assert {"stage", "episode_batch", "mean_return", "perfect_rate",
            "wall_time_s"} <= set(rows[0])


def test_eval_protocols_emit_reports(trained, capsys):
    cfg_path, ckpt, tmp_path = trained
    out = str(tmp_path / "reports")
    for protocol, artifact in [("mann", "mann_report.csv"),
                               ("nway", "nway_report.csv"),
                               ("zeroshot", "fewzero_report.csv"),
                               ("label-transfer", "transfer_report.csv"),
                               ("tradeoff", "tradeoff_report.csv")]:
        code = main(["eval", cfg_path, "--checkpoint", ckpt,
                     "--protocol", protocol, "--out-dir", out])
        assert code == 0, protocol
        assert os.path.exists(os.path.join(out, artifact)), protocol
    out_text = capsys.readouterr().out
    assert "zero-shot" in out_text and "label-transfer accuracy" in out_text
    rows = list(csv.reader(open(os.path.join(out, "tradeoff_report.csv"))))
    assert rows[0] == ["zero_shot", "few_shot"]
    assert len(rows) == 1 + 3  # header + points at 0, 4, 8 episodes


def test_eval_episode_override(trained, capsys):
    cfg_path, ckpt, tmp_path = trained
    out = str(tmp_path / "reports2")
    assert main(["eval", cfg_path, "--checkpoint", ckpt, "--protocol", "nway",
                 "--episodes", "7", "--out-dir", out]) == 0
    rows = list(csv.reader(open(os.path.join(out, "nway_report.csv"))))
    assert rows[1][4] == "7"


def test_eval_missing_checkpoint_exits_1(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    code = main(["eval", cfg_path, "--checkpoint", str(tmp_path / "no.ckpt"),
                 "--protocol", "nway"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"task": "synthetic"}))
    assert main(["train", str(bad)]) == 1
    assert "missing required" in capsys.readouterr().err


def test_inspect_lists_params(trained, capsys):
    cfg_path, ckpt, tmp_path = trained
    assert main(["inspect", "--checkpoint", ckpt]) == 0
    out = capsys.readouterr().out
    assert "att_y.fc.w" in out
    assert "total scalars:" in out
    assert "greedy episode" in out  # embedded config enables the dump
    assert main(["inspect", "--checkpoint", str(tmp_path / "no.ckpt")]) == 1


def test_gradcheck_runs(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["eval", "cfg.json", "--protocol", "nope", "--checkpoint", "x"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
