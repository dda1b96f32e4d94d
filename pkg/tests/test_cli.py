"""Command-line interface: subcommands, exit codes, artifacts."""

import json
import os

import numpy as np
import pytest

from vld.cli import main, render_cmc_svg
from vld.retrieval import load_cmc_csv

TINY_TEXT = """
data.train_identities = 4
data.test_identities = 2
data.tracklets_per_identity = 2
data.frames = 2
data.image_h = 8
data.image_w = 8
encoder.patch = 4
encoder.dim = 16
encoder.depth = 2
encoder.heads = 2
stp.insertion_layer = 0
train.epochs = 2
train.epoch_passes = 4
train.batch_identities = 2
train.batch_tracklets = 1
optim.base_lr = 0.01
"""


@pytest.fixture()
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_TEXT + f"\ndata.root = {tmp_path / 'data'}\n")
    return path


def test_gen_data_and_train_and_eval(tiny_cfg, tmp_path, capsys):
    assert main(["gen-data", "--config", str(tiny_cfg)]) == 0
    assert (tmp_path / "data" / "manifest.tsv").exists()

    out = tmp_path / "run"
    assert main(["train", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    assert (out / "final.vldt").exists()

    eval_out = tmp_path / "eval"
    assert main(["eval", "--config", str(tiny_cfg),
                 "--checkpoint", str(out / "final.vldt"),
                 "--direction", "both", "--out", str(eval_out)]) == 0
    for direction in ("ir2vis", "vis2ir"):
        assert (eval_out / f"report_{direction}.json").exists()
        assert (eval_out / f"cmc_{direction}.csv").exists()
    assert (eval_out / "features.vldt").exists()
    from vld import checkpoint
    feats = checkpoint.load(eval_out / "features.vldt")
    assert all(name.startswith("feat/") for name in feats)
    assert len(feats) == 8  # 2 test ids x 2 modalities x 2 tracklets


def test_eval_same_checkpoint_twice_identical(tiny_cfg, tmp_path):
    main(["gen-data", "--config", str(tiny_cfg)])
    out = tmp_path / "run"
    main(["train", "--config", str(tiny_cfg), "--out", str(out)])
    a, b = tmp_path / "eval_a", tmp_path / "eval_b"
    for target in (a, b):
        main(["eval", "--config", str(tiny_cfg),
              "--checkpoint", str(out / "final.vldt"),
              "--direction", "ir2vis", "--out", str(target)])
    assert (a / "report_ir2vis.json").read_bytes() == \
        (b / "report_ir2vis.json").read_bytes()
    assert (a / "cmc_ir2vis.csv").read_bytes() == \
        (b / "cmc_ir2vis.csv").read_bytes()


def test_smoke_training_reduces_loss(tiny_cfg, tmp_path):
    out = tmp_path / "smoke"
    assert main(["train", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    lines = (out / "metrics.log").read_text().splitlines()
    losses = [float(dict(p.split("=") for p in ln.split())["loss_total"])
              for ln in lines if ln.startswith("step=")]
    steps_per_epoch = len(losses) // 2
    first_epoch = np.mean(losses[:steps_per_epoch])
    last_epoch = np.mean(losses[-steps_per_epoch:])
    assert last_epoch < first_epoch


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense.key = 1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_data_error_exit_code(tiny_cfg, tmp_path):
    # Checkpoint for eval exists, but dataset root is empty -> data error.
    main(["gen-data", "--config", str(tiny_cfg)])
    out = tmp_path / "run"
    main(["train", "--config", str(tiny_cfg), "--out", str(out)])
    code = main(["eval", "--config", str(tiny_cfg),
                 "--checkpoint", str(out / "final.vldt"),
                 "--data", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "e")])
    assert code == 3


def test_env_seed_override(tiny_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("VLD_SEED", "7")
    out = tmp_path / "enver"
    main(["train", "--config", str(tiny_cfg), "--out", str(out)])
    text = (out / "resolved.cfg").read_text()
    assert "train.seed = 7" in text


def test_profile_writes_reports(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "prof"
    assert main(["profile", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    text = (out / "cost_report.txt").read_text()
    assert "params total" in text
    payload = json.loads((out / "cost_report.json").read_text())
    assert payload["stp_param_delta"] > 0
    captured = capsys.readouterr()
    assert "macs/frame total" in captured.out


def test_profile_no_stp_zero_delta(tiny_cfg, tmp_path):
    out = tmp_path / "prof0"
    assert main(["profile", "--config", str(tiny_cfg), "--no-stp",
                 "--out", str(out)]) == 0
    payload = json.loads((out / "cost_report.json").read_text())
    assert payload["stp_param_delta"] == 0
    assert payload["stp_flops_delta"] == 0


def test_plot_flat_line_and_determinism(tmp_path):
    csv = tmp_path / "perfect.csv"
    csv.write_text("rank,value\n" + "\n".join(f"{i},1.0" for i in range(1, 6)) + "\n")
    out_a, out_b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(["plot", str(csv), "--out", str(out_a)]) == 0
    assert main(["plot", str(csv), "--out", str(out_b)]) == 0
    svg = out_a.read_text()
    assert svg.startswith("<svg")
    assert "perfect" in svg
    ys = [float(pt.split(",")[1]) for pt in
          svg.split('points="')[1].split('"')[0].split()]
    assert len(set(ys)) == 1  # flat line at 1.0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_plot_two_curves_two_legend_entries(tmp_path):
    rows = "rank,value\n1,0.5\n2,1.0\n"
    a = tmp_path / "one.csv"
    b = tmp_path / "two.csv"
    a.write_text(rows)
    b.write_text(rows)
    out = tmp_path / "c.svg"
    assert main(["plot", str(a), str(b), "--out", str(out)]) == 0
    svg = out.read_text()
    assert "one" in svg and "two" in svg
    assert svg.count("<polyline") == 2


def test_plot_malformed_csv_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("rank,value\noops\n")
    assert main(["plot", str(bad), "--out", str(tmp_path / "x.svg")]) == 5


def test_missing_checkpoint_is_error(tiny_cfg, tmp_path):
    main(["gen-data", "--config", str(tiny_cfg)])
    code = main(["eval", "--config", str(tiny_cfg),
                 "--checkpoint", str(tmp_path / "nope.vldt"),
                 "--out", str(tmp_path / "e2")])
    assert code != 0


def test_profile_reference_config_exact_delta(tmp_path):
    import pathlib
    profile_cfg = pathlib.Path(__file__).resolve().parent.parent / "configs" / "profile.cfg"
    out = tmp_path / "prof_ref"
    assert main(["profile", "--config", str(profile_cfg), "--out", str(out)]) == 0
    payload = json.loads((out / "cost_report.json").read_text())
    assert payload["stp_param_delta"] == 2_391_552
    assert abs(payload["params_total"] - payload["stp_param_delta"] - 86.17e6) \
        < 0.02 * 86.17e6
