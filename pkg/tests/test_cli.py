import json

import numpy as np
import pytest

from gaitcast import cli, tensorio


def test_defaults_load_and_merge():
    assert cli.load_config(None) == cli.DEFAULT_CONFIG
    cfg = cli._merge(cli.DEFAULT_CONFIG, {"gpr": {"length_scale": 2.0}})
    assert cfg["gpr"]["length_scale"] == 2.0


def test_merge_rejects_unknown_keys_strict(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"gpr": {"lengthscale": 2.0}}))
    with pytest.raises(ValueError):
        cli.load_config(str(bad))


def test_config_overrides_and_flags(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"window": {"window_len": 64},
                                "forecast": {"horizon": 32}}))
    cfg = cli.load_config(str(path), seed=9, threads=2)
    assert cfg["window"]["window_len"] == 64
    assert cfg["forecast"]["horizon"] == 32
    assert cfg["seed"] == 9
    assert cfg["threads"] == 2
    # untouched defaults survive
    assert cfg["window"]["overlap"] == cli.DEFAULT_CONFIG["window"]["overlap"]


def test_synth_and_pipeline_commands(tmp_path):
    data = tmp_path / "data"
    out = tmp_path / "feats"
    assert cli.main(["synth", "--seed", "5", "--cycles", "2",
                     "--out", str(data)]) == 0
    csvs = sorted(data.glob("*.csv"))
    assert csvs
    assert cli.main(["pipeline", "--in", str(csvs[0]),
                     "--out", str(out)]) == 0
    feats = tensorio.load_tensor(out / "features.bin")
    targets = tensorio.load_tensor(out / "targets.bin")
    assert feats.shape[1:] == (9, 6)
    assert targets.shape == (feats.shape[0], 8, 2)
    flat = tensorio.load_flat_csv(out / "features.csv")
    np.testing.assert_array_equal(flat, feats)
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["num_windows"] == feats.shape[0]


def test_pipeline_missing_input_fails(tmp_path, capsys):
    rc = cli.main(["pipeline", "--in", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "failed" in capsys.readouterr().err


def test_eval_command(tmp_path):
    pred = tmp_path / "forecast.csv"
    lines = ["target,step,q05,q25,q50,q75,q95,truth"]
    rng = np.random.default_rng(0)
    for step in range(10):
        truth = float(rng.normal())
        lines.append(f"a,{step},{truth-1},{truth-0.5},{truth},"
                     f"{truth+0.5},{truth+1},{truth}")
    pred.write_text("\n".join(lines) + "\n")
    out = tmp_path / "eval"
    assert cli.main(["eval", "--pred", str(pred), "--out", str(out)]) == 0
    metrics = json.loads((out / "eval_metrics.json").read_text())
    assert metrics["a"]["median_mae"] == pytest.approx(0.0)
    assert metrics["a"]["coverage_05_95"] == pytest.approx(1.0)
