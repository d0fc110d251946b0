"""Command-line front end.

Subcommands: synth, pipeline, gpr, xlstm, forecast, eval. Every command
is deterministic given (config, seed) and writes its outputs plus the
figures into --out. Configuration is a single JSON document with
per-module sections; flags override file values. Log level comes from
the GAITCAST_LOG environment variable.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import features as feat
from . import gpr as gpr_mod
from . import ingest, preprocess, report, tensorio
from . import lag_forecaster as lf
from . import xlstm as xl

log = logging.getLogger("gaitcast")

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "threads": 1,
    "split_ratio": 0.8,
    "denoise": {
        "wavelet_threshold": 0.08,
        "decomposition_level": 8,
        "threshold_mode": "soft",
    },
    "filter": {
        "order": 7,
        "kind": "bandpass",
        "cutoff_hz": [20.0, 450.0],
    },
    "window": {"window_len": 100, "overlap": 50},
    "pipeline": {
        "stages": ["correct", "denoise", "filter", "normalize"],
        "standardize_scope": "record",
    },
    "gpr": {
        "optimize": False,
        "signal_variance": 1.0,
        "length_scale": 5.0,
        "noise_variance": 0.05,
        "max_train_rows": 2000,
        "optimize_subsample": 256,
    },
    "xlstm": {
        "hidden_size": 32,
        "num_layers": 2,
        "num_heads": 4,
        "conv_kernel": 4,
        "block_pattern": ["m", "s"],
        "slstm_proj_factor": 4.0 / 3.0,
        "mlstm_proj_factor": 2.0,
        "learning_rate": 0.01,
        "train_steps": 20,
        "seq_len": 64,
    },
    "forecast": {
        "horizon": 128,
        "context_len": 256,
        "num_samples": 100,
        "epochs": 10,
        "patience": 5,
        "lr": 1e-3,
        "max_lag": 64,
        "width": 64,
        "num_layers": 2,
        "num_heads": 4,
        "targets": ["angle:2", "torque:2"],
    },
}

TARGET_NAMES = [f"{q}_{jn}" for jn in ingest.JOINT_NAMES for q in ("angle", "torque")]


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ValueError(f"unknown config key {here!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"config key {here!r} must be an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path: str | None, seed: int | None = None,
                threads: int | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    return cfg


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _split_index(n: int, ratio: float) -> int:
    return max(1, min(n - 1, int(round(n * ratio))))


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    if args.cycles < 1:
        raise StageError("synth", ValueError("cycles must be >= 1"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = ingest.synth_gait(args.seed, args.cycles,
                               sample_rate_hz=args.sample_rate,
                               gait_label=args.label)
    path = out_dir / f"gait_{args.label}_{args.seed:04d}.csv"
    ingest.serialize_record(record, path)
    print(path)
    return 0


# ---------------------------------------------------------------------------
# pipeline


def run_pipeline(cfg: dict, record: ingest.RawRecord
                 ) -> tuple[feat.FeatureTensor, feat.TargetTensor, feat.Standardizer]:
    denoise_cfg = preprocess.DenoiseConfig(**cfg["denoise"])
    filter_cfg = preprocess.FilterConfig(
        order=cfg["filter"]["order"], kind=cfg["filter"]["kind"],
        cutoff_hz=tuple(cfg["filter"]["cutoff_hz"]),
        sample_rate_hz=record.sample_rate_hz)
    window_spec = feat.WindowSpec(**cfg["window"])

    stage_fns = {
        "correct": preprocess.baseline_correct,
        "denoise": lambda x: preprocess.wpt_denoise(x, denoise_cfg),
        "filter": lambda x: preprocess.butterworth_filter(x, filter_cfg),
        "normalize": preprocess.maxabs_normalize,
    }
    stages = cfg["pipeline"]["stages"]
    unknown = set(stages) - set(stage_fns)
    if unknown:
        raise StageError("pipeline", ValueError(f"unknown stages {sorted(unknown)}"))

    semg = record.semg.copy()
    for stage in stages:
        try:
            for c in range(semg.shape[1]):
                semg[:, c] = stage_fns[stage](semg[:, c])
        except Exception as exc:
            raise StageError(stage, exc) from exc

    processed = dataclasses.replace(record, semg=semg)
    try:
        features, targets = feat.featurize(processed, window_spec)
    except Exception as exc:
        raise StageError("featurize", exc) from exc
    try:
        standardizer = feat.fit_standardizer(
            features, fit_scope=cfg["pipeline"]["standardize_scope"])
        features = feat.apply_standardizer(standardizer, features)
    except Exception as exc:
        raise StageError("standardize", exc) from exc
    return features, targets, standardizer


def cmd_pipeline(args, cfg: dict) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        record = ingest.parse_record(args.input)
    except Exception as exc:
        raise StageError("parse", exc) from exc
    features, targets, standardizer = run_pipeline(cfg, record)

    tensorio.save_flat_csv(out_dir / "features.csv", features.data)
    tensorio.save_tensor(out_dir / "features.bin", features.data)
    tensorio.save_flat_csv(out_dir / "targets.csv", targets.data)
    tensorio.save_tensor(out_dir / "targets.bin", targets.data)
    _write_json(out_dir / "standardizer.json", {
        "mean": standardizer.mean.tolist(),
        "std": standardizer.std.tolist(),
        "zero_variance": standardizer.zero_variance.tolist(),
        "fit_scope": standardizer.fit_scope,
    })
    _write_json(out_dir / "provenance.json", {
        "command": "pipeline",
        "input": str(args.input),
        "config": cfg,
        "num_windows": features.num_windows,
    })
    log.info("pipeline: %d windows -> %s", features.num_windows, out_dir)
    print(out_dir / "features.bin")
    return 0


def _load_tensors(features_dir: str) -> tuple[np.ndarray, np.ndarray]:
    d = Path(features_dir)
    return tensorio.load_tensor(d / "features.bin"), tensorio.load_tensor(d / "targets.bin")


# ---------------------------------------------------------------------------
# gpr


def cmd_gpr(args, cfg: dict) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        f_data, t_data = _load_tensors(args.features)
    except Exception as exc:
        raise StageError("load-tensors", exc) from exc

    g = cfg["gpr"]
    x = f_data.reshape(f_data.shape[0], -1)
    y = t_data.reshape(t_data.shape[0], -1)
    split = _split_index(x.shape[0], cfg["split_ratio"])
    x_train_full, x_test = x[:split], x[split:]
    y_train_full, y_test = y[:split], y[split:]

    cap = int(g["max_train_rows"])
    if x_train_full.shape[0] > cap:
        keep = np.linspace(0, x_train_full.shape[0] - 1, cap).round().astype(int)
    else:
        keep = np.arange(x_train_full.shape[0])
    x_train = x_train_full[keep]

    metrics = {"train_rows": int(keep.size), "train_cap": cap, "outputs": {}}
    pred_rows = []
    test_pred = np.empty_like(y_test)
    try:
        for k, name in enumerate(TARGET_NAMES):
            y_k = y_train_full[keep, k]
            mu, sd = y_k.mean(), max(y_k.std(), 1e-12)
            y_z = (y_k - mu) / sd
            if g["optimize"]:
                sub = np.linspace(0, x_train.shape[0] - 1,
                                  min(int(g["optimize_subsample"]), x_train.shape[0])
                                  ).round().astype(int)
                params = gpr_mod.optimize_params(
                    x_train[sub], y_z[sub], noise_variance=g["noise_variance"],
                    seed=cfg["seed"])
            else:
                params = gpr_mod.KernelParams(
                    g["signal_variance"], g["length_scale"], g["noise_variance"])
            model = gpr_mod.fit(x_train, y_z, params)
            for split_name, xs, ys in (("train", x_train_full, y_train_full[:, k]),
                                       ("test", x_test, y_test[:, k])):
                mean_z, var_z = gpr_mod.predict(model, xs)
                pred = mean_z * sd + mu
                mae, rmse = gpr_mod.evaluate(ys, pred)
                metrics["outputs"].setdefault(name, {})[split_name] = {
                    "mae": mae, "rmse": rmse}
                if split_name == "test":
                    test_pred[:, k] = pred
                    for w, (truth_v, pred_v, var_v) in enumerate(
                            zip(ys, pred, var_z * sd * sd)):
                        pred_rows.append((name, split + w, truth_v, pred_v, var_v))
    except Exception as exc:
        raise StageError("gpr-fit", exc) from exc

    for split_name in ("train", "test"):
        metrics[f"mean_{split_name}_mae"] = float(np.mean(
            [metrics["outputs"][n][split_name]["mae"] for n in TARGET_NAMES]))
        metrics[f"mean_{split_name}_rmse"] = float(np.mean(
            [metrics["outputs"][n][split_name]["rmse"] for n in TARGET_NAMES]))
    _write_json(out_dir / "metrics.json", metrics)
    with open(out_dir / "gpr_predictions.csv", "w") as fh:
        fh.write("target,window,truth,pred,variance\n")
        for name, w, truth_v, pred_v, var_v in pred_rows:
            fh.write(f"{name},{w},{truth_v:.17g},{pred_v:.17g},{var_v:.17g}\n")
    report.plot_predictions(y_test, test_pred, TARGET_NAMES,
                            out_dir / "gpr_predictions.png",
                            "GPR held-out predictions")
    print(out_dir / "metrics.json")
    return 0


# ---------------------------------------------------------------------------
# xlstm


def cmd_xlstm(args, cfg: dict) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        f_data, t_data = _load_tensors(args.features)
    except Exception as exc:
        raise StageError("load-tensors", exc) from exc

    x = f_data.reshape(f_data.shape[0], -1)
    y = t_data.reshape(t_data.shape[0], -1)
    split = _split_index(x.shape[0], cfg["split_ratio"])
    mu, sd = y[:split].mean(axis=0), np.maximum(y[:split].std(axis=0), 1e-12)
    y_z = (y - mu) / sd

    xcfg = xl.XlstmConfig(input_dim=x.shape[1], output_dim=y.shape[1],
                          seed=cfg["seed"],
                          **{**cfg["xlstm"],
                             "block_pattern": tuple(cfg["xlstm"]["block_pattern"])})
    model = xl.XlstmModel(xcfg)
    try:
        model, curve = xl.train(model, x[:split], y_z[:split], xcfg)
    except Exception as exc:
        raise StageError("xlstm-train", exc) from exc

    with open(out_dir / "loss_curve.csv", "w") as fh:
        fh.write("step,rmse\n")
        for step, value in enumerate(curve):
            fh.write(f"{step},{value:.17g}\n")

    metrics = {"initial_rmse": curve[0], "final_rmse": curve[-1], "outputs": {}}
    pred_rows = []
    test_truth = test_pred = None
    for split_name, lo, hi in (("train", 0, split), ("test", split, x.shape[0])):
        xb, yb = xl.chunk_sequences(x[lo:hi], y_z[lo:hi], xcfg.seq_len)
        pred_z = model.forward(xb).reshape(-1, y.shape[1])
        n_eval = pred_z.shape[0]
        pred = pred_z * sd + mu
        truth = y[lo:lo + n_eval]
        err = pred - truth
        metrics["outputs"][split_name] = {
            "mae": float(np.mean(np.abs(err))),
            "rmse": float(np.sqrt(np.mean(err ** 2))),
            "windows": n_eval,
        }
        if split_name == "test":
            test_truth, test_pred = truth, pred
            for w in range(n_eval):
                for k, name in enumerate(TARGET_NAMES):
                    pred_rows.append((name, lo + w, truth[w, k], pred[w, k]))
    _write_json(out_dir / "metrics.json", metrics)
    with open(out_dir / "xlstm_predictions.csv", "w") as fh:
        fh.write("target,window,truth,pred\n")
        for name, w, truth_v, pred_v in pred_rows:
            fh.write(f"{name},{w},{truth_v:.17g},{pred_v:.17g}\n")
    xl.save_model(model, out_dir / "xlstm_model")
    report.plot_loss_curve(curve, out_dir / "loss_curve.png", "xLSTM RMSE loss")
    report.plot_predictions(test_truth, test_pred, TARGET_NAMES,
                            out_dir / "xlstm_predictions.png",
                            "xLSTM held-out predictions")
    print(out_dir / "metrics.json")
    return 0


# ---------------------------------------------------------------------------
# forecast


def _parse_targets(specs: list[str]) -> list[tuple[str, int]]:
    if specs == ["all"]:
        return [(q, j) for j in range(ingest.NUM_JOINTS) for q in ("angle", "torque")]
    out = []
    for spec in specs:
        quantity, _, joint = spec.partition(":")
        out.append((quantity, int(joint)))
    return out


def cmd_forecast(args, cfg: dict) -> int:
    import torch
    torch.set_num_threads(max(1, int(cfg["threads"])))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        record = ingest.parse_record(args.input)
    except Exception as exc:
        raise StageError("parse", exc) from exc

    f = cfg["forecast"]
    fcfg = lf.ForecastConfig(horizon=f["horizon"], context_len=f["context_len"],
                             num_samples=f["num_samples"], seed=cfg["seed"])
    lags = lf.LagSet(tuple(range(1, int(f["max_lag"]) + 1)))

    rows = []
    group_crps: dict[str, list[float]] = {"angle": [], "torque": []}
    summaries = {}
    fan_data = []
    for quantity, joint in _parse_targets(f["targets"]):
        series = ingest.to_univariate(record, joint, quantity)
        values = series.values
        needed = fcfg.context_len + fcfg.horizon + 1
        if values.size < needed:
            raise StageError("forecast", ValueError(
                f"series {series.name} has {values.size} samples, needs {needed}"))
        train_values = values[:-fcfg.horizon]
        truth = values[-fcfg.horizon:]
        context = train_values[-fcfg.context_len:]

        model = lf.LagForecaster(lags=lags, width=f["width"],
                                 num_layers=f["num_layers"], num_heads=f["num_heads"],
                                 max_positions=max(512, fcfg.context_len),
                                 seed=cfg["seed"])
        try:
            train_series = ingest.UnivariateSeries(train_values, series.dt_ms,
                                                   series.name)
            model, _ = lf.train_forecaster(model, [train_series], fcfg,
                                           epochs=f["epochs"], patience=f["patience"],
                                           lr=f["lr"], seed=cfg["seed"])
            dist = lf.sample_forecast(model, context, fcfg, target_name=series.name)
        except Exception as exc:
            raise StageError("forecast", exc) from exc

        summary = lf.evaluate_forecasts([dist], [truth])
        baseline = lf.climatological_forecast(
            train_values, fcfg.horizon, fcfg.num_samples, seed=cfg["seed"])
        baseline_summary = lf.evaluate_forecasts([baseline], [truth])
        summaries[series.name] = {
            "crps": summary.mean,
            "baseline_crps": baseline_summary.mean,
        }
        group_crps[quantity].append(summary.mean)

        quantiles = {f"q{int(q * 100):02d}": dist.quantile_curve(q)
                     for q in (0.05, 0.25, 0.5, 0.75, 0.95)}
        for step in range(fcfg.horizon):
            rows.append((series.name, step,
                         *(quantiles[key][step] for key in
                           ("q05", "q25", "q50", "q75", "q95")),
                         truth[step]))
        fan_data.append((series.name, context, truth, quantiles))

    with open(out_dir / "forecast.csv", "w") as fh:
        fh.write("target,step,q05,q25,q50,q75,q95,truth\n")
        for row in rows:
            fh.write(row[0] + "," + str(row[1]) + ","
                     + ",".join(f"{v:.17g}" for v in row[2:]) + "\n")

    crps_doc = {"per_target": summaries, "groups": {}}
    for group, vals in group_crps.items():
        if not vals:
            continue
        arr = np.array(vals)
        crps_doc["groups"][group] = {
            "mean": float(arr.mean()), "std": float(arr.std()),
            "min": float(arr.min()), "q1": float(np.quantile(arr, 0.25)),
            "median": float(np.quantile(arr, 0.5)),
            "q3": float(np.quantile(arr, 0.75)), "max": float(arr.max()),
        }
    _write_json(out_dir / "crps_summary.json", crps_doc)

    state = {k: v.detach().numpy().astype(np.float64)
             for k, v in model.state_dict().items()}
    tensorio.save_checkpoint(out_dir / "forecaster_model",
                             {"forecast": f, "seed": cfg["seed"]}, state)
    for name, context, truth, quantiles in fan_data:
        report.plot_forecast_fan(context[-256:], truth, quantiles,
                                 out_dir / f"forecast_{name}.png", name)
    populated = {k: v for k, v in group_crps.items() if v}
    if populated:
        report.plot_crps_box(populated, out_dir / "crps_box.png")
    print(out_dir / "crps_summary.json")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_target: dict[str, dict] = {}
    with open(args.pred) as fh:
        header = fh.readline().strip().split(",")
        if header != ["target", "step", "q05", "q25", "q50", "q75", "q95", "truth"]:
            raise StageError("eval", ValueError(f"unexpected header {header}"))
        for line in fh:
            name, _step, q05, _q25, q50, _q75, q95, truth = line.strip().split(",")
            rec = per_target.setdefault(name, {"median": [], "truth": [],
                                               "lo": [], "hi": []})
            rec["median"].append(float(q50))
            rec["truth"].append(float(truth))
            rec["lo"].append(float(q05))
            rec["hi"].append(float(q95))
    metrics = {}
    for name, rec in per_target.items():
        truth = np.array(rec["truth"])
        median = np.array(rec["median"])
        mae, rmse = gpr_mod.evaluate(truth, median)
        covered = np.mean((truth >= np.array(rec["lo"])) & (truth <= np.array(rec["hi"])))
        metrics[name] = {"median_mae": mae, "median_rmse": rmse,
                         "coverage_05_95": float(covered)}
    _write_json(out_dir / "eval_metrics.json", metrics)
    print(out_dir / "eval_metrics.json")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitcast",
        description="sEMG gait pipeline: synthesize, preprocess, featurize, "
                    "and run GPR / xLSTM / probabilistic forecasting experiments.")
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--threads", type=int, help="cap internal parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic gait record")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cycles", type=int, required=True)
    p.add_argument("--sample-rate", type=float, default=ingest.CANONICAL_SAMPLE_RATE_HZ)
    p.add_argument("--label", choices=ingest.GAIT_LABELS, default="DNS")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="preprocess + featurize a record")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gpr", help="GPR baseline on feature tensors")
    p.add_argument("--features", required=True, help="directory with features.bin/targets.bin")
    p.add_argument("--out", required=True)

    p = sub.add_parser("xlstm", help="train/evaluate the xLSTM regressor")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("forecast", help="probabilistic forecasting on joint series")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a forecast CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("GAITCAST_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "eval":
            return cmd_eval(args)
        cfg = load_config(args.config, seed=args.seed, threads=args.threads)
        if args.command == "pipeline":
            return cmd_pipeline(args, cfg)
        if args.command == "gpr":
            return cmd_gpr(args, cfg)
        if args.command == "xlstm":
            return cmd_xlstm(args, cfg)
        if args.command == "forecast":
            return cmd_forecast(args, cfg)
        raise ValueError(f"unknown command {args.command}")
    except StageError as exc:
        print(f"gaitcast: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"gaitcast: stage '{args.command}' failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
