"""End-to-end benchmark stages: generate, prepare, tune, train, run,
evaluate, report.

Each stage reads its inputs from the run directory and overwrites its
outputs, so stages are idempotent and individually re-runnable. The
layout under config.out_dir:

    data/         raw noisy manoeuvres + noise-free truth sidecars
    prepared/     gated + outlier-flagged manoeuvres, split manifest
    tuning/       GP-EI trial histories and best assignments
    models/       neural checkpoints (JSON)
    predictions/  per-estimator, per-manoeuvre estimate traces
    report/       KPI CSVs, comparison tables, histograms

Unit conventions: filter traces store radians (their native state);
neural predictions store degrees (their native target); evaluation
converts everything to degrees at its boundary.
"""

from __future__ import annotations

import json
import logging

import numpy as np

from . import dataio
from .config import DATA_DRIVEN, DISPLAY_NAMES, ESTIMATORS, MODEL_BASED, RunConfig, save_config
from .datapipe import (
    SplitSpec,
    clean_dataset,
    lowpass_frames,
    split_by_manoeuvre,
    window_sequences,
)
from .evaluation import (
    Kpis,
    comparison_table,
    compute_kpis,
    pool_segments,
    save_histogram_svg,
    write_kpi_report,
)
from .kalman import AdaptiveNoiseConfig, NoiseParams, run_filter
from .neural import (
    TrainConfig,
    apply_scaler,
    default_train_config,
    features_from_frames,
    fit_scaler,
    load_checkpoint,
    network_for,
    predict,
    save_checkpoint,
    train_with_early_stopping,
)
from .plant import CatalogueConfig, generate_dataset
from .tuning import ParamSpace, load_trials, run_optimization, save_trials

log = logging.getLogger("slipbench")

_BETA_COL = dataio.FRAME_COLUMNS.index("beta_true")


def _filter_parts(estimator: str) -> tuple[str, str]:
    kind = estimator.split("_")[0]  # ekf | ukf
    obs_set = "y2" if estimator.endswith("_tyre") else "y1"
    return kind, obs_set


def _nn_parts(estimator: str) -> tuple[str, str]:
    kind = estimator.split("_")[0]  # ffnn | rnn
    input_set = "tyre" if estimator.endswith("_tyre") else "base"
    return kind, input_set


_STAGE_IDS = {"tune": 1, "train": 2}


def _stage_seed(config: RunConfig, stage: str, estimator: str = "") -> int:
    # stable entropy only: Python's str hash is process-randomized
    est_id = ESTIMATORS.index(estimator) + 1 if estimator else 0
    entropy = (config.seed, _STAGE_IDS[stage], est_id)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# generate


_CATALOGUE_SIZES = {"default": 60, "pocket": 12}


def stage_generate(config: RunConfig) -> dataio.Dataset:
    """Script and simulate the manoeuvre catalogue; write data/."""
    if config.catalogue == "reference":
        cat = CatalogueConfig.reference_mix(seed=config.seed)
    else:
        cat = CatalogueConfig(total=_CATALOGUE_SIZES[config.catalogue], seed=config.seed)
    log.info("generate: %s catalogue, %d manoeuvres", config.catalogue, cat.total)
    manoeuvres = generate_dataset(cat)
    dataset = dataio.Dataset(
        manoeuvres=manoeuvres,
        seed=config.seed,
        notes={"catalogue": config.catalogue},
    )
    dataio.write_dataset(config.out_path / "data", dataset)
    save_config(config.out_path / "config.json", config)
    return dataset


# ---------------------------------------------------------------------------
# prepare


def stage_prepare(config: RunConfig) -> tuple[dataio.Dataset, dict[str, list[str]]]:
    """Gate, flag outliers, split; write prepared/ + split manifest."""
    dataset = dataio.read_dataset(config.out_path / "data")
    cleaned = clean_dataset(dataset)
    kept = [m for m in cleaned.manoeuvres if len(m.frames) > 0]
    dropped = len(cleaned.manoeuvres) - len(kept)
    if dropped:
        log.info("prepare: %d manoeuvres fully gated away", dropped)
    cleaned = dataio.Dataset(
        manoeuvres=kept, seed=cleaned.seed, pipeline_version=cleaned.pipeline_version,
        notes=cleaned.notes,
    )
    spec = SplitSpec(config.split_train, config.split_val, config.split_test)
    split = split_by_manoeuvre(cleaned, spec, seed=config.seed)
    dataio.write_dataset(config.out_path / "prepared", cleaned)
    dataio.write_split_manifest(config.out_path / "prepared" / "split.json", split, config.seed)
    log.info(
        "prepare: %d train / %d val / %d test manoeuvres",
        len(split["train"]), len(split["val"]), len(split["test"]),
    )
    return cleaned, split


def _load_prepared(config: RunConfig) -> tuple[dataio.Dataset, dict[str, list[str]]]:
    dataset = dataio.read_dataset(config.out_path / "prepared")
    split = dataio.read_split_manifest(config.out_path / "prepared" / "split.json")
    return dataset, split


# ---------------------------------------------------------------------------
# tune


def _filter_space(estimator: str) -> ParamSpace:
    """Two decades around the published noise defaults, log-scaled."""
    names = ["sigma_vy", "sigma_yaw_rate"]
    lows = [0.005, 0.0005]
    highs = [0.5, 0.05]
    if estimator.endswith("_tyre"):
        names.append("sigma_fy")
        lows.append(40.0)
        highs.append(4000.0)
    return ParamSpace(
        names=tuple(names), lows=tuple(lows), highs=tuple(highs),
        scales=("log",) * len(names),
    )


def _noise_from_assignment(assignment: dict[str, float]) -> NoiseParams:
    kwargs = {
        "sigma_vy": assignment["sigma_vy"],
        "sigma_yaw_rate": assignment["sigma_yaw_rate"],
    }
    if "sigma_fy" in assignment:
        kwargs["sigma_fy_front"] = assignment["sigma_fy"]
        kwargs["sigma_fy_rear"] = assignment["sigma_fy"]
    return NoiseParams(**kwargs)


def _filter_rmse(estimator, manoeuvres, noise: NoiseParams, dt: float) -> float:
    """Pooled validation RMSE (deg) of one filter configuration."""
    kind, obs_set = _filter_parts(estimator)
    adaptive = AdaptiveNoiseConfig() if obs_set == "y2" else None
    errors = []
    for m in manoeuvres:
        out = run_filter(kind, m.frames, noise=noise, adaptive=adaptive,
                         obs_set=obs_set, dt=dt)
        errors.append(np.degrees(out.beta_hat - out.beta_true))
    pooled = np.concatenate(errors)
    return float(np.sqrt(np.mean(pooled**2)))


def stage_tune(config: RunConfig) -> dict[str, dict[str, float]]:
    """GP-EI noise tuning for the selected filter estimators."""
    dataset, split = _load_prepared(config)
    val = [dataset.by_id(mid) for mid in split["val"]]
    val = [m for m in val if len(m.frames) > 0]
    dt = 1.0 / config.sample_rate_hz
    tuning_dir = config.out_path / "tuning"
    best: dict[str, dict[str, float]] = {}
    for estimator in config.estimators:
        if estimator in MODEL_BASED and config.tuning_budget > 0:
            space = _filter_space(estimator)

            def objective(**assignment):
                return _filter_rmse(estimator, val, _noise_from_assignment(assignment), dt)

            budget = config.tuning_budget
        elif estimator in DATA_DRIVEN and config.nn_tuning_budget > 0:
            space = ParamSpace(
                names=("learning_rate",), lows=(1e-4,), highs=(1e-2,), scales=("log",)
            )
            objective = _nn_objective(config, dataset, split, estimator)
            budget = config.nn_tuning_budget
        else:
            continue

        log.info("tune: %s, budget %d", estimator, budget)
        params, trials = run_optimization(
            objective,
            space,
            budget=budget,
            seed=_stage_seed(config, "tune", estimator),
            history_path=tuning_dir / f"{estimator}_trials.json",
        )
        best[estimator] = params
        log.info("tune: %s best val RMSE %.3f", estimator,
                 min(t.value for t in trials if not t.diverged))
    _write_best(tuning_dir / "best.json", best)
    return best


def _nn_objective(config: RunConfig, dataset, split, estimator):
    """Validation MSE of a shortened training run at a candidate rate."""
    kind, _ = _nn_parts(estimator)
    stride = config.rnn_train_stride if kind == "rnn" else 1
    x_train, y_train, scaler = _learning_arrays(
        dataset, split["train"], estimator, config, stride=stride
    )
    x_val, y_val, _ = _learning_arrays(
        dataset, split["val"], estimator, config, scaler=scaler, stride=stride
    )
    spec = network_for(*_nn_parts(estimator))
    base = default_train_config(kind)
    cap = config.ffnn_max_epochs if kind == "ffnn" else config.rnn_max_epochs
    train_cfg = TrainConfig(
        batch_size=base.batch_size,
        patience=base.patience,
        max_epochs=max(1, cap // 2),
        seed=_stage_seed(config, "tune", estimator),
    )

    def objective(learning_rate):
        _, history = train_with_early_stopping(
            spec, (x_train, y_train), (x_val, y_val), train_cfg,
            learning_rate=learning_rate,
        )
        return min(h["val_loss"] for h in history)

    return objective


def _write_best(path, best: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(best, indent=2, sort_keys=True) + "\n")


def _read_best(path) -> dict:
    if not path.exists():
        return {}
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# train


def _learning_arrays(dataset, ids, estimator, config, scaler=None, stride=1):
    """Filtered, scaled features and degree targets for one subset."""
    kind, input_set = _nn_parts(estimator)
    feats, targs = [], []
    for mid in ids:
        m = dataset.by_id(mid)
        if len(m.frames) == 0:
            continue
        filtered = lowpass_frames(
            m.frames, config.filter_cutoff_hz, config.sample_rate_hz
        )
        feats.append(features_from_frames(filtered, input_set))
        targs.append(np.degrees(filtered[:, _BETA_COL]))
    if scaler is None:
        scaler = fit_scaler(np.concatenate(feats))
    if kind == "ffnn":
        x = np.concatenate([apply_scaler(scaler, f) for f in feats])
        y = np.concatenate(targs)
        return x, y, scaler
    windows, targets = [], []
    for f, t in zip(feats, targs):
        w, y = window_sequences(apply_scaler(scaler, f), t, window=20, stride=stride)
        if len(w):
            windows.append(w)
            targets.append(y)
    return np.concatenate(windows), np.concatenate(targets), scaler


def stage_train(config: RunConfig) -> None:
    """Train the selected neural estimators; write models/."""
    dataset, split = _load_prepared(config)
    models_dir = config.out_path / "models"
    best = _read_best(config.out_path / "tuning" / "best.json")
    for estimator in config.estimators:
        if estimator not in DATA_DRIVEN:
            continue
        tuned_lr = best.get(estimator, {}).get("learning_rate")
        kind, input_set = _nn_parts(estimator)
        stride = config.rnn_train_stride if kind == "rnn" else 1
        x_train, y_train, scaler = _learning_arrays(
            dataset, split["train"], estimator, config, stride=stride
        )
        x_val, y_val, _ = _learning_arrays(
            dataset, split["val"], estimator, config, scaler=scaler, stride=stride
        )
        spec = network_for(kind, input_set)
        base = default_train_config(kind)
        max_epochs = config.ffnn_max_epochs if kind == "ffnn" else config.rnn_max_epochs
        train_cfg = TrainConfig(
            batch_size=base.batch_size,
            patience=base.patience,
            max_epochs=max_epochs,
            seed=_stage_seed(config, "train", estimator),
        )
        log.info(
            "train: %s on %d samples (val %d), max %d epochs",
            estimator, len(x_train), len(x_val), max_epochs,
        )
        params, history = train_with_early_stopping(
            spec, (x_train, y_train), (x_val, y_val), train_cfg, learning_rate=tuned_lr
        )
        save_checkpoint(
            models_dir / f"{estimator}.json", spec, scaler, params, history, input_set
        )
        log.info("train: %s best val MSE %.4f deg^2", estimator,
                 min(h["val_loss"] for h in history))


# ---------------------------------------------------------------------------
# run


def stage_run(config: RunConfig) -> None:
    """Produce test-set estimate traces for every selected estimator."""
    dataset, split = _load_prepared(config)
    best = _read_best(config.out_path / "tuning" / "best.json")
    dt = 1.0 / config.sample_rate_hz
    pred_root = config.out_path / "predictions"
    for estimator in config.estimators:
        out_dir = pred_root / estimator
        if estimator in MODEL_BASED:
            kind, obs_set = _filter_parts(estimator)
            noise = (
                _noise_from_assignment(best[estimator])
                if estimator in best
                else NoiseParams()
            )
            adaptive = AdaptiveNoiseConfig() if obs_set == "y2" else None
            for mid in split["test"]:
                m = dataset.by_id(mid)
                if len(m.frames) == 0:
                    continue
                out = run_filter(kind, m.frames, noise=noise, adaptive=adaptive,
                                 obs_set=obs_set, dt=dt)
                dataio.write_filter_output(out_dir / f"{mid}.csv", out.to_table())
        else:
            spec, scaler, params, _, input_set = load_checkpoint(
                config.out_path / "models" / f"{estimator}.json"
            )
            for mid in split["test"]:
                m = dataset.by_id(mid)
                if len(m.frames) == 0:
                    continue
                filtered = lowpass_frames(
                    m.frames, config.filter_cutoff_hz, config.sample_rate_hz
                )
                beta_hat = predict(params, spec, scaler, filtered, input_set)
                table = np.column_stack(
                    [m.col("t"), beta_hat, np.degrees(m.col("beta_true"))]
                )
                dataio.write_prediction(out_dir / f"{mid}.csv", table)
        log.info("run: %s traces written", estimator)


# ---------------------------------------------------------------------------
# evaluate


def _load_errors(config: RunConfig, estimator: str, mid: str, dataset):
    """(beta_hat_deg, beta_true_deg, ay_true) for one test manoeuvre."""
    path = config.out_path / "predictions" / estimator / f"{mid}.csv"
    if estimator in MODEL_BASED:
        table = dataio.read_filter_output(path)
        hat = np.degrees(table[:, 1])
        true = np.degrees(table[:, 2])
    else:
        table = dataio.read_prediction(path)
        hat = table[:, 1]
        true = table[:, 2]
    ay_true = dataset.by_id(mid).truth_col("ay_true")
    return hat, true, ay_true


def stage_evaluate(config: RunConfig) -> dict[str, Kpis]:
    """KPI CSVs per estimator; returns the pooled KPI per estimator."""
    dataset, split = _load_prepared(config)
    report_dir = config.out_path / "report"
    pooled_by_estimator: dict[str, Kpis] = {}
    for estimator in config.estimators:
        per: dict[str, Kpis] = {}
        segments = []
        for mid in split["test"]:
            if len(dataset.by_id(mid).frames) == 0:
                continue
            hat, true, ay = _load_errors(config, estimator, mid, dataset)
            per[mid] = compute_kpis(hat, true, ay)
            segments.append((hat, true, ay))
        pooled = pool_segments(segments)
        pooled_by_estimator[estimator] = pooled
        write_kpi_report(report_dir, config.run_id, estimator, per, pooled)
        log.info("evaluate: %s pooled RMSE %s deg", estimator,
                 "n/a" if pooled.rmse is None else f"{pooled.rmse:.3f}")
    return pooled_by_estimator


# ---------------------------------------------------------------------------
# report


def stage_report(config: RunConfig) -> dict[str, Kpis]:
    """Comparison tables (CSV + text) and error histograms (SVG)."""
    dataset, split = _load_prepared(config)
    pooled = stage_evaluate(config)
    report_dir = config.out_path / "report"
    for family, members in (("model_based", MODEL_BASED), ("data_driven", DATA_DRIVEN)):
        selected = [e for e in config.estimators if e in members]
        if not selected:
            continue
        rows = {DISPLAY_NAMES[e]: pooled[e] for e in selected}
        csv, text = comparison_table(rows, include_reference=True)
        (report_dir / f"{family}.csv").write_text(csv)
        (report_dir / f"{family}.txt").write_text(text)
        # histogram for the family's best pooled RMSE estimator
        scored = [e for e in selected if pooled[e].rmse is not None]
        if scored:
            best = min(scored, key=lambda e: pooled[e].rmse)
            errors = []
            for mid in split["test"]:
                if len(dataset.by_id(mid).frames) == 0:
                    continue
                hat, true, _ = _load_errors(config, best, mid, dataset)
                errors.append(hat - true)
            save_histogram_svg(
                report_dir / f"hist_{family}.svg",
                np.concatenate(errors),
                title=f"{DISPLAY_NAMES[best]} sideslip error",
            )
    log.info("report: tables and histograms in %s", report_dir)
    return pooled


# ---------------------------------------------------------------------------


def run_all(config: RunConfig) -> dict[str, Kpis]:
    """generate → prepare → tune → train → run → evaluate → report."""
    stage_generate(config)
    stage_prepare(config)
    stage_tune(config)
    stage_train(config)
    stage_run(config)
    return stage_report(config)
