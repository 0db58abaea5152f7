"""Run configuration: one versioned JSON file plus flag overrides.

Every key is documented here and validated on load; unknown keys are
rejected so typos fail loudly. Command-line flags win over file
values, which win over the defaults below.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

CONFIG_VERSION = "1"

ESTIMATORS = (
    "ekf",
    "ekf_tyre",
    "ukf",
    "ukf_tyre",
    "ffnn",
    "ffnn_tyre",
    "rnn",
    "rnn_tyre",
)

DISPLAY_NAMES = {
    "ekf": "EKF",
    "ekf_tyre": "EKF-Tyre",
    "ukf": "UKF",
    "ukf_tyre": "UKF-Tyre",
    "ffnn": "FFNN",
    "ffnn_tyre": "FFNN-Tyre",
    "rnn": "RNN",
    "rnn_tyre": "RNN-Tyre",
}

MODEL_BASED = ("ekf", "ekf_tyre", "ukf", "ukf_tyre")
DATA_DRIVEN = ("ffnn", "ffnn_tyre", "rnn", "rnn_tyre")

CATALOGUES = ("default", "reference", "pocket")

# input-set flag: i1 = inertial-only estimators, i2 = tyre-force-augmented
INPUT_SET_FILTERS = {
    "i1": tuple(e for e in ESTIMATORS if not e.endswith("_tyre")),
    "i2": tuple(e for e in ESTIMATORS if e.endswith("_tyre")),
}


@dataclass(frozen=True)
class RunConfig:
    """Pipeline configuration; see README for the key-by-key reference."""

    version: str = CONFIG_VERSION
    seed: int = 1234
    out_dir: str = "runs/bench"
    catalogue: str = "default"  # default (60) | reference (23) | pocket (12)
    estimators: tuple[str, ...] = ESTIMATORS
    split_train: float = 0.75
    split_val: float = 0.15
    split_test: float = 0.10
    tuning_budget: int = 60  # GP-EI trials per filter estimator
    nn_tuning_budget: int = 0  # 0 = use published learning rates
    ffnn_max_epochs: int = 500
    rnn_max_epochs: int = 200
    rnn_train_stride: int = 1  # window stride for RNN training sets
    filter_cutoff_hz: float = 5.0
    sample_rate_hz: float = 100.0

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ValueError(
                f"unsupported config version {self.version!r} (expected {CONFIG_VERSION!r})"
            )
        if not self.estimators:
            raise ValueError("estimator selection must be nonempty")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators: {', '.join(unknown)}")
        if self.catalogue not in CATALOGUES:
            raise ValueError(f"unknown catalogue {self.catalogue!r}; pick from {CATALOGUES}")
        fractions = (self.split_train, self.split_val, self.split_test)
        if any(f < 0.0 or f >= 1.0 for f in fractions) or self.split_train <= 0.0:
            raise ValueError("split fractions must lie in (0, 1)")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.tuning_budget < 0 or self.nn_tuning_budget < 0:
            raise ValueError("tuning budgets must be non-negative")
        if 0 < self.tuning_budget < 5 or 0 < self.nn_tuning_budget < 5:
            raise ValueError("a nonzero tuning budget must be >= 5")
        if self.ffnn_max_epochs < 1 or self.rnn_max_epochs < 1 or self.rnn_train_stride < 1:
            raise ValueError("epoch caps and strides must be >= 1")

    @property
    def run_id(self) -> str:
        return f"s{self.seed}"

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)


def save_config(path, config: RunConfig) -> None:
    payload = asdict(config)
    payload["estimators"] = list(config.estimators)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_config(path) -> RunConfig:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ValueError("config file must hold a JSON object")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "estimators" in payload:
        payload["estimators"] = tuple(payload["estimators"])
    return RunConfig(**payload)


def apply_overrides(
    config: RunConfig,
    seed: int | None = None,
    out: str | None = None,
    estimators: tuple[str, ...] | None = None,
    input_set: str | None = None,
    catalogue: str | None = None,
) -> RunConfig:
    """Flag overrides; --input-set narrows the estimator selection."""
    if seed is not None:
        config = replace(config, seed=seed)
    if out is not None:
        config = replace(config, out_dir=out)
    if catalogue is not None:
        config = replace(config, catalogue=catalogue)
    if estimators is not None:
        config = replace(config, estimators=tuple(estimators))
    if input_set is not None:
        if input_set not in INPUT_SET_FILTERS:
            raise ValueError(f"unknown input set {input_set!r}; pick i1 or i2")
        keep = INPUT_SET_FILTERS[input_set]
        selected = tuple(e for e in config.estimators if e in keep)
        if not selected:
            raise ValueError(f"input set {input_set} leaves no selected estimators")
        config = replace(config, estimators=selected)
    return config
