"""Dataset file formats: per-manoeuvre frame CSVs, truth sidecars, manifests.

One manoeuvre = one CSV at 100 Hz with a mandatory header and fixed
column order. A sidecar `<id>_truth.csv` carries the plant's noise-free
channels that the KPI masks need. Floats are written with shortest
round-trip `repr`, so identical arrays produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FRAME_COLUMNS = (
    "t",
    "vx",
    "ax",
    "ay",
    "yaw_rate",
    "delta",
    "fx_fl",
    "fy_fl",
    "fz_fl",
    "fx_fr",
    "fy_fr",
    "fz_fr",
    "fx_rl",
    "fy_rl",
    "fz_rl",
    "fx_rr",
    "fy_rr",
    "fz_rr",
    "beta_true",
)

TRUTH_COLUMNS = ("t", "ay_true", "vy_true", "yawrate_true")

_COL_INDEX = {name: i for i, name in enumerate(FRAME_COLUMNS)}

DATASET_MANIFEST = "manifest.json"


@dataclass
class Manoeuvre:
    """One recorded manoeuvre: frames (N, 19) plus optional truth arrays."""

    id: str
    kind: str
    frames: np.ndarray
    truth: np.ndarray | None = None  # (N, 4) per TRUTH_COLUMNS
    outlier_flags: np.ndarray | None = None

    def col(self, name: str) -> np.ndarray:
        return self.frames[:, _COL_INDEX[name]]

    def truth_col(self, name: str) -> np.ndarray:
        if self.truth is None:
            raise ValueError(f"manoeuvre {self.id} has no truth sidecar")
        return self.truth[:, TRUTH_COLUMNS.index(name)]

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class Dataset:
    """Manoeuvre collection plus provenance."""

    manoeuvres: list[Manoeuvre]
    seed: int | None = None
    pipeline_version: str = "1"
    notes: dict = field(default_factory=dict)

    def by_id(self, mid: str) -> Manoeuvre:
        for m in self.manoeuvres:
            if m.id == mid:
                return m
        raise KeyError(mid)

    def subset(self, ids: list[str]) -> "Dataset":
        wanted = set(ids)
        return Dataset(
            manoeuvres=[m for m in self.manoeuvres if m.id in wanted],
            seed=self.seed,
            pipeline_version=self.pipeline_version,
            notes=dict(self.notes),
        )


def _write_table(path: Path, header: tuple[str, ...], data: np.ndarray) -> None:
    lines = [",".join(header)]
    for row in data:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_table(path: Path, expected_header: tuple[str, ...]) -> np.ndarray:
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != expected_header:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(expected_header):
        raise ValueError(f"{path}: expected {len(expected_header)} columns")
    return data


def write_manoeuvre(directory: Path, m: Manoeuvre) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{m.id}.csv"
    _write_table(path, FRAME_COLUMNS, m.frames)
    if m.truth is not None:
        _write_table(directory / f"{m.id}_truth.csv", TRUTH_COLUMNS, m.truth)
    return path


def read_manoeuvre(directory: Path, mid: str, kind: str) -> Manoeuvre:
    directory = Path(directory)
    frames = _read_table(directory / f"{mid}.csv", FRAME_COLUMNS)
    truth_path = directory / f"{mid}_truth.csv"
    truth = _read_table(truth_path, TRUTH_COLUMNS) if truth_path.exists() else None
    return Manoeuvre(id=mid, kind=kind, frames=frames, truth=truth)


def write_dataset(directory: Path, dataset: Dataset) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for m in dataset.manoeuvres:
        write_manoeuvre(directory, m)
        entries.append({"id": m.id, "kind": m.kind, "n_frames": int(len(m))})
    manifest = {
        "version": dataset.pipeline_version,
        "seed": dataset.seed,
        "manoeuvres": entries,
        "notes": dataset.notes,
    }
    (directory / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_dataset(directory: Path) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / DATASET_MANIFEST).read_text())
    manoeuvres = [
        read_manoeuvre(directory, e["id"], e["kind"]) for e in manifest["manoeuvres"]
    ]
    return Dataset(
        manoeuvres=manoeuvres,
        seed=manifest.get("seed"),
        pipeline_version=manifest.get("version", "1"),
        notes=manifest.get("notes", {}),
    )


def write_split_manifest(path: Path, split: dict[str, list[str]], seed: int | None) -> None:
    payload = {"version": "1", "seed": seed, "subsets": split}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_split_manifest(path: Path) -> dict[str, list[str]]:
    return json.loads(Path(path).read_text())["subsets"]


FILTER_OUTPUT_COLUMNS = ("t", "beta_hat", "beta_true", "vy_hat", "yawrate_hat", "p11", "p22", "adapt_flag")


def write_filter_output(path: Path, table: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _write_table(Path(path), FILTER_OUTPUT_COLUMNS, table)


def read_filter_output(path: Path) -> np.ndarray:
    return _read_table(Path(path), FILTER_OUTPUT_COLUMNS)


# regression predictions are reported directly in degrees
PREDICTION_COLUMNS = ("t", "beta_hat_deg", "beta_true_deg")


def write_prediction(path: Path, table: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _write_table(Path(path), PREDICTION_COLUMNS, table)


def read_prediction(path: Path) -> np.ndarray:
    return _read_table(Path(path), PREDICTION_COLUMNS)
