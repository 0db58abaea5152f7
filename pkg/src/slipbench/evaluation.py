"""Sideslip KPI computation and reporting.

All KPIs are computed and reported in degrees; conversion from the
estimators' radian convention happens at this boundary and nowhere
else. KPIs over an empty frame selection are undefined and carried as
None (never NaN or a silent zero); tables render them as "n/a".

The nonlinear subset masks frames by |ay| >= 4 m/s^2 taken from the
noise-free truth channel, so sensor noise cannot move frames across
the regime boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

NONLINEAR_AY = 4.0  # m/s^2
HISTOGRAM_BIN_WIDTH = 0.25  # deg
UNDEFINED = "n/a"  # rendering of undefined KPIs in tables and CSV

KPI_FIELDS = ("rmse", "rmse_nl", "max_error", "max_error_nl")


@dataclass(frozen=True)
class Kpis:
    rmse: float | None
    rmse_nl: float | None
    max_error: float | None
    max_error_nl: float | None
    n_frames: int = 0
    n_frames_nl: int = 0

    def as_row(self) -> list:
        return [getattr(self, f) for f in KPI_FIELDS]


def rmse(errors: np.ndarray) -> float | None:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return None
    return float(np.sqrt(np.mean(errors**2)))


def max_abs_error(errors: np.ndarray) -> float | None:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return None
    return float(np.max(np.abs(errors)))


def compute_kpis(
    beta_hat_deg: np.ndarray,
    beta_true_deg: np.ndarray,
    ay_true: np.ndarray,
    nl_threshold: float = NONLINEAR_AY,
) -> Kpis:
    """Pooled KPIs for one estimator over one frame selection (degrees)."""
    beta_hat_deg = np.asarray(beta_hat_deg, dtype=float)
    beta_true_deg = np.asarray(beta_true_deg, dtype=float)
    ay_true = np.asarray(ay_true, dtype=float)
    if not (beta_hat_deg.shape == beta_true_deg.shape == ay_true.shape):
        raise ValueError("estimate, truth, and ay channels must align")
    errors = beta_hat_deg - beta_true_deg
    mask = np.abs(ay_true) >= nl_threshold
    return Kpis(
        rmse=rmse(errors),
        rmse_nl=rmse(errors[mask]),
        max_error=max_abs_error(errors),
        max_error_nl=max_abs_error(errors[mask]),
        n_frames=int(errors.size),
        n_frames_nl=int(mask.sum()),
    )


def pool_segments(segments: list[tuple[np.ndarray, np.ndarray, np.ndarray]]) -> Kpis:
    """KPIs over the concatenation of (beta_hat, beta_true, ay) segments."""
    if not segments:
        return Kpis(None, None, None, None, 0, 0)
    hat = np.concatenate([s[0] for s in segments])
    true = np.concatenate([s[1] for s in segments])
    ay = np.concatenate([s[2] for s in segments])
    return compute_kpis(hat, true, ay)


# ---------------------------------------------------------------------------
# Histogram


def error_histogram(
    errors_deg: np.ndarray, bin_width: float = HISTOGRAM_BIN_WIDTH
) -> tuple[np.ndarray, np.ndarray]:
    """Counts over half-open bins [edge, edge + width) centered on zero.

    The central bin spans [-width/2, +width/2); edges extend just far
    enough to cover every error, so counts are conserved.
    """
    errors = np.asarray(errors_deg, dtype=float)
    if errors.size == 0:
        edges = np.array([-bin_width / 2.0, bin_width / 2.0])
        return edges, np.zeros(1, dtype=int)
    # index of the bin containing x: floor((x + width/2) / width)
    idx = np.floor((errors + bin_width / 2.0) / bin_width).astype(int)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    edges = (np.arange(lo, hi + 2) - 0.5) * bin_width
    return edges, counts


def save_histogram_svg(path, errors_deg: np.ndarray, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    edges, counts = error_histogram(errors_deg)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="black")
    ax.set_xlabel("sideslip error [deg]")
    ax.set_ylabel("frames")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# Tables

# Published benchmark KPIs (deg) used by the reference comparison mode.
REFERENCE_KPIS = {
    "EKF": Kpis(0.421, 0.563, 1.368, 1.271),
    "EKF-Tyre": Kpis(0.391, 0.488, 1.257, 1.169),
    "UKF": Kpis(0.394, 0.490, 1.180, 1.068),
    "UKF-Tyre": Kpis(0.370, 0.448, 1.113, 0.994),
    "FFNN": Kpis(0.379, 0.645, 1.635, 1.509),
    "FFNN-Tyre": Kpis(0.209, 0.206, 0.784, 0.592),
    "RNN": Kpis(0.392, 0.560, 1.649, 1.495),
    "RNN-Tyre": Kpis(0.225, 0.234, 0.783, 0.643),
}

_TABLE_HEADER = ("estimator",) + KPI_FIELDS


def _fmt(value: float | None) -> str:
    return UNDEFINED if value is None else f"{value:.3f}"


def comparison_table(
    results: dict[str, Kpis], include_reference: bool = False
) -> tuple[str, str]:
    """(csv, aligned_text) for a set of estimator KPI rows.

    With include_reference=True each estimator that has a published
    benchmark row gains a companion "<name> (reference)" row.
    """
    rows: list[list[str]] = [list(_TABLE_HEADER)]
    for name, kpis in results.items():
        rows.append([name] + [_fmt(v) for v in kpis.as_row()])
        if include_reference and name in REFERENCE_KPIS:
            ref = REFERENCE_KPIS[name]
            rows.append([f"{name} (reference)"] + [_fmt(v) for v in ref.as_row()])
    csv = "\n".join(",".join(r) for r in rows) + "\n"
    widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
    text = (
        "\n".join(
            "  ".join(
                cell.ljust(widths[j]) if j == 0 else cell.rjust(widths[j])
                for j, cell in enumerate(r)
            )
            for r in rows
        )
        + "\n"
    )
    return csv, text


def kpi_csv_rows(per_manoeuvre: dict[str, Kpis], pooled: Kpis) -> str:
    """CSV with one row per manoeuvre and a final pooled row."""
    header = ("manoeuvre", "n_frames", "n_frames_nl") + KPI_FIELDS
    lines = [",".join(header)]
    for mid in sorted(per_manoeuvre):
        k = per_manoeuvre[mid]
        lines.append(
            ",".join(
                [mid, str(k.n_frames), str(k.n_frames_nl)] + [_fmt(v) for v in k.as_row()]
            )
        )
    lines.append(
        ",".join(
            ["pooled", str(pooled.n_frames), str(pooled.n_frames_nl)]
            + [_fmt(v) for v in pooled.as_row()]
        )
    )
    return "\n".join(lines) + "\n"


def write_kpi_report(
    out_dir, run_id: str, estimator: str, per_manoeuvre: dict[str, Kpis], pooled: Kpis
) -> Path:
    """Write `<runid>_<estimator>_kpi.csv` and return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{run_id}_{estimator}_kpi.csv"
    path.write_text(kpi_csv_rows(per_manoeuvre, pooled))
    return path
