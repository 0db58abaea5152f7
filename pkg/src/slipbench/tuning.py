"""Gaussian-process Bayesian optimization with expected improvement.

Everything here is self-contained numpy: a squared-exponential ARD
kernel whose lengthscales and noise floor are picked by marginal
likelihood over a small grid (isotropic sweep, then one coordinate
pass per dimension), Latin-hypercube bootstrap trials, and EI
maximized over a seeded candidate cloud.

Objectives are minimized. An objective may raise DivergenceError (or
FilterSingularityError) for a hopeless configuration; the trial is
kept with a penalty value — ten times the worst finite result so far,
or 1e3 while no finite result exists — so the surrogate learns to
avoid the region without poisoning it with infinities.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kalman import FilterSingularityError
from .vehicle import DivergenceError

BOOTSTRAP_PENALTY = 1e3
DIVERGENCE_FACTOR = 10.0

_LENGTH_GRID = (0.1, 0.2, 0.5, 1.0, 2.0)
_NOISE_GRID = (1e-6, 1e-4, 1e-2)
_JITTER = 1e-10


@dataclass(frozen=True)
class ParamSpace:
    """Box-bounded search space; log-scaled dims search in log10."""

    names: tuple[str, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]
    scales: tuple[str, ...] | None = None

    def __post_init__(self):
        if not (len(self.names) == len(self.lows) == len(self.highs)):
            raise ValueError("names, lows, highs must have equal length")
        scales = self.scales or ("linear",) * len(self.names)
        object.__setattr__(self, "scales", scales)
        if len(scales) != len(self.names):
            raise ValueError("one scale per dimension required")
        for name, lo, hi, sc in zip(self.names, self.lows, self.highs, scales):
            if not hi > lo:
                raise ValueError(f"{name}: bounds must satisfy low < high")
            if sc not in ("linear", "log"):
                raise ValueError(f"{name}: unknown scale {sc!r}")
            if sc == "log" and lo <= 0:
                raise ValueError(f"{name}: log scale needs positive bounds")

    @property
    def dim(self) -> int:
        return len(self.names)

    def contains(self, params: dict[str, float]) -> bool:
        return set(params) == set(self.names) and all(
            lo <= params[name] <= hi
            for name, lo, hi in zip(self.names, self.lows, self.highs)
        )

    def to_physical(self, unit: np.ndarray) -> dict[str, float]:
        out = {}
        for j, (name, lo, hi, sc) in enumerate(
            zip(self.names, self.lows, self.highs, self.scales)
        ):
            u = float(unit[j])
            if sc == "log":
                v = 10 ** (math.log10(lo) + u * (math.log10(hi) - math.log10(lo)))
            else:
                v = lo + u * (hi - lo)
            # round-trip through log10 can land a hair outside the box
            out[name] = min(max(v, lo), hi)
        return out

    def to_unit(self, params: dict[str, float]) -> np.ndarray:
        unit = np.empty(self.dim)
        for j, (name, lo, hi, sc) in enumerate(
            zip(self.names, self.lows, self.highs, self.scales)
        ):
            v = params[name]
            if sc == "log":
                unit[j] = (math.log10(v) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
            else:
                unit[j] = (v - lo) / (hi - lo)
        return unit


@dataclass
class Trial:
    params: dict[str, float]
    value: float
    diverged: bool = False
    wall_time: float = 0.0

    @property
    def status(self) -> str:
        return "failed" if self.diverged else "completed"


def latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """n stratified points in the unit cube, one per stratum per dim."""
    out = np.empty((n, dim))
    for j in range(dim):
        out[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return out


def bootstrap_count(dim: int) -> int:
    return max(5, dim + 1)


# ---------------------------------------------------------------------------
# Gaussian process surrogate


def _sq_dists(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    sa = a / lengthscales
    sb = b / lengthscales
    return (
        np.sum(sa**2, axis=1)[:, None]
        + np.sum(sb**2, axis=1)[None, :]
        - 2.0 * sa @ sb.T
    )


class GpSurrogate:
    """Zero-mean GP on standardized targets, SE-ARD kernel."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._y_mean = float(y.mean())
        self._y_std = float(y.std()) or 1.0
        self._yn = (y - self._y_mean) / self._y_std
        self.lengthscales, self.noise = self._select_hyperparameters()
        self._factorize(self.lengthscales, self.noise)

    def _kernel(self, a, b, lengthscales):
        return np.exp(-0.5 * np.maximum(_sq_dists(a, b, lengthscales), 0.0))

    def _log_marginal(self, lengthscales, noise):
        n = len(self.x)
        k = self._kernel(self.x, self.x, lengthscales) + (noise + _JITTER) * np.eye(n)
        try:
            chol = np.linalg.cholesky(k)
        except np.linalg.LinAlgError:
            return -np.inf
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, self._yn))
        return float(
            -0.5 * self._yn @ alpha
            - np.sum(np.log(np.diag(chol)))
            - 0.5 * n * math.log(2.0 * math.pi)
        )

    def _select_hyperparameters(self):
        dim = self.x.shape[1]
        best = (-np.inf, np.full(dim, 0.5), _NOISE_GRID[0])
        for ell in _LENGTH_GRID:
            for noise in _NOISE_GRID:
                ls = np.full(dim, ell)
                lml = self._log_marginal(ls, noise)
                if lml > best[0]:
                    best = (lml, ls, noise)
        _, ls, noise = best
        # one ARD refinement pass: tune each dimension holding the rest
        for j in range(dim):
            for ell in _LENGTH_GRID:
                trial = ls.copy()
                trial[j] = ell
                lml = self._log_marginal(trial, noise)
                if lml > best[0]:
                    best = (lml, trial, noise)
            ls = best[1]
        return best[1], best[2]

    def _factorize(self, lengthscales, noise):
        n = len(self.x)
        k = self._kernel(self.x, self.x, lengthscales) + (noise + _JITTER) * np.eye(n)
        self._chol = np.linalg.cholesky(k)
        self._alpha = np.linalg.solve(self._chol.T, np.linalg.solve(self._chol, self._yn))

    def predict(self, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in original y units."""
        ks = self._kernel(self.x, candidates, self.lengthscales)
        mu = ks.T @ self._alpha
        v = np.linalg.solve(self._chol, ks)
        var = np.maximum(1.0 + self.noise - np.sum(v**2, axis=0), 0.0)
        return (
            mu * self._y_std + self._y_mean,
            np.sqrt(var) * self._y_std,
        )


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """EI for minimization; zero wherever the posterior is deterministic."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improve = best - mu
    ei = np.maximum(improve, 0.0)
    positive = sigma > 0.0
    z = improve[positive] / sigma[positive]
    cdf = 0.5 * (1.0 + np.array([math.erf(v / math.sqrt(2.0)) for v in z]))
    pdf = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
    ei[positive] = improve[positive] * cdf + sigma[positive] * pdf
    return ei


# ---------------------------------------------------------------------------
# Optimization loop


def propose(
    space: ParamSpace,
    trials: list[Trial],
    rng: np.random.Generator,
    n_candidates: int = 2048,
) -> dict[str, float]:
    """Next configuration: EI argmax over a seeded candidate cloud."""
    x = np.array([space.to_unit(t.params) for t in trials])
    y = np.array([t.value for t in trials])
    gp = GpSurrogate(x, y)
    candidates = rng.uniform(size=(n_candidates, space.dim))
    # local refinement cloud around the incumbent
    incumbent = x[int(np.argmin(y))]
    local = np.clip(
        incumbent + rng.normal(scale=0.05, size=(n_candidates // 8, space.dim)), 0.0, 1.0
    )
    candidates = np.vstack([candidates, local])
    mu, sigma = gp.predict(candidates)
    ei = expected_improvement(mu, sigma, float(y.min()))
    return space.to_physical(candidates[int(np.argmax(ei))])


def _penalty(trials: list[Trial]) -> float:
    finite = [t.value for t in trials if not t.diverged]
    if not finite:
        return BOOTSTRAP_PENALTY
    return DIVERGENCE_FACTOR * max(abs(v) for v in finite)


def _evaluate(objective, space: ParamSpace, params, trials) -> Trial:
    if not space.contains(params):
        raise ValueError(f"assignment outside the search space: {params}")
    start = time.perf_counter()
    try:
        value = float(objective(**params))
    except (DivergenceError, FilterSingularityError):
        return Trial(
            params=params,
            value=_penalty(trials),
            diverged=True,
            wall_time=time.perf_counter() - start,
        )
    elapsed = time.perf_counter() - start
    if not math.isfinite(value):
        return Trial(params=params, value=_penalty(trials), diverged=True, wall_time=elapsed)
    return Trial(params=params, value=value, diverged=False, wall_time=elapsed)


def save_trials(path, trials: list[Trial]) -> None:
    payload = [
        {
            "params": t.params,
            "value": t.value,
            "status": t.status,
            "wall_time": t.wall_time,
        }
        for t in trials
    ]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_trials(path) -> list[Trial]:
    payload = json.loads(Path(path).read_text())
    return [
        Trial(
            params=e["params"],
            value=e["value"],
            diverged=e["status"] == "failed",
            wall_time=e.get("wall_time", 0.0),
        )
        for e in payload
    ]


def run_optimization(
    objective,
    space: ParamSpace,
    budget: int,
    seed: int = 0,
    history_path=None,
    n_candidates: int = 2048,
) -> tuple[dict[str, float], list[Trial]]:
    """Minimize `objective(**params)` under a fixed evaluation budget.

    With a history_path, previous trials are loaded and the budget
    counts total trials, so an interrupted run resumes where it left
    off. Returns (best finite params, all trials).
    """
    if budget < 5:
        raise ValueError("budget must be >= 5")
    trials: list[Trial] = []
    if history_path is not None and Path(history_path).exists():
        trials = load_trials(history_path)

    rng = np.random.Generator(np.random.PCG64(seed))
    n_boot = bootstrap_count(space.dim)
    plan = latin_hypercube(n_boot, space.dim, rng)

    while len(trials) < budget:
        k = len(trials)
        if k < n_boot:
            params = space.to_physical(plan[k])
        else:
            params = propose(space, trials, rng, n_candidates)
        trials.append(_evaluate(objective, space, params, trials))
        if history_path is not None:
            save_trials(history_path, trials)

    finite = [t for t in trials if not t.diverged]
    if not finite:
        raise DivergenceError("every trial in the tuning budget diverged")
    best = min(finite, key=lambda t: t.value)
    return dict(best.params), trials
