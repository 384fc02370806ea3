"""Exhaustive hyper-parameter search over a declared grid.

Every combination of (n_factors, alpha, beta) is trained on a seeded
sub-train split and scored by validation RMSE. Trials are independent, each
with its own seed derived from the base seed and the trial index, so the
report is identical whatever the parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Sequence

from .errors import TrainingDivergedError
from .ingest import InteractionTriple
from .model import Hyperparams
from .training import evaluate_rmse, split_train_test, train

_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def trial_seed(seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for trial `index` (splitmix64 stream)."""
    z = (seed + _GAMMA * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class Grid:
    """Value lists for the searched hyper-parameters; epoch count is fixed."""

    k_values: tuple[int, ...]
    alpha_values: tuple[float, ...]
    beta_values: tuple[float, ...]
    iterations: int

    def __post_init__(self):
        for name, values in (
            ("k_values", self.k_values),
            ("alpha_values", self.alpha_values),
            ("beta_values", self.beta_values),
        ):
            if len(values) == 0:
                raise ValueError(f"{name} is empty")
            if len(set(values)) != len(values):
                raise ValueError(f"{name} contains duplicates: {values}")
        if any(k < 1 for k in self.k_values):
            raise ValueError("k_values must be positive")
        if any(a <= 0 for a in self.alpha_values):
            raise ValueError("alpha_values must be positive")
        if any(b < 0 for b in self.beta_values):
            raise ValueError("beta_values must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def points(self) -> list[tuple[int, float, float]]:
        """Enumeration order: k outer, alpha middle, beta inner."""
        return list(product(self.k_values, self.alpha_values, self.beta_values))

    def __len__(self) -> int:
        return len(self.k_values) * len(self.alpha_values) * len(self.beta_values)


@dataclass
class SearchReport:
    """All trials in enumeration order plus the winning configuration."""

    best: Hyperparams
    best_rmse: float
    trials: list[tuple[Hyperparams, float]]


def _run_trial(
    subtrain: Sequence[InteractionTriple],
    validation: Sequence[InteractionTriple],
    variant: str,
    hyper: Hyperparams,
) -> float:
    try:
        model = train(subtrain, variant, hyper)
    except TrainingDivergedError:
        return float("inf")
    return evaluate_rmse(model, validation).rmse


def grid_search(
    trainset: Sequence[InteractionTriple],
    variant: str,
    grid: Grid,
    val_ratio: float,
    seed: int,
    jobs: int = 1,
) -> SearchReport:
    """Evaluate every grid point on a held-out validation slice of `trainset`.

    The slice holds out val_ratio of the rows (seeded, deterministic). Ties
    on validation RMSE resolve to the earliest point in enumeration order;
    diverged trials score +inf and the search continues.
    """
    if not 0 < val_ratio < 1:
        raise ValueError(f"val_ratio must be in (0, 1), got {val_ratio}")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    split = split_train_test(trainset, 1.0 - val_ratio, seed)
    if len(split.train) == 0 or len(split.test) == 0:
        raise ValueError(
            f"trainset too small for val_ratio {val_ratio}: "
            f"{len(split.train)} sub-train / {len(split.test)} validation rows"
        )

    hypers = [
        Hyperparams(k, alpha, beta, grid.iterations, trial_seed(seed, idx))
        for idx, (k, alpha, beta) in enumerate(grid.points())
    ]
    if jobs == 1:
        rmses = [_run_trial(split.train, split.test, variant, hp) for hp in hypers]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rmses = list(
                pool.map(lambda hp: _run_trial(split.train, split.test, variant, hp), hypers)
            )

    trials = list(zip(hypers, rmses))
    best_idx = 0
    for idx in range(1, len(trials)):
        if rmses[idx] < rmses[best_idx]:
            best_idx = idx
    return SearchReport(best=hypers[best_idx], best_rmse=rmses[best_idx], trials=trials)


TRIALS_CSV_HEADER = "K,alpha,beta,iterations,val_rmse"


def trials_csv(report: SearchReport) -> str:
    """Header plus one row per trial in enumeration order."""
    lines = [TRIALS_CSV_HEADER]
    for hyper, rmse in report.trials:
        lines.append(
            f"{hyper.n_factors},{hyper.alpha!r},{hyper.beta!r},{hyper.iterations},{rmse!r}"
        )
    return "\n".join(lines) + "\n"


def winner_kv(report: SearchReport) -> str:
    """key=value block describing the winning trial."""
    b = report.best
    lines = [
        f"k={b.n_factors}",
        f"alpha={b.alpha!r}",
        f"beta={b.beta!r}",
        f"iterations={b.iterations}",
        f"seed={b.seed}",
        f"val_rmse={report.best_rmse!r}",
    ]
    return "\n".join(lines) + "\n"
