"""Seeded train/test split, SGD training, and RMSE evaluation.

The SGD loop is sequential by contract: sample order (a fresh seeded shuffle
per epoch) determines the result bit-for-bit, so identical inputs and seed
reproduce identical models on any machine/thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TrainingDivergedError
from .ingest import InteractionTriple
from .model import BIASED, PLAIN, FactorModel, Hyperparams, regularized_loss


@dataclass
class SplitDataset:
    """A disjoint train/test partition of an interaction dataset."""

    train: list[InteractionTriple]
    test: list[InteractionTriple]
    ratio: float
    seed: int


@dataclass
class EvalReport:
    """Test-set RMSE plus the counts needed to interpret it."""

    rmse: float
    n_test: int
    n_coldstart: int
    epochs_run: int
    final_train_loss: float


def train_size(n: int, ratio: float) -> int:
    """Rows assigned to the train side: floor(ratio * n).

    Floor (not round-half-up) is deliberate: it reproduces the reference
    LiveTV split 426,356 -> 298,449/127,907 and the VoD split
    206,334 -> 144,433/61,901 at ratio 0.7.
    """
    return int(n * ratio)


def split_train_test(
    dataset: Sequence[InteractionTriple], ratio: float, seed: int
) -> SplitDataset:
    """Seeded random partition; deterministic for fixed (input order, ratio, seed)."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_train = train_size(len(dataset), ratio)
    train = [dataset[i] for i in order[:n_train]]
    test = [dataset[i] for i in order[n_train:]]
    return SplitDataset(train=train, test=test, ratio=ratio, seed=seed)


def train(
    trainset: Sequence[InteractionTriple], variant: str, hyper: Hyperparams
) -> FactorModel:
    """Fit a factor model to the train ratings by per-sample gradient descent.

    Factors start as seeded Gaussian(0, 0.1) draws, biases at zero, and the
    global mean is fixed to the train-rating mean (never updated). Each epoch
    shuffles the samples with the same generator; per sample the error
    e = r - r_hat is computed from pre-update parameters and both factor rows
    (and the two biases, for the biased variant) step by
    alpha * (e * other - beta * self) simultaneously.
    """
    if len(trainset) == 0:
        raise ValueError("trainset is empty")
    if variant not in (PLAIN, BIASED):
        raise ValueError(f"unknown variant {variant!r}")

    users = np.fromiter((t.user_id for t in trainset), dtype=np.int64, count=len(trainset))
    items = np.fromiter((t.item_id for t in trainset), dtype=np.int64, count=len(trainset))
    ratings = np.fromiter((t.interaction for t in trainset), dtype=np.float64, count=len(trainset))

    n_users = int(users.max()) + 1
    n_items = int(items.max()) + 1
    k = hyper.n_factors
    rng = np.random.default_rng(hyper.seed)
    w = rng.normal(0.0, 0.1, size=(n_users, k))
    h = rng.normal(0.0, 0.1, size=(n_items, k))
    b_user = np.zeros(n_users)
    b_item = np.zeros(n_items)
    mu = float(np.add.reduce(ratings) / len(ratings))
    biased = variant == BIASED

    alpha = hyper.alpha
    shrink = 1.0 - alpha * hyper.beta
    n = len(trainset)
    # divergence surfaces as inf/nan and is caught by the per-epoch finite
    # check; the intermediate overflow warnings are just noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, hyper.iterations + 1):
            order = rng.permutation(n)
            eu = users[order].tolist()
            ei = items[order].tolist()
            er = ratings[order].tolist()
            if biased:
                for u, i, r in zip(eu, ei, er):
                    wu = w[u]
                    hi = h[i]
                    bu = b_user[u]
                    bi = b_item[i]
                    e = r - (mu + bu + bi + wu.dot(hi))
                    ae = alpha * e
                    # wu/hi are views; build both new rows before writing either
                    new_w = wu * shrink + ae * hi
                    new_h = hi * shrink + ae * wu
                    w[u] = new_w
                    h[i] = new_h
                    b_user[u] = bu * shrink + ae
                    b_item[i] = bi * shrink + ae
            else:
                for u, i, r in zip(eu, ei, er):
                    wu = w[u]
                    hi = h[i]
                    e = r - wu.dot(hi)
                    ae = alpha * e
                    new_w = wu * shrink + ae * hi
                    new_h = hi * shrink + ae * wu
                    w[u] = new_w
                    h[i] = new_h
            finite = np.isfinite(w).all() and np.isfinite(h).all()
            if biased:
                finite = finite and np.isfinite(b_user).all() and np.isfinite(b_item).all()
            if not finite:
                raise TrainingDivergedError(epoch)

    user_seen = np.zeros(n_users, dtype=bool)
    user_seen[users] = True
    item_seen = np.zeros(n_items, dtype=bool)
    item_seen[items] = True

    model = FactorModel(
        variant=variant,
        user_factors=w,
        item_factors=h,
        global_mean=mu,
        user_bias=b_user if biased else None,
        item_bias=b_item if biased else None,
        hyper=hyper,
        rating_bounds=(float(ratings.min()), float(ratings.max())),
        user_seen=user_seen,
        item_seen=item_seen,
    )
    model.final_train_loss = regularized_loss(model, trainset)
    return model


def evaluate_rmse(model: FactorModel, testset: Sequence[InteractionTriple]) -> EvalReport:
    """RMSE over the test pairs with predictions clamped to the train rating range.

    Cold-start pairs (user or item unseen in training, including indices
    beyond the model's dimensions) fall back to the global mean plus whichever
    bias is known; they are counted, not dropped, so RMSE covers the full
    test set. Accumulation is sequential in index order for run-to-run
    identical results.
    """
    if len(testset) == 0:
        raise ValueError("testset is empty")
    lo, hi = model.rating_bounds
    biased = model.variant == BIASED
    n_users = model.n_users
    n_items = model.n_items
    total = 0.0
    n_cold = 0
    for t in testset:
        u = t.user_id
        i = t.item_id
        user_known = u < n_users and model.user_seen[u]
        item_known = i < n_items and model.item_seen[i]
        if user_known and item_known:
            pred = float(np.dot(model.user_factors[u], model.item_factors[i]))
            if biased:
                pred += model.global_mean + model.user_bias[u] + model.item_bias[i]
        else:
            n_cold += 1
            pred = model.global_mean
            if biased:
                if user_known:
                    pred += model.user_bias[u]
                if item_known:
                    pred += model.item_bias[i]
        if pred < lo:
            pred = lo
        elif pred > hi:
            pred = hi
        res = t.interaction - pred
        total += res * res
    return EvalReport(
        rmse=float(np.sqrt(total / len(testset))),
        n_test=len(testset),
        n_coldstart=n_cold,
        epochs_run=model.hyper.iterations,
        final_train_loss=model.final_train_loss,
    )


_EVAL_FIELDS = ("rmse", "n_test", "n_coldstart", "epochs_run", "final_train_loss")


def eval_report_kv(report: EvalReport) -> str:
    """key=value block, one field per line."""
    return "\n".join(f"{name}={getattr(report, name)!r}" for name in _EVAL_FIELDS) + "\n"


def eval_report_csv_row(report: EvalReport) -> str:
    """One machine-readable CSV row matching EVAL_CSV_HEADER."""
    return ",".join(repr(getattr(report, name)) for name in _EVAL_FIELDS)


EVAL_CSV_HEADER = ",".join(_EVAL_FIELDS)
