"""Latent-factor model: data types, prediction, regularized loss, file format.

Two variants: "plain" predicts the user/item factor dot product; "biased"
adds a global mean and per-user/per-item offsets. The global mean is stored
on both variants because evaluation falls back to it for cold-start pairs,
but plain prediction never uses it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError

PLAIN = "plain"
BIASED = "biased"
VARIANTS = (PLAIN, BIASED)

_FLOAT_FMT = ".17g"  # round-trips float64 exactly


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs: factor count, learning rate, regularization, epochs, seed."""

    n_factors: int
    alpha: float
    beta: float
    iterations: int
    seed: int

    def __post_init__(self):
        if self.n_factors < 1:
            raise ValueError(f"n_factors must be >= 1, got {self.n_factors}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


@dataclass
class FactorModel:
    """Learned user/item factors plus optional biases and training metadata.

    user_seen/item_seen mark which indices actually occurred in the training
    data; rows for unseen indices hold their untouched random initialization
    and must not be used for prediction (the evaluator treats those pairs as
    cold-start).
    """

    variant: str
    user_factors: np.ndarray  # (U, K)
    item_factors: np.ndarray  # (I, K)
    global_mean: float
    user_bias: np.ndarray | None  # (U,), biased only
    item_bias: np.ndarray | None  # (I,), biased only
    hyper: Hyperparams
    rating_bounds: tuple[float, float]
    user_seen: np.ndarray  # (U,) bool
    item_seen: np.ndarray  # (I,) bool
    final_train_loss: float = float("nan")

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("user and item factor matrices must share the factor dimension")
        if self.variant == PLAIN and (self.user_bias is not None or self.item_bias is not None):
            raise ValueError("plain variant has no bias vectors")
        if self.variant == BIASED and (self.user_bias is None or self.item_bias is None):
            raise ValueError("biased variant requires bias vectors")
        if self.rating_bounds[0] > self.rating_bounds[1]:
            raise ValueError(f"rating_bounds out of order: {self.rating_bounds}")

    @property
    def n_users(self) -> int:
        return self.user_factors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[0]

    @property
    def n_factors(self) -> int:
        return self.user_factors.shape[1]


def _check_index(name: str, idx: int, size: int) -> None:
    if not 0 <= idx < size:
        raise IndexError(f"{name} index {idx} out of range [0, {size})")


def predict_plain(model: FactorModel, u: int, i: int) -> float:
    """Dot product of the user and item factor rows; no clamping here."""
    _check_index("user", u, model.n_users)
    _check_index("item", i, model.n_items)
    return float(np.dot(model.user_factors[u], model.item_factors[i]))


def predict_biased(model: FactorModel, u: int, i: int) -> float:
    """Global mean + user bias + item bias + factor dot product."""
    _check_index("user", u, model.n_users)
    _check_index("item", i, model.n_items)
    return float(
        model.global_mean
        + model.user_bias[u]
        + model.item_bias[i]
        + np.dot(model.user_factors[u], model.item_factors[i])
    )


def predict(model: FactorModel, u: int, i: int) -> float:
    """Variant-appropriate prediction."""
    if model.variant == BIASED:
        return predict_biased(model, u, i)
    return predict_plain(model, u, i)


def penalty(model: FactorModel) -> float:
    """Regularization term: beta times the squared Frobenius norms (biases included)."""
    beta = model.hyper.beta
    total = float(np.add.reduce(model.user_factors.ravel() ** 2)) + float(
        np.add.reduce(model.item_factors.ravel() ** 2)
    )
    if model.variant == BIASED:
        total += float(np.add.reduce(model.user_bias**2))
        total += float(np.add.reduce(model.item_bias**2))
    return beta * total


def regularized_loss(model: FactorModel, dataset: Sequence) -> float:
    """Sum of squared residuals over the dataset plus the regularization penalty.

    An empty dataset yields the bare penalty.
    """
    if len(dataset) == 0:
        return penalty(model)
    users = np.fromiter((t.user_id for t in dataset), dtype=np.int64, count=len(dataset))
    items = np.fromiter((t.item_id for t in dataset), dtype=np.int64, count=len(dataset))
    ratings = np.fromiter((t.interaction for t in dataset), dtype=np.float64, count=len(dataset))
    if users.max() >= model.n_users or items.max() >= model.n_items:
        raise IndexError("dataset indices exceed model dimensions")
    preds = np.einsum("ij,ij->i", model.user_factors[users], model.item_factors[items])
    if model.variant == BIASED:
        preds = preds + model.global_mean + model.user_bias[users] + model.item_bias[items]
    res = ratings - preds
    return float(np.add.reduce(res * res)) + penalty(model)


def _fmt(x: float) -> str:
    return format(float(x), _FLOAT_FMT)


def _fmt_row(row: Iterable[float]) -> str:
    return " ".join(_fmt(v) for v in row)


def save_model(model: FactorModel, path: str | Path) -> None:
    """Write the single-file text format.

    Layout: header `variant,U,I,K,mu`, then U rows of user factors, I rows of
    item factors, the two bias rows for the biased variant, and a trailing
    key=value block (rating bounds, hyper-parameters, train loss, seen masks).
    Values are printed with 17 significant digits so the round trip is exact.
    """
    lines = [f"{model.variant},{model.n_users},{model.n_items},{model.n_factors},{_fmt(model.global_mean)}"]
    lines.extend(_fmt_row(row) for row in model.user_factors)
    lines.extend(_fmt_row(row) for row in model.item_factors)
    if model.variant == BIASED:
        lines.append(_fmt_row(model.user_bias))
        lines.append(_fmt_row(model.item_bias))
    lines.append(f"rating_min={_fmt(model.rating_bounds[0])}")
    lines.append(f"rating_max={_fmt(model.rating_bounds[1])}")
    lines.append(f"k={model.hyper.n_factors}")
    lines.append(f"alpha={_fmt(model.hyper.alpha)}")
    lines.append(f"beta={_fmt(model.hyper.beta)}")
    lines.append(f"iterations={model.hyper.iterations}")
    lines.append(f"seed={model.hyper.seed}")
    lines.append(f"train_loss={_fmt(model.final_train_loss)}")
    lines.append("seen_users=" + "".join("1" if s else "0" for s in model.user_seen))
    lines.append("seen_items=" + "".join("1" if s else "0" for s in model.item_seen))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_vector(line: str, expect: int, what: str, line_no: int, path: str) -> np.ndarray:
    parts = line.split()
    if len(parts) != expect:
        raise ParseError(
            f"{what}: expected {expect} values, got {len(parts)}", line_no=line_no, path=path
        )
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise ParseError(f"{what}: non-numeric value", line_no=line_no, path=path) from None


def load_model(path: str | Path) -> FactorModel:
    """Read a model file written by save_model."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty model file", path=str(path))
    header = lines[0].split(",")
    if len(header) != 5:
        raise ParseError("header must be variant,U,I,K,mu", line_no=1, path=str(path))
    variant = header[0]
    if variant not in VARIANTS:
        raise ParseError(f"unknown variant {variant!r}", line_no=1, path=str(path))
    try:
        n_users, n_items, n_factors = int(header[1]), int(header[2]), int(header[3])
        mu = float(header[4])
    except ValueError:
        raise ParseError("malformed header", line_no=1, path=str(path)) from None

    n_bias_rows = 2 if variant == BIASED else 0
    body_end = 1 + n_users + n_items + n_bias_rows
    if len(lines) < body_end:
        raise ParseError("truncated model file", path=str(path))

    rows = []
    for offset in range(n_users):
        rows.append(_parse_vector(lines[1 + offset], n_factors, "user factors", 2 + offset, str(path)))
    user_factors = np.vstack(rows) if rows else np.empty((0, n_factors))
    rows = []
    for offset in range(n_items):
        line_no = 1 + n_users + offset
        rows.append(_parse_vector(lines[line_no], n_factors, "item factors", line_no + 1, str(path)))
    item_factors = np.vstack(rows) if rows else np.empty((0, n_factors))

    user_bias = item_bias = None
    if variant == BIASED:
        line_no = 1 + n_users + n_items
        user_bias = _parse_vector(lines[line_no], n_users, "user bias", line_no + 1, str(path))
        item_bias = _parse_vector(lines[line_no + 1], n_items, "item bias", line_no + 2, str(path))

    kv: dict[str, str] = {}
    for offset, line in enumerate(lines[body_end:]):
        if not line.strip():
            continue
        if "=" not in line:
            raise ParseError(
                f"expected key=value, got {line!r}", line_no=body_end + offset + 1, path=str(path)
            )
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()

    required = {"rating_min", "rating_max", "k", "alpha", "beta", "iterations", "seed",
                "train_loss", "seen_users", "seen_items"}
    missing = required - kv.keys()
    if missing:
        raise ParseError(f"missing keys in trailing block: {sorted(missing)}", path=str(path))

    hyper = Hyperparams(
        n_factors=int(kv["k"]),
        alpha=float(kv["alpha"]),
        beta=float(kv["beta"]),
        iterations=int(kv["iterations"]),
        seed=int(kv["seed"]),
    )
    if hyper.n_factors != n_factors:
        raise ParseError("k in trailing block disagrees with header K", path=str(path))

    def mask(key: str, expect: int) -> np.ndarray:
        bits = kv[key]
        if len(bits) != expect or set(bits) - {"0", "1"}:
            raise ParseError(f"{key} must be {expect} chars of 0/1", path=str(path))
        return np.frombuffer(bits.encode("ascii"), dtype=np.uint8) == ord("1")

    return FactorModel(
        variant=variant,
        user_factors=user_factors,
        item_factors=item_factors,
        global_mean=mu,
        user_bias=user_bias,
        item_bias=item_bias,
        hyper=hyper,
        rating_bounds=(float(kv["rating_min"]), float(kv["rating_max"])),
        user_seen=mask("seen_users", n_users),
        item_seen=mask("seen_items", n_items),
        final_train_loss=float(kv["train_loss"]),
    )
