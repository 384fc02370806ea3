"""Synthetic CDN-like logs and rated datasets with known ground truth.

Request streams draw items from a bounded Zipf law (configurable exponent)
and users from Zipf(1.2), mimicking skewed content demand. Rated datasets
come from a sampled ground-truth factor model so training quality can be
measured against a generator oracle instead of proprietary data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import InteractionTriple, LogRecord
from .model import BIASED, FactorModel, Hyperparams

USER_ACTIVITY_EXPONENT = 1.2
RATING_MIN = 0
RATING_MAX = 10  # mirrors the observed interaction scale under round(ln(.))
_BASE_TIMESTAMP = 1_600_000_000.0
_GLOBAL_MEAN = 5.0


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for both generators; n_events doubles as the rated-pair budget."""

    n_users: int
    n_items: int
    zipf_s: float
    k_true: int
    noise_sigma: float
    n_events: int
    seed: int

    def __post_init__(self):
        for name in ("n_users", "n_items", "k_true", "n_events"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.zipf_s > 0:
            raise ValueError(f"zipf_s must be > 0, got {self.zipf_s}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def zipf_weights(n: int, s: float) -> np.ndarray:
    """Normalized bounded-Zipf probabilities over ranks 1..n."""
    ranks = np.arange(1, n + 1, dtype=np.float64)
    weights = ranks**-s
    return weights / weights.sum()


def generate_logs(config: SynthConfig) -> list[LogRecord]:
    """Emit n_events LiveTV-shaped records with strictly increasing timestamps."""
    rng = np.random.default_rng(config.seed)
    item_p = zipf_weights(config.n_items, config.zipf_s)
    user_p = zipf_weights(config.n_users, USER_ACTIVITY_EXPONENT)
    items = rng.choice(config.n_items, size=config.n_events, p=item_p)
    users = rng.choice(config.n_users, size=config.n_events, p=user_p)
    # 1ms floor keeps timestamps strictly increasing after float addition
    gaps = 0.001 + rng.exponential(1.0, size=config.n_events)
    timestamps = _BASE_TIMESTAMP + np.cumsum(gaps)
    lengths = rng.integers(1 << 20, 8 << 20, size=config.n_events)
    hit_draws = rng.random(config.n_events) < 0.5
    return [
        LogRecord(
            timestamp=float(timestamps[n]),
            uid=f"u{users[n]:06d}",
            livechannel=f"ch{items[n]:04d}",
            contentlength=int(lengths[n]),
            hit=bool(hit_draws[n]),
        )
        for n in range(config.n_events)
    ]


def generate_rated_dataset(
    config: SynthConfig,
) -> tuple[list[InteractionTriple], FactorModel]:
    """Sample a ground-truth model and rate a Zipf-weighted subset of pairs.

    Ratings are round(mu + w_u . h_i + noise) clamped to 0..10. The observed
    pairs are min(n_events, n_users * n_items) distinct cells drawn without
    replacement with probability proportional to user activity x item
    popularity. The returned model is the oracle: its predictions are the
    pre-noise, pre-rounding ratings.
    """
    rng = np.random.default_rng(config.seed)
    # factor scale chosen so the dot product has stddev ~2 on the 0..10 scale
    scale = (4.0 / config.k_true) ** 0.25
    w_true = rng.normal(0.0, scale, size=(config.n_users, config.k_true))
    h_true = rng.normal(0.0, scale, size=(config.n_items, config.k_true))

    n_cells = config.n_users * config.n_items
    n_pairs = min(config.n_events, n_cells)
    joint = np.outer(
        zipf_weights(config.n_users, USER_ACTIVITY_EXPONENT),
        zipf_weights(config.n_items, config.zipf_s),
    ).ravel()
    cells = rng.choice(n_cells, size=n_pairs, replace=False, p=joint, shuffle=False)
    users = cells // config.n_items
    items = cells % config.n_items

    base = _GLOBAL_MEAN + np.einsum("ij,ij->i", w_true[users], h_true[items])
    if config.noise_sigma > 0:
        base = base + rng.normal(0.0, config.noise_sigma, size=n_pairs)
    ratings = np.clip(np.floor(base + 0.5), RATING_MIN, RATING_MAX).astype(np.int64)

    triples = [
        InteractionTriple(int(u), int(i), None, int(r))
        for u, i, r in zip(users, items, ratings)
    ]
    truth = FactorModel(
        variant=BIASED,
        user_factors=w_true,
        item_factors=h_true,
        global_mean=_GLOBAL_MEAN,
        user_bias=np.zeros(config.n_users),
        item_bias=np.zeros(config.n_items),
        hyper=Hyperparams(config.k_true, alpha=0.01, beta=0.0, iterations=1, seed=config.seed),
        rating_bounds=(float(RATING_MIN), float(RATING_MAX)),
        user_seen=np.ones(config.n_users, dtype=bool),
        item_seen=np.ones(config.n_items, dtype=bool),
    )
    return triples, truth
