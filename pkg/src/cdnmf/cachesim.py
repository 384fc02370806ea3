"""Fixed-capacity cache replay under pluggable eviction policies.

Replays a timestamp-ordered request stream and counts hits and misses.
Three policies: LRU, LFU (in-cache frequency, reset on eviction), and
MFScore, which ranks items by a popularity score frozen from a trained
factor model and additionally gates admission: a missed item only displaces
the eviction candidate when its score is strictly higher. All ties break by
least-recently-used, so every replay is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError
from .ingest import IdMap, LogRecord, Mode
from .model import BIASED, FactorModel


@dataclass(frozen=True)
class RequestEvent:
    """One cacheable request, already mapped to dense indices."""

    timestamp: float
    user_id: int
    item_id: int


@dataclass(frozen=True)
class CacheSimResult:
    """Hit/miss counts for one (policy, capacity) replay."""

    policy: str
    capacity: int
    hits: int
    misses: int

    @property
    def hit_rate(self) -> float:
        return self.hits / (self.hits + self.misses)


def item_score(model: FactorModel, i: int) -> float:
    """Popularity proxy for one item.

    Biased models: global mean plus the item offset. Plain models: the item
    factors dotted with the mean user-factor vector (the average prediction).
    """
    if not 0 <= i < model.n_items:
        raise IndexError(f"item index {i} out of range [0, {model.n_items})")
    if model.variant == BIASED:
        return float(model.global_mean + model.item_bias[i])
    return float(np.dot(model.user_factors.mean(axis=0), model.item_factors[i]))


def item_scores(model: FactorModel) -> np.ndarray:
    """Vector of item_score over all items."""
    if model.variant == BIASED:
        return model.global_mean + model.item_bias.copy()
    return model.item_factors @ model.user_factors.mean(axis=0)


class _Entry:
    __slots__ = ("last_used", "freq")

    def __init__(self, clock: int):
        self.last_used = clock
        self.freq = 1


class LRUPolicy:
    """Evict the least-recently-used item; admit every miss."""

    name = "lru"

    def victim_key(self, item: int, entry: _Entry):
        return entry.last_used

    def should_admit(self, incoming: int, victim: int) -> bool:
        return True


class LFUPolicy:
    """Evict the least-frequently-used item (ties LRU); admit every miss.

    Frequency counts accesses while cached and is forgotten on eviction.
    """

    name = "lfu"

    def victim_key(self, item: int, entry: _Entry):
        return (entry.freq, entry.last_used)

    def should_admit(self, incoming: int, victim: int) -> bool:
        return True


class MFScorePolicy:
    """Evict the lowest-scored item (ties LRU); admit only strictly higher scores.

    Scores are frozen from the model at construction. Items the model never
    saw score -inf: always the eviction candidate, never admitted over a
    scored item.
    """

    name = "mfscore"

    def __init__(self, model: FactorModel):
        self._scores = np.asarray(item_scores(model), dtype=np.float64)

    def score(self, item: int) -> float:
        if 0 <= item < len(self._scores):
            return float(self._scores[item])
        return float("-inf")

    def victim_key(self, item: int, entry: _Entry):
        return (self.score(item), entry.last_used)

    def should_admit(self, incoming: int, victim: int) -> bool:
        return self.score(incoming) > self.score(victim)


Policy = LRUPolicy | LFUPolicy | MFScorePolicy


class Cache:
    """The replay automaton: step one request at a time, True on hit."""

    def __init__(self, policy: Policy, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.policy = policy
        self.capacity = capacity
        self.entries: dict[int, _Entry] = {}
        self._clock = 0

    def access(self, item: int) -> bool:
        self._clock += 1
        entry = self.entries.get(item)
        if entry is not None:
            entry.last_used = self._clock
            entry.freq += 1
            return True
        if len(self.entries) < self.capacity:
            self.entries[item] = _Entry(self._clock)
            return False
        victim = min(self.entries, key=lambda it: self.policy.victim_key(it, self.entries[it]))
        if self.policy.should_admit(item, victim):
            del self.entries[victim]
            self.entries[item] = _Entry(self._clock)
        return False


def run_simulation(
    events: Sequence[RequestEvent], policy: Policy, capacity: int
) -> CacheSimResult:
    """Replay the sorted event stream through one cache configuration."""
    cache = Cache(policy, capacity)
    hits = 0
    prev_ts = float("-inf")
    for ev in events:
        if ev.timestamp < prev_ts:
            raise ValueError(
                f"events not sorted by timestamp: {ev.timestamp} after {prev_ts}"
            )
        prev_ts = ev.timestamp
        if cache.access(ev.item_id):
            hits += 1
    return CacheSimResult(
        policy=policy.name, capacity=capacity, hits=hits, misses=len(events) - hits
    )


def events_from_records(
    records: Iterable[LogRecord], mode: Mode, users: IdMap, items: IdMap
) -> list[RequestEvent]:
    """Map log records onto dense request events, sorted by timestamp.

    Records without the mode's content field, or with identifiers absent from
    the maps, are dropped (they were never part of the interaction dataset).
    """
    events = []
    for r in records:
        item = r.item_id(mode)
        if item is None:
            continue
        u = users.forward.get(r.uid)
        i = items.forward.get(item)
        if u is None or i is None:
            continue
        events.append(RequestEvent(r.timestamp, u, i))
    events.sort(key=lambda e: e.timestamp)
    return events


def write_events(events: Iterable[RequestEvent], path: str | Path) -> None:
    """Headerless CSV: timestamp,userId,itemId per row."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(f"{ev.timestamp!r},{ev.user_id},{ev.item_id}\n")


def read_events(path: str | Path) -> list[RequestEvent]:
    events = []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split(",")
            if len(parts) != 3:
                raise ParseError(
                    f"expected 3 fields, got {len(parts)}", line_no=line_no, path=str(path)
                )
            try:
                ts = float(parts[0])
                u = int(parts[1])
                i = int(parts[2])
            except ValueError:
                raise ParseError(
                    f"malformed event {stripped!r}", line_no=line_no, path=str(path)
                ) from None
            events.append(RequestEvent(ts, u, i))
    return events


RESULT_CSV_HEADER = "policy,capacity,hits,misses,chr"


def result_csv_row(result: CacheSimResult) -> str:
    return (
        f"{result.policy},{result.capacity},{result.hits},{result.misses},"
        f"{result.hit_rate!r}"
    )
