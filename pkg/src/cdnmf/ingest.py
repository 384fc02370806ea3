"""CDN access-log parsing and user/item interaction aggregation.

Raw logs are UTF-8 delimiter-separated text with a header row naming the
columns. Each request line becomes a LogRecord; grouping records by
(uid, content id) and counting requests per group yields the interaction
dataset used everywhere downstream. The per-group request count is squashed
with round(ln(count)) into the integer "interaction" rating.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import ParseError

# Column names with dedicated typed fields; everything else from the header
# lands in LogRecord.extra untouched.
_TYPED_COLUMNS = {"timestamp", "uid", "livechannel", "contentpackage", "contentlength", "hit"}

_HIT_TRUE = {"hit", "true", "1", "yes"}
_HIT_FALSE = {"miss", "false", "0", "no"}


class Mode(str, Enum):
    """Which log column carries the content identity."""

    LIVETV = "livetv"
    VOD = "vod"

    @property
    def item_field(self) -> str:
        return "livechannel" if self is Mode.LIVETV else "contentpackage"


@dataclass(frozen=True)
class LogRecord:
    """One parsed access-log line (typed subset of the log schema)."""

    timestamp: float
    uid: str
    livechannel: str | None = None
    contentpackage: str | None = None
    contentlength: int | None = None
    hit: bool | None = None
    extra: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError(f"timestamp must be finite and non-negative, got {self.timestamp}")
        if self.contentlength is not None and self.contentlength < 0:
            raise ValueError(f"contentlength must be non-negative, got {self.contentlength}")

    def item_id(self, mode: Mode) -> str | None:
        """Content identity under the given mode; None means the record is skipped."""
        return self.livechannel if mode is Mode.LIVETV else self.contentpackage


@dataclass(frozen=True)
class InteractionTriple:
    """One (user, item) group: dense indices, request count, log-scaled rating.

    `requests` is None for datasets that do not carry raw counts (the
    three-column interaction CSV, synthetic rated data). `interaction` is
    integer-valued for all ingested data; oracle tests may feed continuous
    ratings through the same container.
    """

    user_id: int
    item_id: int
    requests: int | None
    interaction: float

    def __post_init__(self):
        if self.user_id < 0 or self.item_id < 0:
            raise ValueError("user_id and item_id must be non-negative")
        if self.interaction < 0:
            raise ValueError(f"interaction must be non-negative, got {self.interaction}")
        if self.requests is not None:
            if self.requests < 1:
                raise ValueError(f"requests must be >= 1, got {self.requests}")
            if log_scale(self.requests) != self.interaction:
                raise ValueError(
                    f"interaction {self.interaction} != log_scale({self.requests})"
                )


class IdMap:
    """Bijective map between original identifier strings and dense 0-based indices."""

    def __init__(self):
        self.forward: dict[str, int] = {}
        self.reverse: list[str] = []

    def add(self, original: str) -> int:
        """Return the index for `original`, assigning the next one on first sight."""
        idx = self.forward.get(original)
        if idx is None:
            idx = len(self.reverse)
            self.forward[original] = idx
            self.reverse.append(original)
        return idx

    def index(self, original: str) -> int:
        return self.forward[original]

    def original(self, index: int) -> str:
        return self.reverse[index]

    def __len__(self) -> int:
        return len(self.reverse)

    def __eq__(self, other) -> bool:
        return isinstance(other, IdMap) and self.reverse == other.reverse


def log_scale(requests: int) -> int:
    """Map a request count onto the integer rating scale: round(ln(requests)).

    Rounding is half-away-from-zero; ln(x) >= 0 on the domain so floor(x+0.5)
    implements it. ln(1) maps to 0.
    """
    if requests < 1:
        raise ValueError(f"requests must be >= 1, got {requests}")
    return int(math.floor(math.log(requests) + 0.5))


def parse_log_line(
    line: str,
    schema: Sequence[str],
    *,
    delimiter: str = ",",
    line_no: int | None = None,
) -> LogRecord | None:
    """Parse one raw log line against the column schema.

    Returns None for blank and '#'-comment lines. Raises ParseError (with the
    line number when supplied) for wrong arity or a malformed typed field;
    whether to skip or abort on that is the caller's policy.
    """
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    values = stripped.split(delimiter)
    if len(values) != len(schema):
        raise ParseError(
            f"expected {len(schema)} fields, got {len(values)}", line_no=line_no
        )

    fields: dict[str, object] = {}
    extra: dict[str, str] = {}
    for name, value in zip(schema, values):
        if name not in _TYPED_COLUMNS:
            extra[name] = value
            continue
        if name == "timestamp":
            try:
                ts = float(value)
            except ValueError:
                raise ParseError(f"non-numeric timestamp {value!r}", line_no=line_no) from None
            if not math.isfinite(ts) or ts < 0:
                raise ParseError(f"timestamp out of range: {value!r}", line_no=line_no)
            fields["timestamp"] = ts
        elif name == "uid":
            if not value:
                raise ParseError("empty uid", line_no=line_no)
            fields["uid"] = value
        elif name in ("livechannel", "contentpackage"):
            fields[name] = value or None
        elif name == "contentlength":
            if not value:
                fields[name] = None
                continue
            try:
                length = int(value)
            except ValueError:
                raise ParseError(f"non-integer contentlength {value!r}", line_no=line_no) from None
            if length < 0:
                raise ParseError(f"negative contentlength {value!r}", line_no=line_no)
            fields[name] = length
        elif name == "hit":
            if not value:
                fields[name] = None
            elif value.lower() in _HIT_TRUE:
                fields[name] = True
            elif value.lower() in _HIT_FALSE:
                fields[name] = False
            else:
                raise ParseError(f"unrecognized hit flag {value!r}", line_no=line_no)

    if "timestamp" not in fields:
        raise ParseError("schema has no timestamp column", line_no=line_no)
    if "uid" not in fields:
        raise ParseError("schema has no uid column", line_no=line_no)
    return LogRecord(extra=extra, **fields)  # type: ignore[arg-type]


@dataclass
class LogFileStats:
    """Bookkeeping from reading one raw log file."""

    data_lines: int = 0
    blank_or_comment: int = 0
    bad_lines: int = 0


def read_log_file(
    path: str | Path,
    *,
    delimiter: str = ",",
    errors: str = "raise",
    stats: LogFileStats | None = None,
) -> Iterator[LogRecord]:
    """Yield LogRecords from a delimiter-separated file whose first row is the schema.

    errors="raise" aborts on the first malformed line; errors="skip" drops
    malformed lines and counts them in `stats`.
    """
    if errors not in ("raise", "skip"):
        raise ValueError(f"errors must be 'raise' or 'skip', got {errors!r}")
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        schema: list[str] | None = None
        for line_no, line in enumerate(fh, start=1):
            if schema is None:
                header = line.strip()
                if not header or header.startswith("#"):
                    if stats is not None:
                        stats.blank_or_comment += 1
                    continue
                schema = [name.strip() for name in header.split(delimiter)]
                if "timestamp" not in schema or "uid" not in schema:
                    raise ParseError(
                        "header must include timestamp and uid columns",
                        line_no=line_no,
                        path=str(path),
                    )
                continue
            try:
                record = parse_log_line(line, schema, delimiter=delimiter, line_no=line_no)
            except ParseError as exc:
                if errors == "raise":
                    raise ParseError(exc.message, line_no=exc.line_no, path=str(path)) from None
                if stats is not None:
                    stats.bad_lines += 1
                continue
            if record is None:
                if stats is not None:
                    stats.blank_or_comment += 1
                continue
            if stats is not None:
                stats.data_lines += 1
            yield record


@dataclass
class AggregationResult:
    """Output of grouping a record stream into interaction triples."""

    triples: list[InteractionTriple]
    users: IdMap
    items: IdMap
    skipped: int  # records lacking the mode's content field
    n_records: int  # records consumed (skipped + grouped)


def aggregate_interactions(records: Iterable[LogRecord], mode: Mode) -> AggregationResult:
    """Group records by (uid, content id) into one triple per distinct pair.

    requests = records in the group, interaction = log_scale(requests).
    Dense indices are assigned in first-appearance order, so the result is
    deterministic for a fixed input order. Records without the mode's content
    field are skipped and counted.
    """
    users = IdMap()
    items = IdMap()
    counts: dict[tuple[int, int], int] = {}
    skipped = 0
    n_records = 0
    for record in records:
        n_records += 1
        item = record.item_id(mode)
        if item is None:
            skipped += 1
            continue
        key = (users.add(record.uid), items.add(item))
        counts[key] = counts.get(key, 0) + 1
    # dicts preserve insertion order, so triples come out in first-appearance
    # order of the (user, item) pair
    triples = [
        InteractionTriple(u, i, n, log_scale(n)) for (u, i), n in counts.items()
    ]
    return AggregationResult(triples, users, items, skipped, n_records)


def write_interactions(triples: Iterable[InteractionTriple], path: str | Path) -> None:
    """Write the headerless three-column CSV: userId,itemId,interaction (LF endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in triples:
            rating = int(t.interaction)
            if rating != t.interaction:
                raise ValueError(
                    f"interaction {t.interaction} is not integral; cannot write 3-column CSV"
                )
            fh.write(f"{t.user_id},{t.item_id},{rating}\n")


def read_interactions(path: str | Path) -> list[InteractionTriple]:
    """Read the headerless three-column CSV back; requests is not recorded there."""
    triples = []
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
                u, i, r = (int(p) for p in parts)
            except ValueError:
                raise ParseError(
                    f"non-integer field in {stripped!r}", line_no=line_no, path=str(path)
                ) from None
            if r < 0 or u < 0 or i < 0:
                raise ParseError(f"negative value in {stripped!r}", line_no=line_no, path=str(path))
            triples.append(InteractionTriple(u, i, None, r))
    return triples


def write_idmap(idmap: IdMap, path: str | Path) -> None:
    """Write the sidecar CSV: denseIndex,originalId per row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for idx, original in enumerate(idmap.reverse):
            writer.writerow([idx, original])


def read_idmap(path: str | Path) -> IdMap:
    idmap = IdMap()
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line_no=line_no, path=str(path))
            idx, original = row
            if int(idx) != idmap.add(original):
                raise ParseError(
                    f"non-contiguous index {idx}", line_no=line_no, path=str(path)
                )
    return idmap


def write_log_file(
    records: Iterable[LogRecord],
    path: str | Path,
    *,
    delimiter: str = ",",
) -> None:
    """Write records in the raw-log format (header row + one line per record).

    Only the typed columns are emitted; extras are not round-tripped.
    """
    schema = ["timestamp", "uid", "livechannel", "contentpackage", "contentlength", "hit"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(delimiter.join(schema) + "\n")
        for r in records:
            hit = "" if r.hit is None else ("hit" if r.hit else "miss")
            row = [
                repr(r.timestamp),
                r.uid,
                r.livechannel or "",
                r.contentpackage or "",
                "" if r.contentlength is None else str(r.contentlength),
                hit,
            ]
            fh.write(delimiter.join(row) + "\n")
