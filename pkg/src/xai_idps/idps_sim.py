"""Deterministic multi-node IDPS simulator.

Flow records arrive on several tagged feeds (``wifi8``, ``ioe``, ``6g``) with
logical integer timestamps.  The merged stream is routed round-robin to
detector nodes.  Each node first checks its threat-pattern database, then the
open-set classifier; a novel event mints a pattern over the selected raw
attributes, and that pattern is copied to every node before the next event.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_ingest import CATEGORICAL, NUMERIC, EncoderSpec, RawTable, encode_record, is_normal
from .errors import EncodingError, UnorderedFeed, ValidationError
from .learners import from_document, to_document
from .zero_day_eval import NOVEL, decide, fingerprint, openset_parts

SOURCES = ("6g", "ioe", "wifi8")
WIDEN = 0.05

PASS, ALERT, BLOCK = "pass", "alert", "block"
PATTERN_MATCH, ML_ANOMALY, NOVELTY, CLEAN = "pattern_match", "ml_anomaly", "novelty", "clean"
OUTCOMES = (PASS, ALERT, BLOCK)
REASONS = (PATTERN_MATCH, ML_ANOMALY, NOVELTY, CLEAN)


@dataclass(frozen=True)
class FeedEvent:
    t: int
    source: str
    seq: int
    record: Mapping[str, object] = field(compare=False, hash=False)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValidationError(f"unknown feed source {self.source!r}")
        if int(self.t) != self.t or self.t < 0:
            raise ValidationError("timestamps are non-negative integers")

    @property
    def event_id(self) -> str:
        return f"{self.source}-{self.seq}"


def merge_feeds(feeds: Sequence[Sequence[FeedEvent]]) -> list[FeedEvent]:
    """One stream ordered by (t, source tag, sequence number).

    Raises UnorderedFeed when a feed's timestamps are not strictly increasing.
    """
    seen: set[str] = set()
    for feed in feeds:
        for a, b in zip(feed, feed[1:]):
            if b.t <= a.t:
                raise UnorderedFeed(f"feed timestamps go {a.t} -> {b.t} at event {b.event_id}")
        for ev in feed:
            if ev.event_id in seen:
                raise ValidationError(f"duplicate event id {ev.event_id}")
            seen.add(ev.event_id)
    return list(heapq.merge(*feeds, key=lambda e: (e.t, e.source, e.seq)))


# --------------------------------------------------------------------------
# threat patterns


def _interval(value: float) -> tuple[float, float]:
    half = WIDEN * abs(value)
    return (value - half, value + half)


@dataclass(frozen=True)
class ThreatPattern:
    """Signature over raw attributes: numeric ``("range", lo, hi)`` or
    categorical ``("set", values)`` conditions, all of which must hold."""

    signature: tuple
    origin: int
    created: int

    def __post_init__(self):
        if not self.signature:
            raise ValidationError("a pattern needs at least one condition")

    @property
    def pattern_id(self) -> str:
        text = json.dumps([[a, list(c)] for a, c in self.signature], sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def attributes(self) -> list[str]:
        return [a for a, _ in self.signature]

    def matches(self, record: Mapping[str, object]) -> bool:
        for attr, cond in self.signature:
            if attr not in record:
                return False
            if cond[0] == "range":
                try:
                    v = float(record[attr])
                except (TypeError, ValueError):
                    return False
                if not cond[1] <= v <= cond[2]:
                    return False
            elif str(record[attr]).strip() not in cond[1]:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "pattern_id": self.pattern_id,
            "origin": self.origin,
            "created": self.created,
            "signature": [[a, list(c[:1]) + (list(c[1]) if c[0] == "set" else list(c[1:]))]
                          for a, c in self.signature],
        }


def mint_pattern(record: Mapping[str, object], attributes: Sequence[str], encoder: EncoderSpec,
                 origin: int, created: int) -> ThreatPattern:
    """Pattern from an event's values on ``attributes``; numerics widened by 5% of |value|."""
    conds = []
    for attr in attributes:
        kind = encoder.schema.kind(attr)
        if kind == CATEGORICAL:
            conds.append((attr, ("set", (str(record[attr]).strip(),))))
        elif kind == NUMERIC:
            lo, hi = _interval(float(record[attr]))
            conds.append((attr, ("range", lo, hi)))
        else:
            raise ValidationError(f"{attr!r} is not a feature attribute")
    return ThreatPattern(tuple(conds), origin, created)


class PatternDB:
    """Patterns keyed by id; inserting a known id changes nothing."""

    def __init__(self, patterns: Iterable[ThreatPattern] = ()):
        self._patterns: dict[str, ThreatPattern] = {}
        for p in patterns:
            self.add(p)

    def add(self, pattern: ThreatPattern) -> bool:
        pid = pattern.pattern_id
        if pid in self._patterns:
            return False
        self._patterns[pid] = pattern
        return True

    def __len__(self):
        return len(self._patterns)

    def __contains__(self, pattern_id: str) -> bool:
        return pattern_id in self._patterns

    def ids(self) -> list[str]:
        return sorted(self._patterns)

    def match(self, record: Mapping[str, object]) -> ThreatPattern | None:
        """First matching pattern in id order."""
        for pid in self.ids():
            if self._patterns[pid].matches(record):
                return self._patterns[pid]
        return None


def share_pattern(pattern: ThreatPattern, nodes: Sequence[PatternDB]) -> Sequence[PatternDB]:
    for db in nodes:
        db.add(pattern)
    return nodes


# --------------------------------------------------------------------------
# detector


DETECTOR_FORMAT = "xai_idps.detector"


@dataclass
class Detector:
    """Encoder, selected encoded columns, signature attributes, both model heads and tau."""

    encoder: EncoderSpec
    columns: list
    attributes: list
    multiclass: object
    binary: object
    tau: float

    def encode(self, record: Mapping[str, object]) -> np.ndarray:
        return encode_record(record, self.encoder)[self.columns][None, :]

    def to_dict(self) -> dict:
        return {
            "format": DETECTOR_FORMAT,
            "version": 1,
            "encoder": self.encoder.to_dict(),
            "columns": list(map(int, self.columns)),
            "attributes": list(self.attributes),
            "multiclass": to_document(self.multiclass),
            "binary": to_document(self.binary),
            "tau": float(self.tau),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Detector":
        if d.get("format") != DETECTOR_FORMAT:
            raise ValidationError("not a detector document")
        return cls(EncoderSpec.from_dict(d["encoder"]), list(d["columns"]), list(d["attributes"]),
                   from_document(d["multiclass"]), from_document(d["binary"]), float(d["tau"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Detector":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_models(cls, models) -> "Detector":
        """Build from any object with the same fields (e.g. an open-set fit)."""
        return cls(models.encoder, list(models.columns), list(models.attributes),
                   models.multiclass, models.binary, float(models.tau))


@dataclass(frozen=True)
class Disposition:
    event_id: str
    t: int
    source: str
    outcome: str
    reason: str
    score: float
    node: int = 0
    pattern_id: str | None = None
    pattern: ThreatPattern | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.outcome not in OUTCOMES or self.reason not in REASONS:
            raise ValidationError(f"bad disposition {self.outcome}/{self.reason}")

    def to_dict(self) -> dict:
        d = {"event_id": self.event_id, "t": self.t, "source": self.source, "node": self.node,
             "outcome": self.outcome, "reason": self.reason, "score": self.score}
        if self.pattern_id is not None:
            d["pattern_id"] = self.pattern_id
        return d


def evaluate_event(event: FeedEvent, detector: Detector, db: PatternDB, tau: float | None = None,
                   node: int = 0) -> Disposition:
    """Disposition by precedence: pattern match, novelty, known attack, clean.

    A novel event carries its freshly minted pattern on ``Disposition.pattern``
    (the caller decides where to store it).  Records that cannot be encoded
    fail closed as an ``alert``.
    """
    tau = detector.tau if tau is None else tau
    base = dict(event_id=event.event_id, t=event.t, source=event.source, node=node)
    hit = db.match(event.record)
    if hit is not None:
        return Disposition(outcome=BLOCK, reason=PATTERN_MATCH, score=1.0, pattern_id=hit.pattern_id, **base)
    try:
        x = detector.encode(event.record)
    except EncodingError:
        return Disposition(outcome=ALERT, reason=ML_ANOMALY, score=1.0, **base)
    labels, novelty, anomalous = openset_parts(detector.multiclass, detector.binary, x)
    verdict = decide(labels, novelty, anomalous, tau)[0]
    if verdict == NOVEL:
        pattern = mint_pattern(event.record, detector.attributes, detector.encoder, node, event.t)
        return Disposition(outcome=ALERT, reason=NOVELTY, score=float(novelty[0]),
                           pattern_id=pattern.pattern_id, pattern=pattern, **base)
    confidence = float(1.0 - novelty[0])
    if not is_normal(verdict):
        return Disposition(outcome=BLOCK, reason=ML_ANOMALY, score=confidence, **base)
    return Disposition(outcome=PASS, reason=CLEAN, score=confidence, **base)


@dataclass
class SimulationSummary:
    events: int
    outcomes: dict
    reasons: dict
    patterns: int
    fingerprint: str
    dispositions: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"events": self.events, "outcomes": self.outcomes, "reasons": self.reasons,
                "patterns": self.patterns, "fingerprint": self.fingerprint}


def run_simulation(feeds: Sequence[Sequence[FeedEvent]], detector: Detector, nodes: int = 3,
                   tau: float | None = None, out: str | Path | None = None,
                   config_fingerprint: str | None = None) -> SimulationSummary:
    """Replay the merged feeds through ``nodes`` detectors (event ``i`` to node ``i mod nodes``).

    Minted patterns are shared to every node before the next event, so a
    replay is fully sequential and deterministic.  With ``out`` set, one JSON
    line per disposition is written there.
    """
    if nodes < 1:
        raise ValidationError("need at least one node")
    tau = detector.tau if tau is None else float(tau)
    fp = config_fingerprint or fingerprint({"detector": detector.to_dict(), "nodes": nodes, "tau": tau})
    dbs = [PatternDB() for _ in range(nodes)]
    stream = merge_feeds(feeds)
    dispositions = []
    for i, event in enumerate(stream):
        node = i % nodes
        d = evaluate_event(event, detector, dbs[node], tau, node)
        if d.pattern is not None:
            share_pattern(d.pattern, dbs)
        dispositions.append(d)
    if len(dispositions) != len(stream):
        raise AssertionError("every event needs exactly one disposition")
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            for d in dispositions:
                fh.write(json.dumps({**d.to_dict(), "fingerprint": fp}, sort_keys=True) + "\n")
    outcomes = {o: sum(d.outcome == o for d in dispositions) for o in OUTCOMES}
    reasons = {r: sum(d.reason == r for d in dispositions) for r in REASONS}
    return SimulationSummary(len(dispositions), outcomes, reasons, len(dbs[0]), fp, dispositions)


# --------------------------------------------------------------------------
# feed files


def events_from_table(table: RawTable, n_events: int | None = None, seed: int = 0,
                      sources: Sequence[str] = SOURCES) -> list[list[FeedEvent]]:
    """Spread table rows over the sources; row order is shuffled with ``seed``.

    Timestamps are global positions, so every feed is strictly increasing.
    """
    n = len(table) if n_events is None else min(n_events, len(table))
    order = np.random.default_rng(seed).permutation(len(table))[:n]
    names = table.schema.names
    feeds: dict[str, list[FeedEvent]] = {s: [] for s in sources}
    for t, r in enumerate(order):
        src = sources[t % len(sources)]
        record = dict(zip(names, table.rows[r]))
        feeds[src].append(FeedEvent(t, src, len(feeds[src]) + 1, record))
    return [feeds[s] for s in sources if feeds[s]]


def write_feed(path: str | Path, feeds: Sequence[Sequence[FeedEvent]], columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "source", *columns])
        for ev in merge_feeds(feeds):
            w.writerow([ev.t, ev.source, *(ev.record.get(c, "") for c in columns)])


def load_feed(path: str | Path) -> list[list[FeedEvent]]:
    """Read a feed CSV (``t``, ``source``, then dataset columns) into per-source feeds.

    Rows keep their file order within each source; sequence numbers count
    from 1 per source.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["t", "source"]:
            raise ValidationError("feed CSV must start with columns t, source")
        columns = header[2:]
        feeds: dict[str, list[FeedEvent]] = {}
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"feed row {i}: {len(row)} cells, header has {len(header)}")
            try:
                t = int(row[0])
            except ValueError:
                raise ValidationError(f"feed row {i}: timestamp {row[0]!r} is not an integer") from None
            src = row[1].strip()
            feed = feeds.setdefault(src, [])
            feed.append(FeedEvent(t, src, len(feed) + 1, dict(zip(columns, (c.strip() for c in row[2:])))))
    return [feeds[s] for s in sorted(feeds)]
