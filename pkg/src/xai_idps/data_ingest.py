"""Flow-dataset ingestion: CSV loaders, categorical/numeric encoding, splits.

Two layouts are understood: the UNSW-NB15 training/testing-set CSV (with a
header row) and the headerless NSL-KDD text files.  Both are parsed into an
immutable :class:`RawTable`; :func:`fit_encoder` / :func:`apply_encoder` turn
a table into a dense matrix with one-hot categoricals and min-max scaled
numerics in ``[0, 1]``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ArityMismatch,
    ClassTooSmall,
    EmptyTable,
    EncodingError,
    MissingColumn,
    SchemaMismatch,
    UnknownClassWarning,
    UnparseableNumber,
    ValidationError,
)

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
CLASS_LABEL = "class-label"
BINARY_LABEL = "binary-label"
IGNORE = "ignore"
KINDS = (NUMERIC, CATEGORICAL, CLASS_LABEL, BINARY_LABEL, IGNORE)

# UNSW_NB15_training-set.csv / UNSW_NB15_testing-set.csv header, in file order.
UNSW_COLUMNS = (
    "id", "dur", "proto", "service", "state", "spkts", "dpkts", "sbytes",
    "dbytes", "rate", "sttl", "dttl", "sload", "dload", "sloss", "dloss",
    "sinpkt", "dinpkt", "sjit", "djit", "swin", "stcpb", "dtcpb", "dwin",
    "tcprtt", "synack", "ackdat", "smean", "dmean", "trans_depth",
    "response_body_len", "ct_srv_src", "ct_state_ttl", "ct_dst_ltm",
    "ct_src_dport_ltm", "ct_dst_sport_ltm", "ct_dst_src_ltm", "is_ftp_login",
    "ct_ftp_cmd", "ct_flw_http_mthd", "ct_src_ltm", "ct_srv_dst",
    "is_sm_ips_ports", "attack_cat", "label",
)
UNSW_CATEGORICAL = frozenset({"proto", "service", "state"})

# KDDTrain+.txt / KDDTest+.txt field order: 41 features, label, difficulty.
NSLKDD_COLUMNS = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate",
    "dst_host_count", "dst_host_srv_count", "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate", "label", "difficulty",
)
NSLKDD_CATEGORICAL = frozenset({"protocol_type", "service", "flag"})

# NSL-KDD attack names grouped into the four usual categories.
NSLKDD_CATEGORY = {
    **dict.fromkeys(
        ["back", "land", "neptune", "pod", "smurf", "teardrop", "apache2",
         "mailbomb", "processtable", "udpstorm"], "DoS"),
    **dict.fromkeys(
        ["ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"], "Probe"),
    **dict.fromkeys(
        ["ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy",
         "warezclient", "warezmaster", "named", "sendmail", "snmpgetattack",
         "snmpguess", "worm", "xlock", "xsnoop", "httptunnel"], "R2L"),
    **dict.fromkeys(
        ["buffer_overflow", "loadmodule", "perl", "rootkit", "ps",
         "sqlattack", "xterm"], "U2R"),
    "normal": "Normal",
}

_CANONICAL = {
    "normal": "Normal",
    "dos": "DoS",
    "fuzzers": "Fuzzers",
    "backdoor": "Backdoor",
    "backdoors": "Backdoor",
    "blackdoor": "Backdoor",
    "exploits": "Exploits",
    "generic": "Generic",
    "reconnaissance": "Reconnaissance",
    "analysis": "Analysis",
    "shellcode": "Shellcode",
    "worms": "Worms",
}


def canonical_class(name: str) -> str:
    """Map dataset spellings (``"Dos"``, ``"Backdoors"``, ``"Blackdoor"``) to
    canonical UNSW category names; anything else is only whitespace-trimmed."""
    stripped = str(name).strip()
    return _CANONICAL.get(stripped.lower(), stripped)


def is_normal(label: str) -> bool:
    return str(label).strip().lower() == "normal"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("schema column names must be unique")
        for c in self.columns:
            if c.kind not in KINDS:
                raise ValidationError(f"unknown column kind {c.kind!r} for {c.name}")
        kinds = [c.kind for c in self.columns]
        if kinds.count(CLASS_LABEL) != 1:
            raise ValidationError("schema needs exactly one class-label column")
        if kinds.count(BINARY_LABEL) > 1:
            raise ValidationError("schema allows at most one binary-label column")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "Schema":
        return cls(tuple(Column(n, k) for n, k in pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def __len__(self):
        return len(self.columns)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def kind(self, name: str) -> str:
        return self.columns[self.index(name)].kind

    @property
    def class_column(self) -> int:
        return next(i for i, c in enumerate(self.columns) if c.kind == CLASS_LABEL)

    @property
    def binary_column(self) -> int | None:
        return next((i for i, c in enumerate(self.columns) if c.kind == BINARY_LABEL), None)

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        """Columns that feed the encoder, in schema order."""
        return tuple(c for c in self.columns if c.kind in (NUMERIC, CATEGORICAL))

    def to_list(self) -> list[list[str]]:
        return [[c.name, c.kind] for c in self.columns]


@dataclass(frozen=True)
class RawTable:
    """Labeled flow records.  Numeric cells are floats, everything else text."""

    schema: Schema
    rows: tuple[tuple, ...]

    def __post_init__(self):
        width = len(self.schema)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ArityMismatch(f"expected {width} cells, got {len(row)}", row=i)

    def __len__(self):
        return len(self.rows)

    @property
    def labels(self) -> list[str]:
        ci = self.schema.class_column
        return [r[ci] for r in self.rows]

    @property
    def classes(self) -> list[str]:
        """Distinct class labels, sorted."""
        return sorted(set(self.labels))

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        return dict(sorted(counts.items()))

    def column(self, name: str) -> list:
        j = self.schema.index(name)
        return [r[j] for r in self.rows]

    def take(self, indices: Iterable[int]) -> "RawTable":
        return RawTable(self.schema, tuple(self.rows[i] for i in indices))

    def relabel(self, mapping: Mapping[str, str]) -> "RawTable":
        ci = self.schema.class_column
        rows = tuple(
            r[:ci] + (mapping.get(r[ci], r[ci]),) + r[ci + 1:] for r in self.rows
        )
        return RawTable(self.schema, rows)


@dataclass(frozen=True)
class EncoderSpec:
    schema: Schema
    vocabularies: dict[str, tuple[str, ...]]
    bounds: dict[str, tuple[float, float]]
    unseen: str = "zeros"

    def __post_init__(self):
        for col, vocab in self.vocabularies.items():
            if not vocab:
                raise ValidationError(f"empty vocabulary for {col}")
        for col, (lo, hi) in self.bounds.items():
            if not lo <= hi:
                raise ValidationError(f"bounds for {col} not ordered: {lo} > {hi}")
        if self.unseen not in ("zeros", "error"):
            raise ValidationError(f"unknown unseen-category policy {self.unseen!r}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = []
        for col in self.schema.feature_columns:
            if col.kind == CATEGORICAL:
                names.extend(f"{col.name}={v}" for v in self.vocabularies[col.name])
            else:
                names.append(col.name)
        return tuple(names)

    @property
    def feature_sources(self) -> tuple[str, ...]:
        """Source attribute for every encoded column."""
        out = []
        for col in self.schema.feature_columns:
            if col.kind == CATEGORICAL:
                out.extend([col.name] * len(self.vocabularies[col.name]))
            else:
                out.append(col.name)
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "format": "xai_idps.encoder",
            "version": 1,
            "schema": self.schema.to_list(),
            "vocabularies": {k: list(v) for k, v in self.vocabularies.items()},
            "bounds": {k: [lo, hi] for k, (lo, hi) in self.bounds.items()},
            "unseen": self.unseen,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EncoderSpec":
        if doc.get("format") != "xai_idps.encoder":
            raise ValidationError("not an encoder document")
        return cls(
            schema=Schema.from_pairs(tuple(p) for p in doc["schema"]),
            vocabularies={k: tuple(v) for k, v in doc["vocabularies"].items()},
            bounds={k: (float(lo), float(hi)) for k, (lo, hi) in doc["bounds"].items()},
            unseen=doc.get("unseen", "zeros"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "EncoderSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class EncodedMatrix:
    feature_names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray
    binary: np.ndarray
    feature_sources: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_names):
            raise ValidationError("column count does not match feature names")
        if len(self.labels) != self.values.shape[0] or len(self.binary) != len(self.labels):
            raise ValidationError("label count does not match row count")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("encoded matrix holds non-finite values")
        if not self.feature_sources:
            object.__setattr__(self, "feature_sources",
                               tuple(n.split("=", 1)[0] for n in self.feature_names))
        for arr in (self.values, self.labels, self.binary):
            arr.flags.writeable = False

    def __len__(self):
        return self.values.shape[0]

    def take(self, rows) -> "EncodedMatrix":
        rows = np.asarray(rows)
        return EncodedMatrix(self.feature_names, self.values[rows].copy(),
                             self.labels[rows].copy(), self.binary[rows].copy(),
                             self.feature_sources)

    def select(self, columns: Sequence[int]) -> "EncodedMatrix":
        columns = list(columns)
        return EncodedMatrix(
            tuple(self.feature_names[j] for j in columns),
            self.values[:, columns].copy(),
            self.labels.copy(),
            self.binary.copy(),
            tuple(self.feature_sources[j] for j in columns),
        )


# --------------------------------------------------------------------------
# loading


def _read_csv(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [[cell.strip() for cell in row] for row in csv.reader(fh) if row]


def _parse_number(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise UnparseableNumber(f"column {column!r} holds {cell!r}", row=row) from None
    if not math.isfinite(value):
        raise UnparseableNumber(f"column {column!r} holds non-finite {cell!r}", row=row)
    return value


def _parse_binary(cell: str, row: int, column: str) -> int:
    value = _parse_number(cell, row, column)
    if value not in (0.0, 1.0):
        raise UnparseableNumber(f"column {column!r} must be 0/1, got {cell!r}", row=row)
    return int(value)


def _convert_rows(schema: Schema, records: Sequence[Sequence[str]]) -> tuple[tuple, ...]:
    kinds = [c.kind for c in schema.columns]
    names = schema.names
    width = len(kinds)
    out = []
    for i, rec in enumerate(records):
        if len(rec) != width:
            raise ArityMismatch(f"expected {width} fields, got {len(rec)}", row=i)
        row = []
        for cell, kind, name in zip(rec, kinds, names):
            if kind == NUMERIC:
                row.append(_parse_number(cell, i, name))
            elif kind == BINARY_LABEL:
                row.append(_parse_binary(cell, i, name))
            else:
                row.append(cell)
        out.append(tuple(row))
    return tuple(out)


def unsw_kind(name: str) -> str:
    if name == "id":
        return IGNORE
    if name == "attack_cat":
        return CLASS_LABEL
    if name == "label":
        return BINARY_LABEL
    if name in UNSW_CATEGORICAL:
        return CATEGORICAL
    if name in UNSW_COLUMNS:
        return NUMERIC
    return IGNORE


def unsw_schema(header: Sequence[str] = UNSW_COLUMNS) -> Schema:
    return Schema.from_pairs((name, unsw_kind(name)) for name in header)


def load_unsw(path) -> RawTable:
    """Load a UNSW-NB15 training/testing-set CSV (header row required).

    Columns outside the official layout are kept with kind ``ignore``.
    Blank ``attack_cat`` cells (seen in the raw UNSW-NB15_[1-4].csv dumps)
    are read as ``Normal``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    records = _read_csv(path)
    if not records:
        raise MissingColumn(f"{path}: no header row")
    header, body = records[0], records[1:]
    missing = [c for c in UNSW_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"{path}: header lacks {', '.join(missing)}")
    schema = unsw_schema(header)
    rows = _convert_rows(schema, body)
    ci = schema.class_column
    rows = tuple(r if r[ci] else r[:ci] + ("Normal",) + r[ci + 1:] for r in rows)
    return RawTable(schema, rows)


def nslkdd_schema() -> Schema:
    def kind(name):
        if name == "difficulty":
            return IGNORE
        if name == "label":
            return CLASS_LABEL
        if name in NSLKDD_CATEGORICAL:
            return CATEGORICAL
        return NUMERIC

    return Schema.from_pairs((n, kind(n)) for n in NSLKDD_COLUMNS)


def load_nslkdd(path, categories: bool = False) -> RawTable:
    """Load a headerless NSL-KDD file (41 features, label, difficulty).

    With ``categories=True`` attack names are folded into DoS / Probe / R2L /
    U2R / Normal.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    schema = nslkdd_schema()
    rows = _convert_rows(schema, _read_csv(path))
    table = RawTable(schema, rows)
    if categories:
        table = table.relabel({lab: NSLKDD_CATEGORY.get(lab, lab) for lab in table.classes})
    return table


# --------------------------------------------------------------------------
# encoding


def fit_encoder(table: RawTable, unseen: str = "zeros") -> EncoderSpec:
    """Collect vocabularies (first-occurrence order) and numeric bounds."""
    if len(table) == 0:
        raise EmptyTable("cannot fit an encoder on an empty table")
    vocabularies: dict[str, tuple[str, ...]] = {}
    bounds: dict[str, tuple[float, float]] = {}
    for col in table.schema.feature_columns:
        values = table.column(col.name)
        if col.kind == CATEGORICAL:
            vocabularies[col.name] = tuple(dict.fromkeys(values))
        else:
            lo, hi = float(min(values)), float(max(values))
            if lo == hi:
                hi = lo + 1.0
            bounds[col.name] = (lo, hi)
    return EncoderSpec(table.schema, vocabularies, bounds, unseen)


def _scale(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


def apply_encoder(table: RawTable, spec: EncoderSpec) -> EncodedMatrix:
    """One-hot categoricals, min-max scale numerics, clamp into [0, 1]."""
    if table.schema != spec.schema:
        raise SchemaMismatch("table schema differs from the encoder's source schema")
    n = len(table)
    blocks = []
    for col in spec.schema.feature_columns:
        values = table.column(col.name)
        if col.kind == CATEGORICAL:
            vocab = spec.vocabularies[col.name]
            lookup = {v: k for k, v in enumerate(vocab)}
            block = np.zeros((n, len(vocab)))
            for i, v in enumerate(values):
                k = lookup.get(v)
                if k is not None:
                    block[i, k] = 1.0
                elif spec.unseen == "error":
                    raise EncodingError(f"unseen value {v!r} in {col.name}")
            blocks.append(block)
        else:
            lo, hi = spec.bounds[col.name]
            blocks.append(_scale(np.asarray(values, dtype=float), lo, hi)[:, None])
    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    labels = np.array(table.labels, dtype=object)
    bi = table.schema.binary_column
    if bi is not None:
        binary = np.array([r[bi] for r in table.rows], dtype=np.int8)
    else:
        binary = np.array([0 if is_normal(lab) else 1 for lab in labels], dtype=np.int8)
    return EncodedMatrix(spec.feature_names, values, labels, binary, spec.feature_sources)


def encode_record(record: Mapping[str, object], spec: EncoderSpec) -> np.ndarray:
    """Encode one raw flow record (attribute name -> cell) into a feature row.

    Raises EncodingError on a missing attribute or a garbled numeric cell.
    """
    parts = []
    for col in spec.schema.feature_columns:
        if col.name not in record:
            raise EncodingError(f"record lacks attribute {col.name!r}")
        cell = record[col.name]
        if col.kind == CATEGORICAL:
            vocab = spec.vocabularies[col.name]
            block = np.zeros(len(vocab))
            cell = str(cell).strip()
            if cell in vocab:
                block[vocab.index(cell)] = 1.0
            elif spec.unseen == "error":
                raise EncodingError(f"unseen value {cell!r} in {col.name}")
            parts.append(block)
        else:
            try:
                value = float(cell)
            except (TypeError, ValueError):
                raise EncodingError(f"attribute {col.name!r} holds {cell!r}") from None
            if not math.isfinite(value):
                raise EncodingError(f"attribute {col.name!r} is not finite")
            lo, hi = spec.bounds[col.name]
            parts.append(_scale(np.array([value]), lo, hi))
    return np.concatenate(parts) if parts else np.zeros(0)


# --------------------------------------------------------------------------
# splitting and filtering


def _stratified_indices(labels: Sequence[str], test_fraction: float, seed: int):
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    small = sorted(c for c, idx in by_class.items() if len(idx) < 2)
    if small:
        raise ClassTooSmall(f"classes with fewer than 2 rows: {', '.join(small)}")
    rng = np.random.default_rng(seed)
    test: list[int] = []
    for cls in sorted(by_class):
        idx = np.array(by_class[cls])
        n_test = min(max(int(round(test_fraction * len(idx))), 1), len(idx) - 1)
        test.extend(rng.permutation(idx)[:n_test].tolist())
    test_set = set(test)
    train = [i for i in range(len(labels)) if i not in test_set]
    return train, sorted(test_set)


def stratified_split(table: RawTable, test_fraction: float, seed: int) -> tuple[RawTable, RawTable]:
    """Split into (train, test) keeping each class's share within one row."""
    train, test = _stratified_indices(table.labels, test_fraction, seed)
    return table.take(train), table.take(test)


def filter_classes(table: RawTable, keep: Iterable[str]) -> RawTable:
    keep = set(keep)
    if not keep:
        raise ValidationError("keep set must not be empty")
    present = set(table.labels)
    absent = sorted(keep - present)
    if absent:
        warnings.warn(f"classes not in table: {', '.join(absent)}", UnknownClassWarning, stacklevel=2)
    ci = table.schema.class_column
    return RawTable(table.schema, tuple(r for r in table.rows if r[ci] in keep))


def summarize(table: RawTable) -> dict:
    return {
        "rows": len(table),
        "attributes": len(table.schema.feature_columns),
        "classes": table.class_counts(),
    }
