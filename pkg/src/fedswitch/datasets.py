"""Dataset ingestion, preprocessing, and federated partitioning.

No downloading happens here; files are read from disk (see
scripts/fetch_datasets.py for provenance of the bundled CSVs).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from fedswitch.errors import ConfigurationError, CsvParseError
from fedswitch.sampling import (INIT_PARTITION, INIT_SPLIT, NO_STEP, SERVER,
                                Purpose, RngStreamKey, generator_for)


@dataclass(frozen=True)
class CsvSchema:
    """Declares how to interpret a CSV file.

    categorical maps column name -> pinned category order; unseen
    categories are parse errors. All non-label, non-categorical columns
    are numeric features. ``protected`` names the column whose first
    listed category marks the protected subgroup.
    """

    label: str
    categorical: dict[str, list[str]] = field(default_factory=dict)
    protected: str | None = None
    protected_value: str | None = None


@dataclass(frozen=True)
class Table:
    """In-memory numeric table after one-hot encoding."""

    features: np.ndarray   # (rows, encoded features), float64
    labels: np.ndarray     # (rows,), values in {0, 1}
    protected: np.ndarray | None  # (rows,) bool, or None
    feature_names: list[str]


@dataclass(frozen=True)
class ClientDataset:
    """One client's local data with its mandatory subgroup index sets."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray
    class0: np.ndarray | None = None
    class1: np.ndarray | None = None
    protected: np.ndarray | None = None
    unprotected: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.features.shape[0]


def load_csv(path: str, schema: CsvSchema, header: bool = True) -> Table:
    """Parse a CSV into a numeric table, one-hot encoding per the schema."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CsvParseError(f"cannot open file: {exc}", str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise CsvParseError("file is empty", str(path))
    if header:
        columns = [c.strip() for c in rows[0]]
        data_rows = rows[1:]
        first_row = 2
    else:
        columns = [str(j) for j in range(len(rows[0]))]
        data_rows = rows
        first_row = 1
    if schema.label not in columns:
        raise CsvParseError(f"label column {schema.label!r} not found",
                            str(path), column=schema.label)
    for col in list(schema.categorical) + ([schema.protected] if schema.protected else []):
        if col not in columns:
            raise CsvParseError(f"declared column {col!r} not found",
                                str(path), column=col)

    width = len(columns)
    col_of = {c: j for j, c in enumerate(columns)}
    numeric_cols = [c for c in columns
                    if c != schema.label and c not in schema.categorical]
    feature_names: list[str] = []
    for c in columns:
        if c == schema.label:
            continue
        if c in schema.categorical:
            feature_names.extend(f"{c}={v}" for v in schema.categorical[c])
        else:
            feature_names.append(c)

    n_feat = len(feature_names)
    feats = np.zeros((len(data_rows), n_feat), dtype=np.float64)
    labels = np.zeros(len(data_rows), dtype=np.float64)
    prot = np.zeros(len(data_rows), dtype=bool) if schema.protected else None

    # column offsets into the encoded feature matrix
    offsets: dict[str, int] = {}
    pos = 0
    for c in columns:
        if c == schema.label:
            continue
        offsets[c] = pos
        pos += len(schema.categorical[c]) if c in schema.categorical else 1

    for r, row in enumerate(data_rows):
        rownum = first_row + r
        if len(row) != width:
            raise CsvParseError(
                f"ragged row: expected {width} cells, got {len(row)}",
                str(path), row=rownum)
        for c in columns:
            cell = row[col_of[c]].strip()
            if c == schema.label:
                if cell not in ("0", "1"):
                    raise CsvParseError(f"label must be 0 or 1, got {cell!r}",
                                        str(path), row=rownum, column=c)
                labels[r] = float(cell)
            elif c in schema.categorical:
                cats = schema.categorical[c]
                if cell not in cats:
                    raise CsvParseError(f"unknown category {cell!r}",
                                        str(path), row=rownum, column=c)
                feats[r, offsets[c] + cats.index(cell)] = 1.0
            else:
                try:
                    feats[r, offsets[c]] = float(cell)
                except ValueError:
                    raise CsvParseError(f"unparseable numeric cell {cell!r}",
                                        str(path), row=rownum, column=c) from None
        if schema.protected:
            cell = row[col_of[schema.protected]].strip()
            ref = schema.protected_value
            if ref is None:
                ref = (schema.categorical.get(schema.protected, [cell])[0])
            prot[r] = (cell == ref)

    return Table(features=feats, labels=labels, protected=prot,
                 feature_names=feature_names)


def split_train_test(table: Table, fraction: float, run_seed: int
                     ) -> tuple[Table, Table]:
    """Seeded shuffle, then split with floor(fraction * rows) train rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rows = table.features.shape[0]
    gen = generator_for(RngStreamKey(run_seed, 0, SERVER, INIT_SPLIT, Purpose.INIT))
    perm = gen.permutation(rows)
    cut = int(np.floor(fraction * rows))
    tr, te = perm[:cut], perm[cut:]

    def take(idx):
        return Table(features=table.features[idx], labels=table.labels[idx],
                     protected=None if table.protected is None else table.protected[idx],
                     feature_names=table.feature_names)

    return take(tr), take(te)


def standardize(train: Table, test: Table, columns: list[int] | None = None
                ) -> tuple[Table, Table, tuple[np.ndarray, np.ndarray]]:
    """Zero-mean unit-variance scaling fitted on train only.

    ``columns`` restricts scaling (e.g. to numeric columns, leaving
    one-hot indicators alone); default scales everything. Constant
    columns are left centered with unit divisor.
    """
    mean = np.zeros(train.features.shape[1])
    std = np.ones(train.features.shape[1])
    cols = np.arange(train.features.shape[1]) if columns is None else np.asarray(columns)
    mean[cols] = train.features[:, cols].mean(axis=0)
    s = train.features[:, cols].std(axis=0)
    std[cols] = np.where(s > 0, s, 1.0)

    def apply(t: Table) -> Table:
        return Table(features=(t.features - mean) / std, labels=t.labels,
                     protected=t.protected, feature_names=t.feature_names)

    return apply(train), apply(test), (mean, std)


def _strata(table: Table, stratify: str) -> dict[str, np.ndarray]:
    lab = table.labels.astype(int)
    if stratify == "class":
        return {f"class{c}": np.flatnonzero(lab == c) for c in (0, 1)}
    if stratify == "class_protected":
        if table.protected is None:
            raise ConfigurationError("protected column required for "
                                     "class_protected stratification")
        out = {}
        for c in (0, 1):
            for p, tag in ((True, "protected"), (False, "unprotected")):
                out[f"class{c}_{tag}"] = np.flatnonzero(
                    (lab == c) & (table.protected == p))
        return out
    raise ConfigurationError(f"unknown stratification {stratify!r}")


def iid_partition(train: Table, n_clients: int, run_seed: int,
                  stratify: str = "class") -> list[ClientDataset]:
    """Per-stratum seeded round-robin assignment to clients.

    Every client receives within-one-sample equal shares of each
    stratum, so class (and subgroup) ratios match the global ones.
    """
    if n_clients < 1:
        raise ValueError("need at least one client")
    strata = _strata(train, stratify)
    gen = generator_for(RngStreamKey(run_seed, 0, SERVER, INIT_PARTITION,
                                     Purpose.INIT))
    assign: list[list[int]] = [[] for _ in range(n_clients)]
    rotation = 0  # stagger leftover samples across strata so total sizes stay even
    for name in sorted(strata):
        idx = strata[name]
        if idx.size < n_clients:
            raise ConfigurationError(
                f"stratum {name!r} has {idx.size} samples, fewer than "
                f"{n_clients} clients")
        shuffled = idx[gen.permutation(idx.size)]
        for pos, row in enumerate(shuffled):
            assign[(pos + rotation) % n_clients].append(int(row))
        rotation = (rotation + idx.size) % n_clients

    clients = []
    for cid, rows in enumerate(assign):
        rows_arr = np.array(sorted(rows), dtype=np.intp)
        feats = train.features[rows_arr]
        labs = train.labels[rows_arr]
        local = np.arange(rows_arr.size)
        lab_int = labs.astype(int)
        prot = None if train.protected is None else train.protected[rows_arr]
        clients.append(ClientDataset(
            client_id=cid, features=feats, labels=labs,
            class0=local[lab_int == 0], class1=local[lab_int == 1],
            protected=None if prot is None else local[prot],
            unprotected=None if prot is None else local[~prot]))
    return clients
