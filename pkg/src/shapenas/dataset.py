"""Layerwise execution-stats datasets: CSV ingestion, encoding, oversampling.

The on-disk format is comma-separated UTF-8 with a header. Required columns
(the layerwise stats schema)::

    Type, Kernel Size, Stride, Padding, Expansion Ratio, Idskip, Channels,
    Height, Width, Input Volume, Output Volume, Execution time, Cores,
    Compute Units, Memory, Clock Freq., Memory B/w

Optional columns: ``Processor Kind`` (categorical hardware feature),
``Task 0..n`` (numeric task features), ``feasible`` (0/1, default 1) and any
number of extra *target* columns (e.g. ``Memory Usage``). ``Execution time``
and the extras are response variables; everything else is a feature. Rows
with feasible=0 must leave all target cells empty: non-executable
(architecture, context) pairs carry no measurements.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .design_space import (BLOCK_KINDS, PROCESSOR_KINDS, arch_columns,
                           context_columns)

REQUIRED_COLUMNS = (
    "Type", "Kernel Size", "Stride", "Padding", "Expansion Ratio", "Idskip",
    "Channels", "Height", "Width", "Input Volume", "Output Volume",
    "Execution time", "Cores", "Compute Units", "Memory", "Clock Freq.",
    "Memory B/w",
)
# CSV numeric feature header -> encoded column name
_CSV_TO_COLUMN = {
    "Kernel Size": "kernel_size",
    "Stride": "stride",
    "Padding": "padding",
    "Expansion Ratio": "expansion_ratio",
    "Idskip": "id_skip",
    "Channels": "channels",
    "Height": "height",
    "Width": "width",
    "Input Volume": "input_volume",
    "Output Volume": "output_volume",
    "Cores": "cores",
    "Compute Units": "compute_units",
    "Memory": "memory_mb",
    "Clock Freq.": "clock_freq_mhz",
    "Memory B/w": "memory_bandwidth",
}
_OPTIONAL_FEATURES = ("Processor Kind",)


class SchemaError(ValueError):
    """Header or column structure does not match the stats schema."""


class StatsParseError(ValueError):
    """A data cell could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class MetaSample:
    """One encoded layer row: features, response targets, feasibility flag."""

    features: tuple[float, ...]
    targets: tuple[float, ...] | None  # None iff infeasible
    feasible: bool

    def __post_init__(self):
        if self.feasible != (self.targets is not None):
            raise ValueError("targets must be present iff feasible")
        if self.targets is not None:
            if any(not np.isfinite(t) or t < 0 for t in self.targets):
                raise ValueError("feasible targets must be finite and >= 0")


@dataclass
class MetaDataset:
    """Encoded stats corpus plus the registry of known-infeasible rows."""

    columns: list[str]
    target_names: list[str]
    X: np.ndarray  # (n, d) encoded features
    Y: np.ndarray  # (n, w); NaN on infeasible rows
    feasible: np.ndarray  # (n,) bool
    infeasible_registry: set = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def samples(self) -> list[MetaSample]:
        out = []
        for i in range(len(self.X)):
            ok = bool(self.feasible[i])
            out.append(MetaSample(tuple(self.X[i]),
                                  tuple(self.Y[i]) if ok else None, ok))
        return out

    def signature(self, i: int) -> tuple:
        """(arch features, context features) identity of row i."""
        n_arch = len(arch_columns())
        row = self.X[i]
        return (tuple(row[:n_arch]), tuple(row[n_arch:]))

    def feasible_subset(self) -> "MetaDataset":
        m = self.feasible
        return MetaDataset(list(self.columns), list(self.target_names),
                           self.X[m], self.Y[m], self.feasible[m], set())


def _encode_categorical(value: str, levels: tuple[str, ...]) -> list[float]:
    vec = [0.0] * len(levels)
    if value in levels:
        vec[levels.index(value)] = 1.0
    return vec


def dataset_columns(has_processor: bool, task_arity: int) -> list[str]:
    cols = arch_columns()
    cols += list(context_columns(task_arity)) if has_processor else [
        c for c in context_columns(task_arity) if not c.startswith("processor=")
    ]
    return cols


def ingest_stats(path) -> MetaDataset:
    """Load a layerwise stats CSV into an encoded, typed dataset."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header")
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        has_processor = "Processor Kind" in header
        task_cols = sorted((h for h in header if h.startswith("Task ")),
                           key=lambda h: int(h.split()[1]))
        known = set(REQUIRED_COLUMNS) | set(_OPTIONAL_FEATURES) | set(task_cols)
        extra_targets = [h for h in header
                         if h not in known and h != "feasible"]
        target_names = ["Execution time"] + extra_targets
        columns = dataset_columns(has_processor, len(task_cols))

        col_of = {h: i for i, h in enumerate(header)}

        def cell(row, name):
            return row[col_of[name]].strip()

        def numeric(row, name, line):
            raw = cell(row, name)
            try:
                return float(raw)
            except ValueError:
                raise StatsParseError(
                    f"{path}:{line}: non-numeric value {raw!r} in column "
                    f"{name!r}", line=line)

        X_rows, Y_rows, feas = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise StatsParseError(
                    f"{path}:{line}: expected {len(header)} cells, "
                    f"got {len(row)}", line=line)
            vec = _encode_categorical(cell(row, "Type"), BLOCK_KINDS)
            for csv_name in ("Kernel Size", "Stride", "Padding",
                             "Expansion Ratio", "Idskip", "Channels",
                             "Height", "Width", "Input Volume",
                             "Output Volume"):
                vec.append(numeric(row, csv_name, line))
            for csv_name in ("Cores", "Compute Units", "Memory",
                             "Clock Freq.", "Memory B/w"):
                vec.append(numeric(row, csv_name, line))
            if has_processor:
                vec += _encode_categorical(cell(row, "Processor Kind"),
                                           PROCESSOR_KINDS)
            for tc in task_cols:
                vec.append(numeric(row, tc, line))

            if "feasible" in col_of:
                raw = cell(row, "feasible")
                if raw not in ("0", "1"):
                    raise StatsParseError(
                        f"{path}:{line}: feasible must be 0 or 1, got {raw!r}",
                        line=line)
                ok = raw == "1"
            else:
                ok = True
            if ok:
                targets = [numeric(row, t, line) for t in target_names]
            else:
                for t in target_names:
                    if cell(row, t):
                        raise StatsParseError(
                            f"{path}:{line}: infeasible row must leave target "
                            f"{t!r} empty", line=line)
                targets = [np.nan] * len(target_names)
            X_rows.append(vec)
            Y_rows.append(targets)
            feas.append(ok)

    n_cols = len(columns)
    X = np.asarray(X_rows, dtype=float).reshape(len(X_rows), n_cols)
    Y = np.asarray(Y_rows, dtype=float).reshape(len(Y_rows),
                                                len(target_names))
    feasible = np.asarray(feas, dtype=bool)
    ds = MetaDataset(columns, target_names, X, Y, feasible)
    ds.infeasible_registry = {ds.signature(i) for i in range(len(ds))
                              if not feasible[i]}
    return ds


def write_stats(rows: list[dict], target_names: list[str], path,
                has_processor=True, task_arity=0) -> None:
    """Write raw (un-encoded) stats rows in the ingestion CSV schema."""
    header = list(REQUIRED_COLUMNS)
    for extra in target_names:
        if extra not in header:
            header.append(extra)
    if has_processor:
        header.append("Processor Kind")
    header += [f"Task {i}" for i in range(task_arity)]
    header.append("feasible")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row.get(h, "") for h in header])


def _numeric_column_mask(columns: list[str]) -> np.ndarray:
    """True for plain numeric columns, False for one-hot indicator blocks."""
    return np.asarray([not (c.startswith("type=") or
                            c.startswith("processor=")) for c in columns])


def oversample(data: MetaDataset, factor: float, seed: int) -> MetaDataset:
    """Grow the corpus with convex combinations of same-feasibility neighbors.

    New rows interpolate numeric columns between two neighboring rows of the
    same feasibility class with weight u ~ Uniform(0,1); one-hot categorical
    blocks are copied from the nearer parent. Feasible rows interpolate their
    targets the same way. Deterministic given the seed.
    """
    if factor < 1:
        raise ValueError("oversample factor must be >= 1")
    if int(np.sum(data.feasible)) < 2:
        raise ValueError("need at least 2 feasible samples to oversample")
    n_new = int(round((factor - 1) * len(data)))
    if n_new == 0:
        return MetaDataset(list(data.columns), list(data.target_names),
                           data.X.copy(), data.Y.copy(),
                           data.feasible.copy(),
                           set(data.infeasible_registry))
    rng = np.random.default_rng(seed)
    numeric = _numeric_column_mask(data.columns)
    k_neighbors = 5

    X_new, Y_new, feas_new = [], [], []
    for _ in range(n_new):
        # draw a parent among classes that have a same-class partner
        candidates = np.nonzero(data.feasible)[0]
        infeas = np.nonzero(~data.feasible)[0]
        if len(infeas) >= 2 and rng.uniform() < len(infeas) / len(data):
            candidates = infeas
        i = int(rng.choice(candidates))
        same = candidates[candidates != i]
        dist = np.linalg.norm(data.X[same][:, numeric] -
                              data.X[i, numeric], axis=1)
        near = same[np.argsort(dist, kind="stable")[:k_neighbors]]
        j = int(rng.choice(near))
        u = float(rng.uniform())
        row = data.X[j].copy() if u > 0.5 else data.X[i].copy()
        row[numeric] = (1 - u) * data.X[i, numeric] + u * data.X[j, numeric]
        X_new.append(row)
        if data.feasible[i]:
            Y_new.append((1 - u) * data.Y[i] + u * data.Y[j])
            feas_new.append(True)
        else:
            Y_new.append(np.full(len(data.target_names), np.nan))
            feas_new.append(False)

    X = np.vstack([data.X, np.asarray(X_new)])
    Y = np.vstack([data.Y, np.asarray(Y_new)])
    feasible = np.concatenate([data.feasible, np.asarray(feas_new)])
    out = MetaDataset(list(data.columns), list(data.target_names), X, Y,
                      feasible)
    out.infeasible_registry = {out.signature(i) for i in range(len(out))
                               if not feasible[i]}
    return out


def train_holdout_split(data: MetaDataset, test_fraction: float,
                        seed: int) -> tuple[MetaDataset, MetaDataset]:
    """Seeded shuffle split preserving the feasibility mix approximately."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    n_test = max(1, int(round(test_fraction * len(data))))
    test_idx, train_idx = order[:n_test], order[n_test:]

    def take(idx):
        sub = MetaDataset(list(data.columns), list(data.target_names),
                          data.X[idx], data.Y[idx], data.feasible[idx])
        sub.infeasible_registry = {sub.signature(i) for i in range(len(sub))
                                   if not sub.feasible[i]}
        return sub

    return take(train_idx), take(test_idx)
