"""Dataset loading, z-score normalization, NaN padding and calendar features.

Classification files (UCR style TSV): one series per line, ``label<TAB>v1<TAB>v2...``;
the literal ``NaN`` marks a missing value. Variable-length series are padded
at the end with NaN to the longest length in the file.

Forecasting / anomaly files: CSV with a header row. The first column named
``timestamp`` (or ``date``, or the first column otherwise) holds ISO-8601
strings or epoch seconds; a column named ``label`` is treated as anomaly
labels and never used as an input variable.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

N_TIME_FEATURES = 7


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Series:
    values: np.ndarray  # [T, F], NaN = missing
    label: int | None = None
    timestamps: np.ndarray | None = None  # epoch seconds, [T]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataError(f"series values must be [T, F] with T >= 1, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass(frozen=True)
class Dataset:
    """Named splits, each a stacked [N, T, F] array (NaN = missing).

    Classification datasets carry per-series labels; time-indexed datasets
    carry ``timestamps`` (epoch seconds per row, shared by all splits in
    order) and a single series per split.
    """

    train: np.ndarray
    val: np.ndarray | None = None
    test: np.ndarray | None = None
    train_labels: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    timestamps: dict[str, np.ndarray] | None = None
    columns: list[str] = field(default_factory=list)
    freq: str = "other"
    kind: str = "classification"  # or "timeseries"
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def splits(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in (("train", self.train), ("val", self.val), ("test", self.test))
                if v is not None}


def pad_to_common_length(series: list[np.ndarray]) -> np.ndarray:
    """Stack [T_i, F] arrays into [N, max T, F], padding the tail with NaN."""
    T = max(len(s) for s in series)
    F = series[0].shape[1]
    out = np.full((len(series), T, F), np.nan)
    for i, s in enumerate(series):
        out[i, :len(s)] = s
    return out


def _parse_tsv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    labels, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected a label and at least one value")
            try:
                label = float(parts[0])
                vals = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            labels.append(int(label) if label.is_integer() else label)
            rows.append(vals[:, None])
    if not rows:
        raise DataError(f"{path}: no series found")
    return np.asarray(labels), pad_to_common_length(rows)


def load_classification_tsv(train_path: str | Path, test_path: str | Path | None = None) -> Dataset:
    """Load UCR-style train (and optional test) files; both are padded to one common length."""
    y_tr, x_tr = _parse_tsv(train_path)
    y_te = x_te = None
    if test_path is not None:
        y_te, x_te = _parse_tsv(test_path)
        T = max(x_tr.shape[1], x_te.shape[1])
        x_tr = _pad_time(x_tr, T)
        x_te = _pad_time(x_te, T)
    return Dataset(train=x_tr, test=x_te, train_labels=y_tr, test_labels=y_te,
                   kind="classification")


def _pad_time(x: np.ndarray, T: int) -> np.ndarray:
    if x.shape[1] == T:
        return x
    out = np.full((x.shape[0], T, x.shape[2]), np.nan)
    out[:, :x.shape[1]] = x
    return out


def parse_timestamps(col: pd.Series) -> np.ndarray:
    if pd.api.types.is_numeric_dtype(col):
        return col.to_numpy(dtype=np.float64)
    ts = pd.to_datetime(col, utc=True)
    return (ts - pd.Timestamp("1970-01-01", tz="UTC")).dt.total_seconds().to_numpy()


def infer_freq(timestamps: np.ndarray) -> str:
    if timestamps is None or len(timestamps) < 2:
        return "other"
    step = float(np.median(np.diff(timestamps)))
    if step == 60:
        return "minutely"
    if step == 3600:
        return "hourly"
    return "other"


def _split_sizes(n: int, ratios: tuple[float, ...]) -> list[int]:
    total = sum(ratios)
    bounds = np.round(np.cumsum(ratios) / total * n).astype(int)
    return list(np.diff(np.concatenate([[0], bounds])))


def read_timeseries_csv(path: str | Path) -> tuple[pd.DataFrame, np.ndarray | None, str]:
    """Return (value columns, anomaly labels or None, name of the timestamp column)."""
    df = pd.read_csv(path)
    if df.shape[1] < 2:
        raise DataError(f"{path}: need a timestamp column and at least one value column")
    lower = {c.lower(): c for c in df.columns}
    ts_col = lower.get("timestamp") or lower.get("date") or df.columns[0]
    labels = None
    if "label" in lower:
        labels = df[lower["label"]].to_numpy().astype(int)
        df = df.drop(columns=[lower["label"]])
    return df, labels, ts_col


def load_forecast_csv(path: str | Path, target_column: str | None = None,
                      ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
                      freq: str | None = None) -> Dataset:
    """Load a time-indexed CSV and split it chronologically into train/val/test.

    ``target_column`` selects univariate mode; otherwise every non-timestamp
    column is a variable.
    """
    df, _, ts_col = read_timeseries_csv(path)
    timestamps = parse_timestamps(df[ts_col])
    value_cols = [c for c in df.columns if c != ts_col]
    if target_column is not None:
        if target_column not in value_cols:
            raise DataError(f"target column {target_column!r} not found; available: {value_cols}")
        value_cols = [target_column]
    values = df[value_cols].to_numpy(dtype=np.float64)
    sizes = _split_sizes(len(values), ratios)
    edges = np.cumsum([0] + sizes)
    names = ("train", "val", "test")
    parts = {n: values[edges[i]:edges[i + 1]][None] for i, n in enumerate(names)}
    stamps = {n: timestamps[edges[i]:edges[i + 1]] for i, n in enumerate(names)}
    return Dataset(train=parts["train"], val=parts["val"], test=parts["test"],
                   timestamps=stamps, columns=value_cols,
                   freq=freq or infer_freq(timestamps), kind="timeseries")


def zscore_normalize(dataset: Dataset) -> Dataset:
    """Standardize every variable with mean / population std of the training split.

    NaNs are ignored in the statistics and kept in the output. A variable
    with zero variance is only centered (with a warning).
    """
    tr = dataset.train.reshape(-1, dataset.train.shape[-1])
    if tr.shape[0] == 0 or np.isnan(tr).all():
        raise DataError("training split is empty")
    mean = np.nanmean(tr, axis=0)
    std = np.nanstd(tr, axis=0)
    scale = std.copy()
    if np.any(std == 0):
        warnings.warn("zero-variance variable(s) left centered only", RuntimeWarning, stacklevel=2)
        scale[std == 0] = 1.0
    norm = {k: (v - mean) / scale for k, v in dataset.splits().items()}
    return replace(dataset, **norm, mean=mean, std=std)


def _calendar(timestamps: np.ndarray) -> np.ndarray:
    ts = pd.to_datetime(np.asarray(timestamps, dtype=np.float64), unit="s", utc=True)
    iso = ts.isocalendar()
    feats = [
        ts.minute.to_numpy() / 59.0,
        ts.hour.to_numpy() / 23.0,
        ts.dayofweek.to_numpy() / 6.0,
        (ts.day.to_numpy() - 1) / 30.0,
        (ts.dayofyear.to_numpy() - 1) / 365.0,
        (ts.month.to_numpy() - 1) / 11.0,
        (iso.week.to_numpy(dtype=np.float64) - 1) / 52.0,
    ]
    return np.stack(feats, axis=-1) - 0.5


def time_features(timestamps: np.ndarray) -> np.ndarray:
    """Seven calendar channels in [-0.5, 0.5]: minute, hour, day-of-week,
    day-of-month, day-of-year, month-of-year, week-of-year."""
    return _calendar(timestamps)


def add_time_features(dataset: Dataset) -> Dataset:
    """Append the seven calendar channels to every split (forecasting data only)."""
    if dataset.kind == "classification" or dataset.timestamps is None:
        raise DataError("time features need timestamps; classification datasets have none")
    out = {}
    for name, arr in dataset.splits().items():
        feats = time_features(dataset.timestamps[name])[None]
        out[name] = np.concatenate([arr, np.broadcast_to(feats, arr.shape[:2] + (N_TIME_FEATURES,))], axis=-1)
    cols = dataset.columns + ["minute", "hour", "dayofweek", "dayofmonth", "dayofyear", "month", "week"]
    return replace(dataset, **out, columns=cols)


def fingerprint(*paths: str | Path) -> str:
    """SHA-256 over the bytes of the given files."""
    import hashlib

    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()
