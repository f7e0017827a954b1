"""Model-ready matrices: interval stats, aggregation, cell selection,
unit-norm standardization, subject-agnostic concatenation.

A matrix row carries provenance (subject_id, date, t_start, label, split,
is_sleep) followed by [mean, std] statistics of each base feature over
the constituent 5-minute intervals. Standardization is per-column
z-scoring with train-split statistics followed by per-row L2
normalization; absent step groups are imputed at the train column mean,
which lands on exactly zero after z-scoring.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataContractError
from .features import FEATURE_COLUMNS, STEP_FEATURE_COLUMNS

META_COLUMNS = ["subject_id", "date", "t_start", "label", "split", "is_sleep"]

SEGMENTS = ("sleep", "awake", "aggregate")
STEP_MODES = ("with_step", "without_step")
RESOLUTIONS = ("5min", "60min", "daily")


@dataclass(frozen=True)
class ExperimentCell:
    segment: str
    steps: str
    resolution: str

    def __post_init__(self):
        if (
            self.segment not in SEGMENTS
            or self.steps not in STEP_MODES
            or self.resolution not in RESOLUTIONS
        ):
            raise DataContractError(f"invalid experiment cell: {self}")

    @property
    def tag(self) -> str:
        return f"{self.segment}_{self.steps}_{self.resolution}"

    @classmethod
    def parse(cls, tag: str) -> "ExperimentCell":
        for steps in STEP_MODES:  # segment may not contain '_', steps does
            suffix_start = tag.find(f"_{steps}_")
            if suffix_start != -1:
                segment = tag[:suffix_start]
                resolution = tag[suffix_start + len(steps) + 2 :]
                return cls(segment, steps, resolution)
        raise DataContractError(f"cannot parse cell tag: {tag}")


def all_cells() -> list[ExperimentCell]:
    return [
        ExperimentCell(seg, st, res)
        for st in STEP_MODES
        for seg in SEGMENTS
        for res in RESOLUTIONS
    ]


@dataclass
class FeatureMatrix:
    """Provenance frame + base-feature statistics columns."""

    frame: pd.DataFrame
    feature_columns: list[str]
    cell: ExperimentCell | None = None
    dropped_rows: int = 0

    @property
    def X(self) -> np.ndarray:
        return self.frame[self.feature_columns].to_numpy(dtype=float)

    def __len__(self) -> int:
        return len(self.frame)

    def write_csv(self, path) -> None:
        self.frame[META_COLUMNS + self.feature_columns].to_csv(
            path, index=False, float_format="%.12g"
        )


def _stat_columns(base: list[str]) -> list[str]:
    cols = []
    for name in base:
        cols += [f"{name}_mean", f"{name}_std"]
    return cols


def _bucket_starts(t: np.ndarray, width: int, day_offset: float) -> np.ndarray:
    """Window starts aligned to local midnight under a fixed UTC offset."""
    return ((t + day_offset) // width) * width - day_offset


def interval_stats(
    features: pd.DataFrame,
    day_labels: pd.DataFrame,
    width: int = 300,
    day_offset: float = 0.0,
) -> FeatureMatrix:
    """Per-window [mean, std] of each base feature over constituent rows.

    At the native 5-minute width each window holds one row, so every std
    is 0. Rows missing any required (non-step) base feature are dropped
    and counted; absent step features are retained as NaN for later
    imputation. `day_labels` maps (subject_id, date) -> (label, split).
    """
    base = FEATURE_COLUMNS + STEP_FEATURE_COLUMNS
    df = features.copy()
    required = df[FEATURE_COLUMNS].notna().all(axis=1)
    dropped = int((~required).sum())
    df = df[required]

    bucket = _bucket_starts(df["t_start"].to_numpy(dtype=float), width, day_offset)
    df = df.assign(_bucket=bucket)
    grouped = df.groupby(["subject_id", "date", "_bucket"], sort=True)

    agg = grouped[base].agg(["mean", lambda s: s.std(ddof=0)])
    agg.columns = _stat_columns(base)
    meta = grouped.agg(
        is_sleep=("is_sleep", lambda s: bool(s.mean() > 0.5)),
    ).reset_index()
    out = pd.concat([meta, agg.reset_index(drop=True)], axis=1)
    out = out.rename(columns={"_bucket": "t_start"})

    labels = day_labels.set_index(["subject_id", "date"])
    key = pd.MultiIndex.from_frame(out[["subject_id", "date"]])
    out["label"] = labels["label"].reindex(key).to_numpy()
    out["split"] = labels["split"].reindex(key).to_numpy()
    known = out["label"].notna() & out["split"].notna()
    dropped += int((~known).sum())
    out = out[known].reset_index(drop=True)

    cols = _stat_columns(base)
    return FeatureMatrix(out[META_COLUMNS + cols], cols, dropped_rows=dropped)


def select_cell(
    m: FeatureMatrix, cell: ExperimentCell, require_steps: bool = False
) -> FeatureMatrix:
    """Apply the segment and step choices of one experiment cell.

    Resolution is applied separately (aggregate_resolution /
    daily_aggregate) so the partition property |sleep| + |awake| =
    |aggregate| holds exactly at the 5-minute level.
    """
    df = m.frame
    if cell.segment == "sleep":
        df = df[df["is_sleep"]]
    elif cell.segment == "awake":
        df = df[~df["is_sleep"]]
    cols = list(m.feature_columns)
    dropped = 0
    if cell.steps == "without_step":
        step_cols = _stat_columns(STEP_FEATURE_COLUMNS)
        cols = [c for c in cols if c not in step_cols]
    elif require_steps:
        step_cols = _stat_columns(STEP_FEATURE_COLUMNS)
        has_steps = df[step_cols].notna().all(axis=1)
        dropped = int((~has_steps).sum())
        df = df[has_steps]
    if len(df) == 0:
        raise DataContractError(f"cell {cell.tag}: selection produced an empty matrix")
    return FeatureMatrix(df.reset_index(drop=True), cols, cell=cell, dropped_rows=dropped)


def _aggregate(m: FeatureMatrix, width: int | None, day_offset: float = 0.0) -> FeatureMatrix:
    df = m.frame
    if width is None:  # whole-day aggregate
        keys = ["subject_id", "date"]
    else:
        keys = ["subject_id", "date", "_bucket"]
        df = df.assign(_bucket=_bucket_starts(df["t_start"].to_numpy(dtype=float), width, day_offset))
    grouped = df.groupby(keys, sort=True)
    # NaN step stats are skipped; an all-NaN group stays NaN for imputation
    agg = grouped[m.feature_columns].mean().reset_index()
    meta = grouped.agg(
        label=("label", "first"),
        split=("split", "first"),
        is_sleep=("is_sleep", lambda s: bool(s.mean() > 0.5)),
        _t0=("t_start", "min"),
    ).reset_index()
    out = agg
    out["label"] = meta["label"]
    out["split"] = meta["split"]
    out["is_sleep"] = meta["is_sleep"]
    if width is None:
        day0 = meta["_t0"].to_numpy(dtype=float)
        out["t_start"] = _bucket_starts(day0, 86400, day_offset)
    else:
        out = out.rename(columns={"_bucket": "t_start"})
    return FeatureMatrix(
        out[META_COLUMNS + m.feature_columns].reset_index(drop=True),
        list(m.feature_columns),
        cell=m.cell,
        dropped_rows=m.dropped_rows,
    )


def aggregate_resolution(
    m: FeatureMatrix, width: int = 3600, day_offset: float = 0.0
) -> FeatureMatrix:
    """Mean-pool 5-minute rows into `width`-second rows (>= 1 constituent)."""
    return _aggregate(m, width, day_offset)


def daily_aggregate(m: FeatureMatrix, day_offset: float = 0.0) -> FeatureMatrix:
    """Mean-pool all of a day's rows into one row per (subject, date)."""
    return _aggregate(m, None, day_offset)


def at_resolution(m: FeatureMatrix, resolution: str, day_offset: float = 0.0) -> FeatureMatrix:
    if resolution == "5min":
        return m
    if resolution == "60min":
        return aggregate_resolution(m, 3600, day_offset)
    if resolution == "daily":
        return daily_aggregate(m, day_offset)
    raise DataContractError(f"unknown resolution: {resolution}")


@dataclass
class Scaler:
    """Frozen per-column z-score statistics (train split only)."""

    columns: list[str]
    mean: np.ndarray
    std: np.ndarray  # zero-variance columns clamped to 1
    per_subject: dict = field(default_factory=dict)  # subject -> (mean, std)

    def to_json(self, path) -> None:
        doc = {
            "columns": self.columns,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "per_subject": {
                k: {"mean": v[0].tolist(), "std": v[1].tolist()}
                for k, v in self.per_subject.items()
            },
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "Scaler":
        doc = json.loads(Path(path).read_text())
        return cls(
            columns=doc["columns"],
            mean=np.asarray(doc["mean"], dtype=float),
            std=np.asarray(doc["std"], dtype=float),
            per_subject={
                k: (np.asarray(v["mean"], dtype=float), np.asarray(v["std"], dtype=float))
                for k, v in doc.get("per_subject", {}).items()
            },
        )


def _column_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with warnings.catch_warnings():
        # all-NaN columns (absent optional groups) are resolved to 0/1 below
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(X, axis=0)
        std = np.nanstd(X, axis=0)
    mean = np.where(np.isnan(mean), 0.0, mean)
    std = np.where((std == 0) | np.isnan(std), 1.0, std)
    return mean, std


def fit_scaler(m: FeatureMatrix, per_subject: bool = False) -> Scaler:
    """Compute z-score statistics from train-split rows only."""
    train = m.frame[m.frame["split"] == "train"]
    if len(train) == 0:
        raise DataContractError("scaler: no train-split rows available")
    mean, std = _column_stats(train[m.feature_columns].to_numpy(dtype=float))
    scaler = Scaler(list(m.feature_columns), mean, std)
    if per_subject:
        for sid, grp in train.groupby("subject_id"):
            scaler.per_subject[str(sid)] = _column_stats(
                grp[m.feature_columns].to_numpy(dtype=float)
            )
    return scaler


def apply_scaler(m: FeatureMatrix, scaler: Scaler) -> FeatureMatrix:
    """Z-score columns; NaN entries (absent step groups) become exactly 0."""
    if scaler.columns != list(m.feature_columns):
        raise DataContractError("scaler/matrix column mismatch")
    X = m.X
    if scaler.per_subject:
        Z = np.empty_like(X)
        subjects = m.frame["subject_id"].to_numpy()
        for sid in np.unique(subjects):
            mean, std = scaler.per_subject.get(str(sid), (scaler.mean, scaler.std))
            rows = subjects == sid
            Z[rows] = (X[rows] - mean) / std
    else:
        Z = (X - scaler.mean) / scaler.std
    Z = np.where(np.isnan(Z), 0.0, Z)
    frame = m.frame.copy()
    frame[m.feature_columns] = Z
    return FeatureMatrix(frame, list(m.feature_columns), m.cell, m.dropped_rows)


def standardize_unit_norm(m: FeatureMatrix) -> tuple[FeatureMatrix, int]:
    """Scale each (already z-scored) row to unit L2 norm.

    All-zero rows are left untouched; their count is returned as a warning
    indicator. Idempotent: unit vectors are unchanged.
    """
    X = m.X
    norms = np.linalg.norm(X, axis=1)
    zero_rows = int((norms == 0).sum())
    safe = np.where(norms == 0, 1.0, norms)
    frame = m.frame.copy()
    frame[m.feature_columns] = X / safe[:, None]
    return FeatureMatrix(frame, list(m.feature_columns), m.cell, m.dropped_rows), zero_rows


def build_cell_matrix(
    m5: FeatureMatrix,
    cell: ExperimentCell,
    require_steps: bool = False,
    per_subject_scaling: bool = False,
    day_offset: float = 0.0,
) -> tuple[FeatureMatrix, Scaler, int]:
    """Full path from the 5-minute stats matrix to a standardized cell matrix."""
    selected = select_cell(m5, cell, require_steps=require_steps)
    resolved = at_resolution(selected, cell.resolution, day_offset)
    scaler = fit_scaler(resolved, per_subject=per_subject_scaling)
    z = apply_scaler(resolved, scaler)
    standardized, zero_rows = standardize_unit_norm(z)
    return standardized, scaler, zero_rows
