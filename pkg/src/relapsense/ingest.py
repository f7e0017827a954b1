"""Canonical data schema: per-subject CSV loading, validation, partitioning.

A subject directory holds five files:

    motion.csv  t,ax,ay,az,gx,gy,gz     (20 Hz accel in g, gyro in deg/s)
    rr.csv      t,rr_ms                 (5 Hz inter-beat intervals, ms)
    steps.csv   t_start,t_end,steps,distance_m,calories
    sleep.csv   t_start,t_end
    days.csv    date,label,split        label in {normal,relapse,unlabeled}

Timestamps are UTC seconds with fractional part. Validation degrades
gracefully: bad rows are rejected and counted, out-of-order rows are
sorted with a warning, overlapping sleep intervals are merged. A loaded
SensorStreams is never mutated afterwards and can be shared across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataContractError

MOTION_COLUMNS = ["t", "ax", "ay", "az", "gx", "gy", "gz"]
RR_COLUMNS = ["t", "rr_ms"]
STEP_COLUMNS = ["t_start", "t_end", "steps", "distance_m", "calories"]
SLEEP_COLUMNS = ["t_start", "t_end"]
DAY_COLUMNS = ["date", "label", "split"]

LABELS = ("normal", "relapse", "unlabeled")
SPLITS = ("train", "validation", "test")

STREAM_FILES = {
    "motion": MOTION_COLUMNS,
    "rr": RR_COLUMNS,
    "steps": STEP_COLUMNS,
    "sleep": SLEEP_COLUMNS,
    "days": DAY_COLUMNS,
}


@dataclass
class LoadReport:
    """Per-file validation counters accumulated while loading a subject."""

    rejected_rows: dict = field(default_factory=dict)
    sort_inversions: dict = field(default_factory=dict)
    merged_sleep_intervals: int = 0
    messages: list = field(default_factory=list)

    def total_rejected(self) -> int:
        return sum(self.rejected_rows.values())

    def warn(self, msg: str) -> None:
        self.messages.append(msg)


@dataclass(frozen=True)
class SensorStreams:
    """Validated, time-sorted streams for one subject. Treat as immutable."""

    subject_id: str
    motion: pd.DataFrame
    rr: pd.DataFrame
    steps: pd.DataFrame
    sleep: pd.DataFrame  # merged, non-overlapping, sorted
    days: pd.DataFrame
    report: LoadReport = field(default_factory=LoadReport, compare=False)


def _read_csv(path: Path, columns: list[str]) -> pd.DataFrame:
    if not path.is_file():
        raise DataContractError(f"missing required file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataContractError(f"{path}: missing column(s) {missing}")
    return df[columns]


def _numeric(df: pd.DataFrame, columns: list[str]) -> pd.DataFrame:
    out = df.copy()
    for c in columns:
        out[c] = pd.to_numeric(out[c].replace("", np.nan), errors="coerce")
    return out


def _count_inversions(t: np.ndarray) -> int:
    """Adjacent out-of-order pairs; what a warning should count, not O(n^2)."""
    if len(t) < 2:
        return 0
    return int(np.sum(np.diff(t) < 0))


def _sort_by(df: pd.DataFrame, col: str, name: str, report: LoadReport) -> pd.DataFrame:
    inv = _count_inversions(df[col].to_numpy(dtype=float)) if len(df) else 0
    report.sort_inversions[name] = inv
    if inv:
        report.warn(f"{name}: {inv} out-of-order rows re-sorted")
        df = df.sort_values(col, kind="mergesort").reset_index(drop=True)
    return df


def merge_intervals(starts: np.ndarray, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Merge overlapping/touching [start, end) intervals. Returns merge count."""
    if len(starts) == 0:
        return starts, ends, 0
    order = np.argsort(starts, kind="mergesort")
    starts, ends = starts[order], ends[order]
    out_s, out_e = [starts[0]], [ends[0]]
    merged = 0
    for s, e in zip(starts[1:], ends[1:]):
        if s <= out_e[-1]:
            out_e[-1] = max(out_e[-1], e)
            merged += 1
        else:
            out_s.append(s)
            out_e.append(e)
    return np.asarray(out_s), np.asarray(out_e), merged


def load_subject(subject_dir: str | Path, subject_id: str | None = None) -> SensorStreams:
    """Load and validate one subject directory into SensorStreams."""
    subject_dir = Path(subject_dir)
    if subject_id is None:
        subject_id = subject_dir.name
    report = LoadReport()

    # motion: t required and finite; channel cells may be empty (missing).
    motion = _numeric(_read_csv(subject_dir / "motion.csv", MOTION_COLUMNS), MOTION_COLUMNS)
    bad = motion["t"].isna() | np.isinf(motion[MOTION_COLUMNS[1:]]).any(axis=1)
    report.rejected_rows["motion"] = int(bad.sum())
    motion = _sort_by(motion[~bad].reset_index(drop=True), "t", "motion", report)

    rr = _numeric(_read_csv(subject_dir / "rr.csv", RR_COLUMNS), RR_COLUMNS)
    bad = rr["t"].isna() | (rr["rr_ms"].notna() & ~(rr["rr_ms"] > 0))
    report.rejected_rows["rr"] = int(bad.sum())
    rr = _sort_by(rr[~bad].reset_index(drop=True), "t", "rr", report)

    steps = _numeric(_read_csv(subject_dir / "steps.csv", STEP_COLUMNS), STEP_COLUMNS)
    bad = (
        steps[STEP_COLUMNS].isna().any(axis=1)
        | (steps["t_end"] <= steps["t_start"])
        | (steps["steps"] < 0)
        | (steps["distance_m"] < 0)
        | (steps["calories"] < 0)
        | (steps["steps"] % 1 != 0)
    )
    report.rejected_rows["steps"] = int(bad.sum())
    steps = _sort_by(steps[~bad].reset_index(drop=True), "t_start", "steps", report)
    steps["steps"] = steps["steps"].astype(np.int64)

    sleep = _numeric(_read_csv(subject_dir / "sleep.csv", SLEEP_COLUMNS), SLEEP_COLUMNS)
    bad = sleep.isna().any(axis=1) | (sleep["t_end"] <= sleep["t_start"])
    report.rejected_rows["sleep"] = int(bad.sum())
    sleep = sleep[~bad].reset_index(drop=True)
    s, e, merged = merge_intervals(
        sleep["t_start"].to_numpy(dtype=float), sleep["t_end"].to_numpy(dtype=float)
    )
    report.merged_sleep_intervals = merged
    if merged:
        report.warn(f"sleep: merged {merged} overlapping interval(s)")
    sleep = pd.DataFrame({"t_start": s, "t_end": e})

    days = _read_csv(subject_dir / "days.csv", DAY_COLUMNS)
    bad = (
        ~days["label"].isin(LABELS)
        | ~days["split"].isin(SPLITS)
        | (days["date"].str.strip() == "")
        | ((days["split"] == "train") & (days["label"] == "relapse"))
    )
    n_bad_train = int(((days["split"] == "train") & (days["label"] == "relapse")).sum())
    if n_bad_train:
        report.warn(f"days: rejected {n_bad_train} relapse-labeled train day(s)")
    report.rejected_rows["days"] = int(bad.sum())
    days = days[~bad].drop_duplicates("date").sort_values("date").reset_index(drop=True)

    if report.total_rejected():
        report.warn(f"rejected rows: {report.rejected_rows}")
    return SensorStreams(subject_id, motion, rr, steps, sleep, days, report)


def write_subject(streams: SensorStreams, out_dir: str | Path) -> Path:
    """Write streams back to the canonical CSV layout (round-trip safe)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # repr-precision floats so reload matches to better than 1e-9 relative
    streams.motion.to_csv(out_dir / "motion.csv", index=False, float_format="%.12g")
    streams.rr.to_csv(out_dir / "rr.csv", index=False, float_format="%.12g")
    streams.steps.to_csv(out_dir / "steps.csv", index=False, float_format="%.12g")
    streams.sleep.to_csv(out_dir / "sleep.csv", index=False, float_format="%.12g")
    streams.days.to_csv(out_dir / "days.csv", index=False)
    return out_dir


def sleep_mask(streams: SensorStreams, t: float | np.ndarray) -> np.ndarray | bool:
    """True where t falls in a half-open [t_start, t_end) sleep interval."""
    starts = streams.sleep["t_start"].to_numpy(dtype=float)
    ends = streams.sleep["t_end"].to_numpy(dtype=float)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    idx = np.searchsorted(starts, tt, side="right") - 1
    ok = idx >= 0
    result = np.zeros(tt.shape, dtype=bool)
    result[ok] = tt[ok] < ends[idx[ok]]
    return result if np.ndim(t) else bool(result[0])


def local_date(t: float | np.ndarray, day_offset: float = 0.0):
    """Calendar date string(s) for UTC timestamps under a fixed local offset."""
    days = np.floor((np.asarray(t, dtype=float) + day_offset) / 86400.0).astype("int64")
    dates = (np.datetime64("1970-01-01") + days.astype("timedelta64[D]")).astype(str)
    return dates if np.ndim(t) else str(dates)


def day_start_utc(date: str, day_offset: float = 0.0) -> float:
    """UTC timestamp of local midnight beginning the given calendar date."""
    day_index = (np.datetime64(date, "D") - np.datetime64("1970-01-01")).astype(int)
    return float(day_index) * 86400.0 - day_offset


@dataclass(frozen=True)
class DaySlice:
    """One calendar day's sub-streams for a subject."""

    subject_id: str
    date: str
    label: str
    split: str
    motion: pd.DataFrame
    rr: pd.DataFrame
    steps: pd.DataFrame
    sleep: pd.DataFrame  # intervals *starting* on this date


def partition_days(streams: SensorStreams, day_offset: float = 0.0) -> dict:
    """Assign every sample to exactly one calendar day by local midnight.

    Keys cover every DayRecord (empty sub-streams retained) plus any extra
    dates that carry data without a record. Sleep intervals spanning
    midnight are attributed to their starting date; point samples and
    step events are assigned by t / t_start.
    """
    out: dict[tuple[str, str], DaySlice] = {}
    meta = {row.date: (row.label, row.split) for row in streams.days.itertuples()}

    def groups(df: pd.DataFrame, col: str) -> dict:
        if len(df) == 0:
            return {}
        dates = local_date(df[col].to_numpy(dtype=float), day_offset)
        return {d: g.reset_index(drop=True) for d, g in df.groupby(dates)}

    by = {
        "motion": groups(streams.motion, "t"),
        "rr": groups(streams.rr, "t"),
        "steps": groups(streams.steps, "t_start"),
        "sleep": groups(streams.sleep, "t_start"),
    }
    all_dates = set(meta)
    for part in by.values():
        all_dates.update(part)
    for date in sorted(all_dates):
        label, split = meta.get(date, ("unlabeled", "test"))
        if date not in meta:
            streams.report.warn(f"partition: data on {date} has no DayRecord")
        out[(streams.subject_id, date)] = DaySlice(
            subject_id=streams.subject_id,
            date=date,
            label=label,
            split=split,
            motion=by["motion"].get(date, streams.motion.iloc[0:0]),
            rr=by["rr"].get(date, streams.rr.iloc[0:0]),
            steps=by["steps"].get(date, streams.steps.iloc[0:0]),
            sleep=by["sleep"].get(date, streams.sleep.iloc[0:0]),
        )
    return out
