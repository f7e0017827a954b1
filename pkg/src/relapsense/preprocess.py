"""Hampel cleaning of raw channels: outlier replacement and gap imputation.

Each channel is treated as nominally uniform-rate. Samples are snapped to
a uniform grid inside *sessions* (runs of data where consecutive gaps stay
below the Hampel window span); grid slots with no sample are explicit
missing values. Within a session the Hampel identifier replaces values
deviating from the centered window median by more than
n_sigmas * mad_scale * MAD, and imputes missing slots with the window
median when at least `impute_quorum` of the window is present. Sessions
shorter than one full window pass through unfiltered (counted).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import HampelConfig
from .ingest import SensorStreams

MOTION_CHANNELS = ["ax", "ay", "az", "gx", "gy", "gz"]


@dataclass
class PreprocessReport:
    outliers_replaced: dict = field(default_factory=dict)
    values_imputed: dict = field(default_factory=dict)
    sessions_skipped: dict = field(default_factory=dict)

    def add(self, channel: str, replaced: int, imputed: int, skipped: int) -> None:
        self.outliers_replaced[channel] = self.outliers_replaced.get(channel, 0) + replaced
        self.values_imputed[channel] = self.values_imputed.get(channel, 0) + imputed
        self.sessions_skipped[channel] = self.sessions_skipped.get(channel, 0) + skipped


def hampel_filter(
    x: np.ndarray,
    half_width: int,
    n_sigmas: float = 3.0,
    mad_scale: float = 1.4826,
    impute_quorum: float = 0.25,
) -> tuple[np.ndarray, int, int]:
    """Filter one uniform-rate sequence (NaN marks missing).

    Returns (filtered, n_replaced, n_imputed). Present values are replaced
    by the window median when their absolute deviation exceeds the scaled
    MAD; a zero-MAD window therefore replaces anything not equal to the
    median. Missing values are imputed with the window median when the
    present fraction of the (in-range) window meets the quorum.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy(), 0, 0
    if half_width < 1:
        raise ValueError("half_width must be >= 1")
    s = pd.Series(x)
    win = 2 * half_width + 1
    med = s.rolling(win, center=True, min_periods=1).median()
    mad = (s - med).abs().rolling(win, center=True, min_periods=1).median()
    present = s.notna()
    slots = pd.Series(1.0, index=s.index).rolling(win, center=True, min_periods=1).sum()
    frac = present.astype(float).rolling(win, center=True, min_periods=1).sum() / slots

    out = s.copy()
    outlier = present & med.notna() & ((s - med).abs() > n_sigmas * mad_scale * mad)
    out[outlier] = med[outlier]
    impute = ~present & med.notna() & (frac >= impute_quorum)
    out[impute] = med[impute]
    return out.to_numpy(), int(outlier.sum()), int(impute.sum())


def _sessionize(t: np.ndarray, max_gap: float) -> list[slice]:
    """Index slices of runs whose consecutive gaps are <= max_gap."""
    if len(t) == 0:
        return []
    breaks = np.flatnonzero(np.diff(t) > max_gap) + 1
    bounds = np.concatenate(([0], breaks, [len(t)]))
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _snap_to_grid(t: np.ndarray, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid timestamps covering [t0, tN] at `rate`, and each sample's slot."""
    t0 = t[0]
    idx = np.rint((t - t0) * rate).astype(np.int64)
    n = int(idx[-1]) + 1
    grid_t = t0 + np.arange(n) / rate
    return grid_t, idx


def _filter_channel_frame(
    df: pd.DataFrame,
    t_col: str,
    channels: list[str],
    rate: float,
    cfg: HampelConfig,
    report: PreprocessReport,
) -> pd.DataFrame:
    """Filter channel columns of a time-indexed frame, adding imputed rows."""
    half_width = max(1, int(round(rate * cfg.window_seconds / 2.0)))
    window = 2 * half_width + 1
    if len(df) == 0:
        return df.copy()
    t = df[t_col].to_numpy(dtype=float)
    pieces = []
    for sl in _sessionize(t, cfg.window_seconds):
        seg = df.iloc[sl]
        ts = t[sl]
        grid_t, slot = _snap_to_grid(ts, rate)
        if len(grid_t) < window:
            for ch in channels:
                report.add(ch, 0, 0, 1)
            pieces.append(seg)
            continue
        values = np.full((len(grid_t), len(channels)), np.nan)
        out_t = grid_t.copy()
        out_t[slot] = ts  # keep original timestamps where samples existed
        had_sample = np.zeros(len(grid_t), dtype=bool)
        had_sample[slot] = True
        for j, ch in enumerate(channels):
            values[slot, j] = seg[ch].to_numpy(dtype=float)
            filtered, replaced, imputed = hampel_filter(
                values[:, j], half_width, cfg.n_sigmas, cfg.mad_scale, cfg.impute_quorum
            )
            values[:, j] = filtered
            report.add(ch, replaced, imputed, 0)
        keep = had_sample | ~np.isnan(values).all(axis=1)
        piece = pd.DataFrame({t_col: out_t[keep]})
        for j, ch in enumerate(channels):
            piece[ch] = values[keep, j]
        pieces.append(piece)
    out = pd.concat(pieces, ignore_index=True)
    return out.sort_values(t_col, kind="mergesort").reset_index(drop=True)


def preprocess_streams(
    streams: SensorStreams,
    cfg: HampelConfig,
    motion_hz: float = 20.0,
    rr_hz: float = 5.0,
) -> tuple[SensorStreams, PreprocessReport]:
    """Hampel-filter motion channels and RR; steps and sleep pass through."""
    report = PreprocessReport()
    motion = _filter_channel_frame(streams.motion, "t", MOTION_CHANNELS, motion_hz, cfg, report)
    rr = _filter_channel_frame(streams.rr, "t", ["rr_ms"], rr_hz, cfg, report)
    cleaned = SensorStreams(
        subject_id=streams.subject_id,
        motion=motion,
        rr=rr,
        steps=streams.steps,
        sleep=streams.sleep,
        days=streams.days,
        report=streams.report,
    )
    return cleaned, report
