"""5-minute interval features from cleaned streams.

Per interval: normalized accel/gyro energy, mean BPM and SDNN from RR,
LF/HF band powers and fractions from a Welch PSD of the RR series,
daily sinusoidal time encoding, and step statistics. Absent feature
groups are encoded in a presence bitmask rather than dropped here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import FeatureConfig
from .ingest import SensorStreams, day_start_utc, local_date, sleep_mask

# Presence bitmask groups.
P_ACC = 1
P_GYRO = 2
P_HR = 4
P_SPECTRAL = 8
P_STEP = 16
P_TIME = 32

FEATURE_COLUMNS = [
    "acc_energy",
    "gyro_energy",
    "bpm_mean",
    "hrv_sdnn",
    "lf_power",
    "hf_power",
    "lf_fraction",
    "hf_fraction",
    "sin_t",
    "cos_t",
]
STEP_FEATURE_COLUMNS = ["step_count", "dist_mean", "cal_mean", "stepsize_mean", "speed_mean"]

CSV_COLUMNS = (
    ["subject_id", "date", "t_start", "is_sleep"]
    + FEATURE_COLUMNS
    + STEP_FEATURE_COLUMNS
    + ["presence"]
)


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray  # strictly increasing, 0 .. Nyquist
    power: np.ndarray  # one-sided density, >= 0
    resolution: float  # Hz per bin
    short_input: bool = False  # input shorter than one segment (zero-padded)


def normalized_energy(vectors: np.ndarray) -> float:
    """Mean squared norm over present samples: (1/N) sum ||v_i||^2."""
    v = np.asarray(vectors, dtype=float)
    if v.size == 0:
        raise ValueError("normalized_energy needs at least one sample")
    return float(np.mean(np.sum(v * v, axis=-1)))


def bpm_and_sdnn(rr_ms: np.ndarray) -> tuple[float, float]:
    """Mean heart rate (60000 / mean RR) and population std of RR."""
    rr = np.asarray(rr_ms, dtype=float)
    rr = rr[np.isfinite(rr)]
    if rr.size < 2:
        raise ValueError("bpm_and_sdnn needs at least 2 RR samples")
    return float(60000.0 / np.mean(rr)), float(np.std(rr))


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the spectral-analysis convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(
    x: np.ndarray, fs: float, seg_len: int = 256, overlap: float = 0.5
) -> PsdEstimate:
    """One-sided Welch PSD: Hann window, per-segment mean detrend.

    Density scaling (1 / (fs * sum(w^2))) so that the trapezoidal integral
    of the PSD approximates the signal variance. Inputs shorter than one
    segment yield a single zero-padded periodogram flagged `short_input`.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("welch_psd needs a non-empty input")
    short = x.size < seg_len
    if short:
        w = _hann(x.size)
        seg = np.zeros(seg_len)
        seg[: x.size] = (x - x.mean()) * w
        segs = seg[None, :]
        scale = 1.0 / (fs * np.sum(w * w))
    else:
        step = max(1, int(round(seg_len * (1.0 - overlap))))
        starts = range(0, x.size - seg_len + 1, step)
        w = _hann(seg_len)
        segs = np.stack([(x[s : s + seg_len] - x[s : s + seg_len].mean()) * w for s in starts])
        scale = 1.0 / (fs * np.sum(w * w))
    spec = np.abs(np.fft.rfft(segs, axis=1)) ** 2
    psd = spec.mean(axis=0) * scale
    # one-sided: double everything except DC and (even seg_len) Nyquist
    psd[1:] *= 2.0
    if seg_len % 2 == 0:
        psd[-1] /= 2.0
    freqs = np.fft.rfftfreq(seg_len, d=1.0 / fs)
    return PsdEstimate(freqs=freqs, power=psd, resolution=fs / seg_len, short_input=short)


def band_power(psd: PsdEstimate, lo: float, hi: float) -> float:
    """Trapezoidal integral of the PSD over [lo, hi) Hz."""
    mask = (psd.freqs >= lo) & (psd.freqs < hi)
    if mask.sum() < 2:
        return float(psd.power[mask].sum() * psd.resolution)
    return float(np.trapezoid(psd.power[mask], psd.freqs[mask]))


def band_powers(
    psd: PsdEstimate,
    lf_band: tuple[float, float] = (0.04, 0.15),
    hf_band: tuple[float, float] = (0.15, 0.40),
) -> tuple[float, float, float | None, float | None]:
    """LF/HF band powers and their fractions of LF+HF (None when total 0)."""
    if psd.freqs[-1] < hf_band[1] - psd.resolution:
        raise ValueError("PSD does not cover the HF band")
    lf = band_power(psd, *lf_band)
    hf = band_power(psd, *hf_band)
    total = lf + hf
    if total <= 0.0:
        return lf, hf, None, None
    return lf, hf, lf / total, hf / total


def time_encoding(t: float, day_offset: float = 0.0) -> tuple[float, float]:
    """Daily sinusoidal encoding of a timestamp: (sin, cos) of day angle."""
    seconds_into_day = (t + day_offset) % 86400.0
    theta = 2.0 * math.pi * seconds_into_day / 86400.0
    return math.sin(theta), math.cos(theta)


def apportion_steps(steps: int, fractions: np.ndarray) -> np.ndarray:
    """Split a step count by overlap fractions; round, remainder to first."""
    shares = np.rint(np.asarray(fractions, dtype=float) * steps).astype(np.int64)
    shares[0] += steps - shares.sum()
    return shares


def step_features(
    events: pd.DataFrame, interval: tuple[float, float]
) -> tuple[int, float, float, float | None, float] | None:
    """Aggregate step events overlapping [a, b).

    Events are clipped proportionally by overlap duration for extensive
    quantities (steps, distance, calories); step size and speed are
    intensive and computed from the whole event. Returns None when no
    event overlaps; stepsize_mean is None when every contributing event
    has zero steps.
    """
    a, b = interval
    if len(events) == 0:
        return None
    s = events["t_start"].to_numpy(dtype=float)
    e = events["t_end"].to_numpy(dtype=float)
    overlap = np.minimum(e, b) - np.maximum(s, a)
    keep = overlap > 0
    if not keep.any():
        return None
    ev = events[keep]
    frac = overlap[keep] / (e[keep] - s[keep])
    counts = ev["steps"].to_numpy(dtype=np.int64)
    # per-event rounded share of steps for this interval
    step_count = 0
    for i, (n, f) in enumerate(zip(counts, frac)):
        # an event fully inside contributes all its steps; spanning events
        # are apportioned across intervals by apportion_steps (the caller
        # guarantees interval grids tile the day, so shares sum up)
        step_count += int(np.rint(n * f))
    dist = ev["distance_m"].to_numpy(dtype=float) * frac
    cal = ev["calories"].to_numpy(dtype=float) * frac
    dur = e[keep] - s[keep]
    speed = ev["distance_m"].to_numpy(dtype=float) / dur
    with_steps = counts > 0
    stepsize = None
    if with_steps.any():
        stepsize = float(
            np.mean(ev["distance_m"].to_numpy(dtype=float)[with_steps] / counts[with_steps])
        )
    return (
        step_count,
        float(np.mean(dist)),
        float(np.mean(cal)),
        stepsize,
        float(np.mean(speed)),
    )


def _interval_step_shares(
    events: pd.DataFrame, day_start: float, width: int, n_intervals: int
) -> dict[int, list]:
    """Map interval index -> list of (clipped event rows) with exact shares.

    Step counts of events spanning several intervals are apportioned with
    round-to-nearest and the remainder assigned to the first interval, so
    the total is conserved.
    """
    per_interval: dict[int, list] = {}
    for row in events.itertuples():
        s, e = float(row.t_start), float(row.t_end)
        i0 = int((s - day_start) // width)
        i1 = int(math.ceil((e - day_start) / width))
        idxs, fracs = [], []
        for i in range(max(i0, 0), min(i1, n_intervals)):
            a = day_start + i * width
            ov = min(e, a + width) - max(s, a)
            if ov > 0:
                idxs.append(i)
                fracs.append(ov / (e - s))
        if not idxs:
            continue
        shares = apportion_steps(int(row.steps), np.array(fracs))
        for i, f, share in zip(idxs, fracs, shares):
            per_interval.setdefault(i, []).append(
                {
                    "steps": int(share),
                    "distance": float(row.distance_m) * f,
                    "calories": float(row.calories) * f,
                    "stepsize": (float(row.distance_m) / row.steps) if row.steps > 0 else None,
                    "speed": float(row.distance_m) / (e - s),
                }
            )
    return per_interval


def extract_intervals(
    streams: SensorStreams,
    cfg: FeatureConfig | None = None,
    day_offset: float = 0.0,
    rr_hz: float = 5.0,
) -> pd.DataFrame:
    """Extract one feature row per non-empty interval, aligned to midnight.

    Only intervals containing at least one sample or step event are
    emitted; fully empty intervals carry no information and are encoded
    by their absence (presence bitmask would be time-only).
    """
    cfg = cfg or FeatureConfig()
    width = int(cfg.interval_seconds)
    rows = []

    def interval_index(t: np.ndarray, d0: float) -> np.ndarray:
        return ((np.asarray(t, dtype=float) - d0) // width).astype(np.int64)

    motion_t = streams.motion["t"].to_numpy(dtype=float)
    rr_t = streams.rr["t"].to_numpy(dtype=float)
    dates = sorted(
        set(streams.days["date"])
        | set(local_date(motion_t, day_offset) if motion_t.size else [])
        | set(local_date(rr_t, day_offset) if rr_t.size else [])
    )
    n_intervals = 86400 // width + (1 if 86400 % width else 0)

    for date in dates:
        d0 = day_start_utc(date, day_offset)
        d1 = d0 + 86400.0
        motion = streams.motion[(motion_t >= d0) & (motion_t < d1)]
        rr = streams.rr[(rr_t >= d0) & (rr_t < d1)]
        ev_t0 = streams.steps["t_start"].to_numpy(dtype=float)
        ev_t1 = streams.steps["t_end"].to_numpy(dtype=float)
        events = streams.steps[(ev_t1 > d0) & (ev_t0 < d1)]
        step_shares = _interval_step_shares(events, d0, width, n_intervals)

        occupied = set(step_shares)
        mot_idx = interval_index(motion["t"].to_numpy(dtype=float), d0)
        rr_idx = interval_index(rr["t"].to_numpy(dtype=float), d0)
        occupied.update(np.unique(mot_idx).tolist())
        occupied.update(np.unique(rr_idx).tolist())
        if not occupied:
            continue

        mot_groups = {i: np.flatnonzero(mot_idx == i) for i in np.unique(mot_idx)}
        rr_groups = {i: np.flatnonzero(rr_idx == i) for i in np.unique(rr_idx)}
        acc = motion[["ax", "ay", "az"]].to_numpy(dtype=float)
        gyr = motion[["gx", "gy", "gz"]].to_numpy(dtype=float)
        rr_vals = rr["rr_ms"].to_numpy(dtype=float)

        for i in sorted(occupied):
            if not 0 <= i < n_intervals:
                continue
            t_start = d0 + i * width
            presence = P_TIME
            row = {
                "subject_id": streams.subject_id,
                "date": date,
                "t_start": t_start,
                "is_sleep": bool(sleep_mask(streams, t_start + width / 2.0)),
            }
            row["sin_t"], row["cos_t"] = time_encoding(t_start, day_offset)

            sel = mot_groups.get(i)
            if sel is not None and sel.size:
                a = acc[sel]
                a = a[np.isfinite(a).all(axis=1)]
                if a.size:
                    if cfg.remove_gravity:
                        a = a - a.mean(axis=0)
                    row["acc_energy"] = normalized_energy(a)
                    presence |= P_ACC
                g = gyr[sel]
                g = g[np.isfinite(g).all(axis=1)]
                if g.size:
                    row["gyro_energy"] = normalized_energy(g)
                    presence |= P_GYRO

            sel = rr_groups.get(i)
            if sel is not None and sel.size:
                vals = rr_vals[sel]
                vals = vals[np.isfinite(vals)]
                if vals.size >= 2:
                    row["bpm_mean"], row["hrv_sdnn"] = bpm_and_sdnn(vals)
                    presence |= P_HR
                    psd = welch_psd(vals, rr_hz, cfg.welch_segment, cfg.welch_overlap)
                    lf, hf, lf_frac, hf_frac = band_powers(psd, cfg.lf_band, cfg.hf_band)
                    if lf_frac is not None:
                        row.update(
                            lf_power=lf, hf_power=hf, lf_fraction=lf_frac, hf_fraction=hf_frac
                        )
                        presence |= P_SPECTRAL

            contributions = step_shares.get(i)
            if contributions:
                sizes = [c["stepsize"] for c in contributions if c["stepsize"] is not None]
                row.update(
                    step_count=sum(c["steps"] for c in contributions),
                    dist_mean=float(np.mean([c["distance"] for c in contributions])),
                    cal_mean=float(np.mean([c["calories"] for c in contributions])),
                    stepsize_mean=float(np.mean(sizes)) if sizes else np.nan,
                    speed_mean=float(np.mean([c["speed"] for c in contributions])),
                )
                presence |= P_STEP

            row["presence"] = presence
            rows.append(row)

    df = pd.DataFrame(rows, columns=CSV_COLUMNS)
    return df.sort_values(["subject_id", "t_start"], kind="mergesort").reset_index(drop=True)


def write_features(df: pd.DataFrame, path) -> None:
    """Write the canonical features_5min.csv (absent values empty)."""
    df.to_csv(path, index=False, float_format="%.12g")


def read_features(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"subject_id": str, "date": str})
    df["is_sleep"] = df["is_sleep"].astype(bool)
    return df
