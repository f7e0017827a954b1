"""Seeded synthetic wearable cohort with injected relapse-day anomalies.

Emits the exact per-subject CSV layout the ingest module reads, plus a
ground_truth.json with true labels and the anomaly parameters injected
per relapse day. Streams run at nominal device rates (20 Hz motion, 5 Hz
RR) inside two daily coverage blocks (one in the sleep period, one
awake), each a run of whole 5-minute intervals carrying per-interval
sensor bursts; this keeps a 10-subject half-year cohort desk-scale.

Relapse-day perturbations are confined to sleep-period data (unless
awake_leak > 0): a constant heart-rate shift in multiples of the
night-to-night baseline std, inflated motion variance, an LF/HF balance
shift, and `sleep_fragmentation` awake-level movement bursts per night.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .config import GenConfig
from .errors import DataContractError
from .iforest import derive_seed
from .ingest import SensorStreams

EPOCH_DAY0 = 19723  # 2024-01-01
AR_RHO = 0.9
NIGHT_HR_STD_BPM = 1.0  # night-to-night baseline std; anomaly shift unit
HR_NOISE_STD_BPM = 0.8
# fraction of the full anomaly applied outside fragmentation intervals
ANOMALY_QUIET_RATIO = 0.3125
LF_HZ, HF_HZ = 0.10, 0.30
SLEEP_ACC_NOISE_G = 0.02
AWAKE_ACC_NOISE_G = 0.15
SLEEP_GYRO_NOISE = 2.0
AWAKE_GYRO_NOISE = 20.0
INTERVAL = 300


def _date_str(day_index: int) -> str:
    return str(np.datetime64("1970-01-01") + np.timedelta64(EPOCH_DAY0 + day_index, "D"))


@dataclass
class GroundTruth:
    config: dict
    subjects: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "GroundTruth":
        doc = json.loads(Path(path).read_text())
        return cls(config=doc["config"], subjects=doc["subjects"])


@dataclass
class _SubjectParams:
    sleep_bpm: float
    awake_bpm: float
    lf_amp: float
    hf_amp: float
    step_size_m: float


def _ar1(rng, n: int, std: float) -> np.ndarray:
    eps = rng.normal(0.0, std * np.sqrt(1.0 - AR_RHO**2), n)
    return lfilter([1.0], [1.0, -AR_RHO], eps)


def _rr_burst(
    rng,
    t0: float,
    cfg: GenConfig,
    level_bpm: float,
    lf_amp: float,
    hf_amp: float,
    noise_std: float = HR_NOISE_STD_BPM,
) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(cfg.rr_burst_seconds * cfg.rr_hz))
    t = t0 + np.arange(n) / cfg.rr_hz
    phase_lf, phase_hf = rng.uniform(0, 2 * np.pi, 2)
    bpm = (
        level_bpm
        + lf_amp * np.sin(2 * np.pi * LF_HZ * t + phase_lf)
        + hf_amp * np.sin(2 * np.pi * HF_HZ * t + phase_hf)
        + _ar1(rng, n, noise_std)
    )
    bpm = np.clip(bpm, 30.0, 220.0)
    return t, 60000.0 / bpm


def _motion_burst(
    rng, t0: float, cfg: GenConfig, acc_noise: float, gyro_noise: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = int(round(cfg.motion_burst_seconds * cfg.motion_hz))
    t = t0 + np.arange(n) / cfg.motion_hz
    acc = np.array([0.0, 0.0, 1.0]) + rng.normal(0.0, acc_noise, (n, 3))
    gyro = rng.normal(0.0, gyro_noise, (n, 3))
    return t, acc, gyro


def _assign_days(rng, cfg: GenConfig) -> pd.DataFrame:
    n = cfg.n_days
    n_train = int(round(cfg.train_fraction * n))
    n_val = int(round(cfg.validation_fraction * n))
    split = np.array(
        ["train"] * n_train + ["validation"] * n_val + ["test"] * (n - n_train - n_val)
    )
    label = np.array(["normal"] * n, dtype=object)
    for name in ("validation", "test"):
        idx = np.flatnonzero(split == name)
        if idx.size == 0:
            continue
        k = max(1, int(round(cfg.relapse_fraction * idx.size)))
        chosen = rng.choice(idx, size=min(k, idx.size), replace=False)
        label[chosen] = "relapse"
    return pd.DataFrame(
        {"date": [_date_str(d) for d in range(n)], "label": label, "split": split}
    )


def _inject_missing(rng, df: pd.DataFrame, t_col: str, fraction: float, span: float) -> pd.DataFrame:
    """Drop samples inside random 5-30 minute windows until ~fraction gone."""
    if fraction <= 0 or len(df) == 0:
        return df
    t = df[t_col].to_numpy(dtype=float)
    keep = np.ones(len(df), dtype=bool)
    target = int(fraction * len(df))
    removed = 0
    for _ in range(200):
        if removed >= target:
            break
        g0 = t[0] + rng.uniform(0.0, span)
        g1 = g0 + rng.uniform(300.0, 1800.0)
        hit = keep & (t >= g0) & (t < g1)
        removed += int(hit.sum())
        keep[hit] = False
    return df[keep].reset_index(drop=True)


def generate_subject(cfg: GenConfig, subject_index: int) -> tuple[SensorStreams, dict]:
    """Generate one subject's streams and its ground-truth day records."""
    rng = np.random.default_rng(derive_seed(cfg.seed, subject_index))
    sid = f"subj_{subject_index:02d}"
    params = _SubjectParams(
        sleep_bpm=rng.uniform(60.0, 63.0),
        awake_bpm=rng.uniform(76.0, 81.0),
        lf_amp=rng.uniform(0.9, 1.1),
        hf_amp=rng.uniform(0.6, 0.8),
        step_size_m=rng.uniform(0.65, 0.75),
    )
    days = _assign_days(rng, cfg)
    prof = cfg.anomaly_profile
    n_sleep_iv = cfg.sleep_block_minutes * 60 // INTERVAL
    n_awake_iv = cfg.awake_block_minutes * 60 // INTERVAL

    motion_t, motion_acc, motion_gyro = [], [], []
    rr_t, rr_v = [], []
    sleep_rows, step_rows = [], []
    truth_days = []

    # nightly schedule: bedtime on day d, wake lands on day d+1
    bedtimes = rng.uniform(22.0 * 3600, 23.5 * 3600, cfg.n_days)
    durations = rng.uniform(6.0 * 3600, 9.0 * 3600, cfg.n_days)
    # night-to-night baselines are uniform (bounded) so normal variation has
    # hard edges; the relapse shifts land outside that range by construction
    dev_half = np.sqrt(3.0) * NIGHT_HR_STD_BPM  # uniform half-width with this std
    night_sleep_dev = rng.uniform(-dev_half, dev_half, cfg.n_days)
    night_awake_dev = rng.uniform(-dev_half, dev_half, cfg.n_days)
    night_motion_mult = rng.uniform(0.7, 1.3, cfg.n_days)
    night_amp_mult = rng.uniform(0.9, 1.1, cfg.n_days)

    for d in range(cfg.n_days):
        day0 = (EPOCH_DAY0 + d) * 86400.0
        bed = day0 + bedtimes[d]
        sleep_rows.append((bed, bed + durations[d]))

        is_relapse = days.loc[d, "label"] == "relapse"
        leak = prof.awake_leak if is_relapse else 0.0
        hr_shift = prof.sleep_hr_shift * NIGHT_HR_STD_BPM if is_relapse else 0.0
        var_mult = prof.activity_var_multiplier if is_relapse else 1.0
        lf_mult = prof.lf_hf_shift if is_relapse else 1.0

        # --- sleep coverage block: inside the previous night's morning tail
        wake_sec = None
        if d > 0:
            wake_sec = bedtimes[d - 1] + durations[d - 1] - 86400.0
        if wake_sec is not None and wake_sec >= (6 + n_sleep_iv) * INTERVAL + INTERVAL:
            max_idx = int((wake_sec - n_sleep_iv * INTERVAL) // INTERVAL)
            start_idx = int(rng.integers(6, max_idx + 1))
            frag = set()
            if is_relapse and prof.sleep_fragmentation > 0:
                frag = set(
                    rng.choice(
                        n_sleep_iv,
                        size=min(prof.sleep_fragmentation, n_sleep_iv),
                        replace=False,
                    ).tolist()
                )
            # arousal bouts concentrate the disturbance: fragmentation
            # intervals take the full anomaly while the rest of the night
            # runs at ANOMALY_QUIET_RATIO of it. The split keeps the
            # per-night mean HR excess at exactly hr_shift.
            n_frag = len(frag)
            if n_frag:
                denom = n_frag + (n_sleep_iv - n_frag) * ANOMALY_QUIET_RATIO
                hr_frag = hr_shift * n_sleep_iv / denom
                hr_quiet = ANOMALY_QUIET_RATIO * hr_frag
            else:
                hr_frag = hr_quiet = hr_shift
            surge_quiet = 1.0 + (lf_mult - 1.0) * ANOMALY_QUIET_RATIO
            var_quiet = 1.0 + (var_mult - 1.0) * ANOMALY_QUIET_RATIO
            base_lf = params.lf_amp * night_amp_mult[d]
            base_hf = params.hf_amp * night_amp_mult[d]
            base_noise = HR_NOISE_STD_BPM * night_amp_mult[d]
            for k in range(n_sleep_iv):
                iv0 = day0 + (start_idx + k) * INTERVAL
                if k in frag:
                    hr_add, surge, vmult = hr_frag, lf_mult, var_mult
                elif is_relapse:
                    hr_add, surge, vmult = hr_quiet, surge_quiet, var_quiet
                else:
                    hr_add, surge, vmult = 0.0, 1.0, 1.0
                base_level = params.sleep_bpm + night_sleep_dev[d]
                level = base_level + hr_add
                # an elevated rate compresses RR-domain amplitudes by
                # (base/level)^2, so the surge is expressed in BPM units
                # scaled to survive the rate shift
                comp = (level / base_level) ** 2
                # the LF oscillation surges hardest (sympathetic drive),
                # broadband noise follows, HF least
                lf_m = surge
                hf_m = 1.0 + 0.64 * (surge - 1.0)
                noise_m = 1.0 + 1.13 * (surge - 1.0)
                t, rr = _rr_burst(
                    rng, iv0, cfg, level,
                    base_lf * lf_m * comp, base_hf * hf_m * comp,
                    base_noise * noise_m * comp,
                )
                rr_t.append(t)
                rr_v.append(rr)
                scale = night_motion_mult[d] * np.sqrt(vmult)
                acc_noise = SLEEP_ACC_NOISE_G * scale
                gyro_noise = SLEEP_GYRO_NOISE * scale
                t, acc, gyro = _motion_burst(rng, iv0, cfg, acc_noise, gyro_noise)
                motion_t.append(t)
                motion_acc.append(acc)
                motion_gyro.append(gyro)
        else:
            start_idx = None

        # --- awake coverage block: late morning / afternoon
        awake_idx = int(rng.integers(132, 181 - n_awake_iv))  # 11:00 .. <15:05
        for k in range(n_awake_iv):
            iv0 = day0 + (awake_idx + k) * INTERVAL
            level = params.awake_bpm + night_awake_dev[d] + hr_shift * leak
            surge = 1.0 + (lf_mult - 1.0) * leak
            t, rr = _rr_burst(
                rng,
                iv0,
                cfg,
                level,
                params.lf_amp * night_amp_mult[d] * surge**2,
                params.hf_amp * night_amp_mult[d] * surge,
                HR_NOISE_STD_BPM * night_amp_mult[d] * surge,
            )
            rr_t.append(t)
            rr_v.append(rr)
            noise_mult = night_motion_mult[d] * np.sqrt(1.0 + (var_mult - 1.0) * leak)
            t, acc, gyro = _motion_burst(
                rng, iv0, cfg, AWAKE_ACC_NOISE_G * noise_mult, AWAKE_GYRO_NOISE * noise_mult
            )
            motion_t.append(t)
            motion_acc.append(acc)
            motion_gyro.append(gyro)

        # --- step events: strictly awake daytime, never inside sleep
        for _ in range(int(rng.integers(2, 6))):
            t0 = day0 + rng.uniform(10.0 * 3600, 19.5 * 3600)
            dur = rng.uniform(60.0, 600.0)
            cadence = rng.uniform(1.5, 2.0)
            steps = int(round(cadence * dur))
            distance = steps * params.step_size_m
            step_rows.append((t0, t0 + dur, steps, distance, 0.04 * steps))

        truth_days.append(
            {
                "date": days.loc[d, "date"],
                "label": days.loc[d, "label"],
                "split": days.loc[d, "split"],
                "anomaly": (
                    {
                        "hr_shift_bpm": hr_shift,
                        "activity_var_multiplier": var_mult,
                        "lf_hf_shift": lf_mult,
                        "fragmentation_bursts": prof.sleep_fragmentation,
                    }
                    if is_relapse
                    else None
                ),
            }
        )

    motion = pd.DataFrame(
        np.column_stack(
            [np.concatenate(motion_t), np.vstack(motion_acc), np.vstack(motion_gyro)]
        ),
        columns=["t", "ax", "ay", "az", "gx", "gy", "gz"],
    )
    rr = pd.DataFrame({"t": np.concatenate(rr_t), "rr_ms": np.concatenate(rr_v)})
    span = cfg.n_days * 86400.0
    motion = _inject_missing(rng, motion, "t", cfg.missing_fraction, span)
    rr = _inject_missing(rng, rr, "t", cfg.missing_fraction, span)

    steps = pd.DataFrame(
        step_rows, columns=["t_start", "t_end", "steps", "distance_m", "calories"]
    ).sort_values("t_start").reset_index(drop=True)
    steps["steps"] = steps["steps"].astype(np.int64)
    sleep = pd.DataFrame(sleep_rows, columns=["t_start", "t_end"])

    days_public = days.copy()
    days_public.loc[days_public["split"] == "test", "label"] = "unlabeled"

    streams = SensorStreams(
        subject_id=sid, motion=motion, rr=rr, steps=steps, sleep=sleep, days=days_public
    )
    truth = {"params": dataclasses.asdict(params), "days": truth_days}
    return streams, truth


def _write_stream_csvs(streams: SensorStreams, out_dir: Path) -> None:
    # 14 significant digits: sub-sample timestamp precision near 1.7e9 s
    out_dir.mkdir(parents=True, exist_ok=True)
    streams.motion.to_csv(out_dir / "motion.csv", index=False, float_format="%.14g")
    streams.rr.to_csv(out_dir / "rr.csv", index=False, float_format="%.14g")
    streams.steps.to_csv(out_dir / "steps.csv", index=False, float_format="%.14g")
    streams.sleep.to_csv(out_dir / "sleep.csv", index=False, float_format="%.14g")
    streams.days.to_csv(out_dir / "days.csv", index=False)


def generate(cfg: GenConfig, out_dir: str | Path) -> GroundTruth:
    """Write the full cohort: per-subject directories + ground_truth.json."""
    cfg.validate()
    out_dir = Path(out_dir)
    truth = GroundTruth(config=dataclasses.asdict(cfg))
    for k in range(cfg.n_subjects):
        streams, subject_truth = generate_subject(cfg, k)
        _write_stream_csvs(streams, out_dir / streams.subject_id)
        truth.subjects[streams.subject_id] = subject_truth
    truth.to_json(out_dir / "ground_truth.json")
    return truth


def inject_gap(
    streams: SensorStreams, channel: str, t0: float, duration: float
) -> SensorStreams:
    """Return streams with a marked-missing window on one channel.

    channel is 'rr' or 'motion'; rows inside [t0, t0 + duration) are
    removed. Zero duration is a no-op; a window outside the channel's
    data range is fatal.
    """
    if channel not in ("rr", "motion"):
        raise DataContractError(f"unknown channel for gap injection: {channel}")
    if duration == 0:
        return streams
    if duration < 0:
        raise DataContractError("gap duration must be >= 0")
    df = getattr(streams, channel)
    if len(df) == 0:
        raise DataContractError(f"cannot inject a gap into empty {channel} stream")
    t = df["t"].to_numpy(dtype=float)
    if t0 < t[0] or t0 + duration > t[-1]:
        raise DataContractError("gap window lies outside the data range")
    kept = df[(t < t0) | (t >= t0 + duration)].reset_index(drop=True)
    kwargs = {
        "subject_id": streams.subject_id,
        "motion": streams.motion,
        "rr": streams.rr,
        "steps": streams.steps,
        "sleep": streams.sleep,
        "days": streams.days,
        "report": streams.report,
    }
    kwargs[channel] = kept
    return SensorStreams(**kwargs)
