"""Stage orchestration shared by the CLI and the test suite.

Every stage reads its predecessor's files and writes plain CSV/JSON
artifacts, so stages are individually re-runnable and deterministic
given the same inputs and seed.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import pandas as pd

from . import dataset, features, iforest, metrics, report, synthgen
from .config import PipelineConfig
from .dataset import ExperimentCell, all_cells
from .errors import DataContractError
from .ingest import load_subject, write_subject
from .preprocess import preprocess_streams

log = logging.getLogger("relapsense")

FEATURES_FILE = "features_5min.csv"
DAYS_FILE = "days_all.csv"


def _timed(stage: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            log.info("%s finished in %.2f s", stage, time.perf_counter() - self.t0)

    return _Timer()


def subject_dirs(data_dir: str | Path) -> list[Path]:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataContractError(f"data directory not found: {data_dir}")
    dirs = sorted(p for p in data_dir.iterdir() if (p / "days.csv").is_file())
    if not dirs:
        raise DataContractError(f"no subject directories under {data_dir}")
    return dirs


def run_generate(cfg: PipelineConfig, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    with _timed("generate"):
        synthgen.generate(cfg.generator, out_dir)
    cfg.write_resolved(out_dir)
    return out_dir


def run_preprocess(cfg: PipelineConfig, data_dir: str | Path, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    counters = {}
    with _timed("preprocess"):
        for sdir in subject_dirs(data_dir):
            streams = load_subject(sdir)
            cleaned, rep = preprocess_streams(
                streams, cfg.hampel, cfg.generator.motion_hz, cfg.generator.rr_hz
            )
            write_subject(cleaned, out_dir / sdir.name)
            counters[sdir.name] = {
                "outliers_replaced": rep.outliers_replaced,
                "values_imputed": rep.values_imputed,
                "sessions_skipped": rep.sessions_skipped,
                "rejected_rows": streams.report.rejected_rows,
            }
    (out_dir / "preprocess_report.json").write_text(
        json.dumps(counters, indent=2, sort_keys=True) + "\n"
    )
    cfg.write_resolved(out_dir)
    return out_dir


def run_extract(cfg: PipelineConfig, data_dir: str | Path, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, day_frames = [], []
    with _timed("extract"):
        for sdir in subject_dirs(data_dir):
            streams = load_subject(sdir)
            frames.append(
                features.extract_intervals(
                    streams, cfg.features, cfg.day_offset_seconds, cfg.generator.rr_hz
                )
            )
            day_frames.append(streams.days.assign(subject_id=streams.subject_id))
    all_features = pd.concat(frames, ignore_index=True)
    features.write_features(all_features, out_dir / FEATURES_FILE)
    days = pd.concat(day_frames, ignore_index=True)[["subject_id", "date", "label", "split"]]
    days.to_csv(out_dir / DAYS_FILE, index=False)
    cfg.write_resolved(out_dir)
    return out_dir


def load_features_dir(features_dir: str | Path) -> tuple[pd.DataFrame, pd.DataFrame]:
    features_dir = Path(features_dir)
    fpath = features_dir / FEATURES_FILE
    dpath = features_dir / DAYS_FILE
    for p in (fpath, dpath):
        if not p.is_file():
            raise DataContractError(f"missing artifact: {p}")
    return features.read_features(fpath), pd.read_csv(dpath, dtype=str)


def build_matrix(
    cfg: PipelineConfig, features_dir: str | Path, cell: ExperimentCell
) -> tuple[dataset.FeatureMatrix, dataset.Scaler, pd.DataFrame]:
    feats, days = load_features_dir(features_dir)
    m5 = dataset.interval_stats(
        feats, days, cfg.features.interval_seconds, cfg.day_offset_seconds
    )
    standardized, scaler, _ = dataset.build_cell_matrix(
        m5,
        cell,
        require_steps=cfg.dataset.require_steps,
        per_subject_scaling=cfg.dataset.per_subject_scaling,
        day_offset=cfg.day_offset_seconds,
    )
    return standardized, scaler, days


def run_train(
    cfg: PipelineConfig, features_dir: str | Path, cell: ExperimentCell, out_dir: str | Path
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _timed("train"):
        matrix, scaler, _ = build_matrix(cfg, features_dir, cell)
        train = matrix.frame[matrix.frame["split"] == "train"]
        model = iforest.fit(
            train[matrix.feature_columns].to_numpy(dtype=float),
            n_trees=cfg.model.n_trees,
            psi=cfg.model.psi,
            seed=cfg.seed,
            column_names=matrix.feature_columns,
            labels=train["label"].to_numpy(),
        )
    matrix.write_csv(out_dir / f"matrix_{cell.tag}.csv")
    scaler.to_json(out_dir / f"scaler_{cell.tag}.json")
    model.to_json(out_dir / "model.json")
    (out_dir / "meta.json").write_text(json.dumps({"cell": cell.tag}, sort_keys=True) + "\n")
    cfg.write_resolved(out_dir)
    return out_dir


def run_score(
    cfg: PipelineConfig, model_dir: str | Path, features_dir: str | Path, out_dir: str | Path
) -> Path:
    model_dir = Path(model_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta_path = model_dir / "meta.json"
    model_path = model_dir / "model.json"
    for p in (meta_path, model_path):
        if not p.is_file():
            raise DataContractError(f"missing artifact: {p}")
    cell = ExperimentCell.parse(json.loads(meta_path.read_text())["cell"])
    with _timed("score"):
        model = iforest.ForestModel.from_json(model_path)
        matrix, _, _ = build_matrix(cfg, features_dir, cell)
        day_scores = iforest.score_days(
            model, matrix.frame, matrix.feature_columns, cfg.model.day_pooling
        )
    day_scores.to_csv(out_dir / "day_scores.csv", index=False, float_format="%.12g")
    cfg.write_resolved(out_dir)
    return out_dir


def _evaluate_frame(
    cfg: PipelineConfig,
    day_scores: pd.DataFrame,
    days: pd.DataFrame,
    cell_tag: str,
    awake_scores: pd.DataFrame | None = None,
) -> metrics.EvalReport:
    """Evaluate pooled day scores against day labels.

    When `awake_scores` is given (sleep-segment cells), labeled days that
    lack a sleep-based score receive an affinely aligned awake score.
    """
    labeled = days[days["label"].isin(["normal", "relapse"])]
    scored_keys = set(zip(day_scores["subject_id"], day_scores["date"]))
    fallback_days = 0
    if awake_scores is not None and cfg.eval.awake_fallback:
        sleep_map = {
            (r.subject_id, r.date): r.score for r in day_scores.itertuples()
        }
        label_map = {
            (r.subject_id, r.date): 1 if r.label == "relapse" else 0
            for r in labeled.itertuples()
            if (r.subject_id, r.date) in scored_keys
        }
        awake_map = {
            (r.subject_id, r.date): r.score for r in awake_scores.itertuples()
        }
        adjusted, aligned = metrics.awake_fallback_threshold(sleep_map, label_map, awake_map)
        if aligned:
            missing = [
                r
                for r in awake_scores.itertuples()
                if (r.subject_id, r.date) not in scored_keys
            ]
            if missing:
                extra = pd.DataFrame(
                    {
                        "subject_id": [r.subject_id for r in missing],
                        "date": [r.date for r in missing],
                        "label": [r.label for r in missing],
                        "split": [r.split for r in missing],
                        "n_rows": [r.n_rows for r in missing],
                        "score": [adjusted[(r.subject_id, r.date)] for r in missing],
                    }
                )
                day_scores = pd.concat([day_scores, extra], ignore_index=True)
                scored_keys |= set(zip(extra["subject_id"], extra["date"]))
                fallback_days = len(extra)
    unscoreable = sum(
        1 for r in labeled.itertuples() if (r.subject_id, r.date) not in scored_keys
    )
    return metrics.evaluate_day_scores(
        day_scores,
        cell_tag,
        unscoreable_days=unscoreable,
        aggregate_mode=cfg.eval.aggregate_mode,
        fallback_days=fallback_days,
    )


def run_evaluate(
    cfg: PipelineConfig,
    scores_csv: str | Path,
    features_dir: str | Path,
    out_dir: str | Path,
    awake_scores_csv: str | Path | None = None,
    cell_tag: str = "unspecified",
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_csv = Path(scores_csv)
    if not scores_csv.is_file():
        raise DataContractError(f"missing artifact: {scores_csv}")
    day_scores = pd.read_csv(scores_csv, dtype={"subject_id": str, "date": str})
    _, days = load_features_dir(features_dir)
    awake = None
    if awake_scores_csv is not None:
        awake = pd.read_csv(awake_scores_csv, dtype={"subject_id": str, "date": str})
    with _timed("evaluate"):
        rep = _evaluate_frame(cfg, day_scores, days, cell_tag, awake)
    (out_dir / "report.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    report.plot_day_scores(day_scores, out_dir / "day_scores.png")
    report.plot_score_distributions(day_scores, out_dir / "score_distributions.png")
    cfg.write_resolved(out_dir)
    return out_dir


def run_cell(
    cfg: PipelineConfig,
    m5: dataset.FeatureMatrix,
    days: pd.DataFrame,
    cell: ExperimentCell,
) -> pd.DataFrame:
    """Train and score one experiment cell from the shared 5-min matrix."""
    standardized, scaler, _ = dataset.build_cell_matrix(
        m5,
        cell,
        require_steps=cfg.dataset.require_steps,
        per_subject_scaling=cfg.dataset.per_subject_scaling,
        day_offset=cfg.day_offset_seconds,
    )
    train = standardized.frame[standardized.frame["split"] == "train"]
    model = iforest.fit(
        train[standardized.feature_columns].to_numpy(dtype=float),
        n_trees=cfg.model.n_trees,
        psi=cfg.model.psi,
        seed=cfg.seed,
        column_names=standardized.feature_columns,
        labels=train["label"].to_numpy(),
    )
    return iforest.score_days(
        model, standardized.frame, standardized.feature_columns, cfg.model.day_pooling
    )


def run_experiment(
    cfg: PipelineConfig, features_dir: str | Path, out_dir: str | Path
) -> dict:
    """All 18 grid cells; failed cells are reported as null, others kept."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feats, days = load_features_dir(features_dir)
    m5 = dataset.interval_stats(
        feats, days, cfg.features.interval_seconds, cfg.day_offset_seconds
    )
    day_scores: dict[str, pd.DataFrame] = {}
    results: dict[str, dict | None] = {}
    with _timed("experiment"):
        for cell in all_cells():
            try:
                day_scores[cell.tag] = run_cell(cfg, m5, days, cell)
            except Exception:
                log.exception("cell %s failed", cell.tag)
                day_scores[cell.tag] = None
        for cell in all_cells():
            scores = day_scores.get(cell.tag)
            if scores is None:
                results[cell.tag] = None
                continue
            awake = None
            if cell.segment == "sleep":
                awake = day_scores.get(ExperimentCell("awake", cell.steps, cell.resolution).tag)
            try:
                rep = _evaluate_frame(cfg, scores, days, cell.tag, awake)
                results[cell.tag] = rep.to_dict()
            except Exception:
                log.exception("evaluation of cell %s failed", cell.tag)
                results[cell.tag] = None
            scores.to_csv(
                out_dir / f"day_scores_{cell.tag}.csv", index=False, float_format="%.12g"
            )
    paths = report.write_grid_report(results, out_dir)
    cfg.write_resolved(out_dir)
    log.info("experiment grid written to %s", paths["json"])
    return results
