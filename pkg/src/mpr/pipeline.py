"""End-to-end runs: index the database, stream queries, evaluate, write reports.

Every run writes into a staging directory inside the output directory and
moves the finished files into place only on success, so a failed run never
leaves partial results behind.
"""
from __future__ import annotations

import contextlib
import csv
import logging
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import GroundTruth, Modality, Role, Sequence, load_ground_truth, load_sequence
from .descriptors import extract_all, training_features
from .descriptors.cnn import cnn_path, read_f32
from .descriptors.types import DescriptorKind, DescriptorSet, channel_name
from .descriptors.vocabulary import Vocabulary, build_vocabulary
from .errors import MissingRequired
from .evaluation import Metrics, evaluate, export_visualization_matrix, write_metrics_report
from .matching import (
    FusionWeights,
    OnlineMatcher,
    compute_distance_matrix,
    dump_score_matrix,
    fuse_score_matrices,
    write_matches,
)
from .tuning import (
    SWEEP_PARAMETERS,
    SweepContext,
    SweepResult,
    TrainingSet,
    sweep,
    tune,
    write_sweep_csv,
    write_tuning_report,
)

log = logging.getLogger(__name__)

THREADS_ENV = "MPR_THREADS"

# grids used when a sweep is requested without explicit values
DEFAULT_SWEEP_VALUES = {
    "v_min": tuple(round(0.1 + 0.05 * i, 2) for i in range(14)),
    "n_q": tuple(range(3, 80, 4)),
    "threshold_t": tuple(round(0.02 * i, 2) for i in range(51)),
}


def worker_count() -> int:
    """Worker-pool size: ``MPR_THREADS`` if set, else the CPU count."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


@dataclass
class RunReport:
    output_dir: Path
    files: list[Path] = field(default_factory=list)
    metrics: Metrics | None = None
    extraction_ms: list[float] = field(default_factory=list)  # per query frame
    matching_ms: list[float] = field(default_factory=list)
    stage_seconds: dict[str, float] = field(default_factory=dict)  # wall clock per stage
    extra: dict = field(default_factory=dict)

    @property
    def mean_frame_ms(self) -> float:
        if not self.extraction_ms:
            return 0.0
        return float(np.mean(np.add(self.extraction_ms, self.matching_ms)))


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a private staging directory; publish its files into ``out_dir`` on success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    for src in sorted(stage.rglob("*")):
        if src.is_file():
            dst = out_dir / src.relative_to(stage)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
    shutil.rmtree(stage, ignore_errors=True)


# --------------------------------------------------------------------------
# Indexing
# --------------------------------------------------------------------------


def _modalities(channels) -> set[Modality]:
    return {m for k, m in channels if k is not DescriptorKind.CNN}


def _load_pair(cfg: RunConfig) -> tuple[Sequence, Sequence]:
    mods = _modalities(cfg.channels)
    query = load_sequence(cfg.query, Role.QUERY, mods)
    db = load_sequence(cfg.database, Role.DATABASE, mods)
    return query, db


def _ground_truth(cfg: RunConfig, query: Sequence, db: Sequence) -> GroundTruth | None:
    if cfg.ground_truth is None:
        return None
    return load_ground_truth(cfg.ground_truth, len(query), len(db))


def prepare_vocabulary(cfg: RunConfig, db: Sequence) -> Vocabulary | None:
    """Load the configured vocabulary or train one; ``None`` when no BoW channel is on."""
    bow_mods = [m for k, m in cfg.channels if k is DescriptorKind.BOW]
    if not bow_mods:
        return None
    if cfg.vocabulary is not None and cfg.vocabulary.is_file():
        return Vocabulary.load(cfg.vocabulary)
    if cfg.vocabulary_train is not None:
        frames = load_sequence(cfg.vocabulary_train, Role.DATABASE, bow_mods)
    else:
        log.warning("no vocabulary given; training one on the database frames")
        frames = db
    feats = training_features(frames, bow_mods, cfg.extraction.max_keypoints)
    vocab = build_vocabulary(feats, cfg.vocab_k, cfg.vocab_depth, cfg.vocab_seed)
    if cfg.vocabulary is not None:
        cfg.vocabulary.parent.mkdir(parents=True, exist_ok=True)
        vocab.save(cfg.vocabulary)
    return vocab


def _cnn_dirs(cfg: RunConfig):
    if cfg.cnn_dir is None or not any(k is DescriptorKind.CNN for k, _ in cfg.channels):
        return None, None, None
    qdir, ddir = cfg.cnn_dir / "query", cfg.cnn_dir / "database"
    dim = cfg.cnn_dim
    if dim is None:
        dim = int(read_f32(cnn_path(ddir, 0)).size)
    return qdir, ddir, dim


def extract_sequence(seq: Sequence, cfg: RunConfig, vocab: Vocabulary | None, cnn_dir, cnn_dim,
                     threads: int | None = None) -> list[DescriptorSet]:
    """Descriptor sets of every frame, computed on a worker pool (order preserved)."""
    threads = worker_count() if threads is None else threads

    def one(frame):
        return extract_all(frame, cfg.channels, vocab, cnn_dir, cfg.extraction, cnn_dim)

    if threads <= 1:
        return [one(f) for f in seq]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seq))


@dataclass
class Index:
    query: Sequence
    db: Sequence
    gt: GroundTruth | None
    vocab: Vocabulary | None
    db_sets: list[DescriptorSet]
    cnn: tuple


def build_index(cfg: RunConfig) -> Index:
    query, db = _load_pair(cfg)
    gt = _ground_truth(cfg, query, db)
    vocab = prepare_vocabulary(cfg, db)
    qdir, ddir, dim = _cnn_dirs(cfg)
    t0 = time.perf_counter()
    db_sets = extract_sequence(db, cfg, vocab, ddir, dim)
    log.info("indexed %d database frames in %.1f s", len(db), time.perf_counter() - t0)
    return Index(query, db, gt, vocab, db_sets, (qdir, ddir, dim))


def gated_matrices(cfg: RunConfig, index: Index) -> dict:
    """Batch gated distance matrix of every enabled channel for the whole query sequence."""
    qdir, _, dim = index.cnn
    q_sets = extract_sequence(index.query, cfg, index.vocab, qdir, dim)
    qf, df = index.query.fixes, index.db.fixes
    return {c: compute_distance_matrix(q_sets, index.db_sets, c, qf, df, cfg.match.gate_m) for c in cfg.channels}


# --------------------------------------------------------------------------
# Testing mode
# --------------------------------------------------------------------------


def _write_timing(path: Path, ext_ms, match_ms) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_index", "extraction_ms", "matching_ms", "total_ms"])
        for i, (a, b) in enumerate(zip(ext_ms, match_ms)):
            w.writerow([i, f"{a:.3f}", f"{b:.3f}", f"{a + b:.3f}"])


def _write_stage_summary(path: Path, report: RunReport) -> None:
    lines = [f"{name}_s\t{secs:.3f}" for name, secs in report.stage_seconds.items()]
    if report.extraction_ms:
        lines += [
            f"mean_extraction_ms\t{np.mean(report.extraction_ms):.3f}",
            f"mean_matching_ms\t{np.mean(report.matching_ms):.3f}",
            f"mean_frame_ms\t{report.mean_frame_ms:.3f}",
        ]
    path.write_text("\n".join(lines) + "\n")


def run_testing(cfg: RunConfig) -> RunReport:
    """Stream every query frame through the online matcher and write the results."""
    start = time.perf_counter()
    index = build_index(cfg)
    qdir, _, dim = index.cnn
    matcher = OnlineMatcher(index.db_sets, index.db.fixes, cfg.channels, cfg.fusion_weights, cfg.match)
    report = RunReport(cfg.output_dir)
    indexed = time.perf_counter()
    for frame in index.query:
        t0 = time.perf_counter()
        qset = extract_all(frame, cfg.channels, index.vocab, qdir, cfg.extraction, dim)
        t1 = time.perf_counter()
        matcher.push(qset, frame.gnss)
        t2 = time.perf_counter()
        report.extraction_ms.append((t1 - t0) * 1e3)
        report.matching_ms.append((t2 - t1) * 1e3)
    decisions = matcher.decisions
    report.stage_seconds = {
        "load_and_index": indexed - start,
        "query_stream": time.perf_counter() - indexed,
        "descriptor_extraction": sum(report.extraction_ms) / 1e3,
        "matching": sum(report.matching_ms) / 1e3,
    }

    with staged_output(cfg.output_dir) as stage:
        write_matches(decisions, stage / "matches.csv")
        _write_timing(stage / "timing.csv", report.extraction_ms, report.matching_ms)
        extra = {"mean_frame_ms": f"{report.mean_frame_ms:.3f}"}
        if index.gt is not None:
            counts, metrics = evaluate(decisions, index.gt, cfg.tolerance, cfg.error_accepted_only)
            report.metrics = metrics
            report.extra["counts"] = counts
            write_metrics_report(counts, metrics, stage / "metrics.txt", extra)
            export_visualization_matrix(decisions, index.gt, cfg.tolerance, stage / "visualization.csv",
                                        len(index.db))
        if cfg.dump_scores:
            scores = matcher.score_matrices()
            (stage / "scores").mkdir()
            for c, s in scores.items():
                dump_score_matrix(s, c, stage / "scores" / f"{channel_name(c)}.f32")
            dump_score_matrix(fuse_score_matrices(scores, matcher.weights), "fused", stage / "scores" / "fused.f32")
        if cfg.plots:
            from . import plotting

            plotting.plot_timing(report.extraction_ms, report.matching_ms, stage / "timing.png")
            if index.gt is not None:
                plotting.plot_visualization_matrix(decisions, index.gt, cfg.tolerance, len(index.query),
                                                   len(index.db), stage / "visualization.png")
        report.stage_seconds["overall"] = time.perf_counter() - start
        _write_stage_summary(stage / "timing_summary.txt", report)
        names = sorted(p.relative_to(stage) for p in stage.rglob("*") if p.is_file())
    report.files = [cfg.output_dir / n for n in names]
    report.extra["decisions"] = decisions
    return report


# --------------------------------------------------------------------------
# Tuning and sweep modes
# --------------------------------------------------------------------------


def _sweep_values(cfg: RunConfig, parameter: str):
    for name, values in cfg.sweeps:
        if name == parameter:
            return values
    return DEFAULT_SWEEP_VALUES[parameter]


def _run_sweeps(cfg: RunConfig, ctx: SweepContext, parameters, stage: Path) -> dict[str, SweepResult]:
    results = {}
    for name in parameters:
        res = sweep(name, _sweep_values(cfg, name), ctx)
        write_sweep_csv(res, stage / f"sweep_{name}.csv")
        if cfg.plots:
            from . import plotting

            plotting.plot_sweep(res, stage / f"sweep_{name}.png")
        results[name] = res
    return results


def _require_gt(index: Index, what: str) -> GroundTruth:
    if index.gt is None:
        raise MissingRequired(f"{what} requires ground truth")
    return index.gt


def run_tuning(cfg: RunConfig) -> RunReport:
    """Search fusion coefficients, then run any configured sweeps with them."""
    index = build_index(cfg)
    gt = _require_gt(index, "tuning")
    gated = gated_matrices(cfg, index)
    training = TrainingSet.from_gated(gated, gt, cfg.match, cfg.tolerance, cfg.tuning_threshold)
    result = tune(cfg.ga, training)
    report = RunReport(cfg.output_dir)
    report.extra["tuning"] = result
    with staged_output(cfg.output_dir) as stage:
        write_tuning_report(result, stage / "tuning_report.txt", stage / "fitness_traces.csv")
        if cfg.plots:
            from . import plotting

            plotting.plot_fitness_traces([r.trace for r in result.runs], stage / "fitness_traces.png")
        if cfg.sweeps:
            weights = FusionWeights.from_vector(result.aggregated).restrict(cfg.channels)
            ctx = SweepContext(gated, gt, weights, cfg.match, cfg.tolerance, cfg.error_accepted_only)
            report.extra["sweeps"] = _run_sweeps(cfg, ctx, [n for n, _ in cfg.sweeps], stage)
        names = sorted(p.relative_to(stage) for p in stage.rglob("*") if p.is_file())
    report.files = [cfg.output_dir / n for n in names]
    return report


def run_sweep(cfg: RunConfig, parameters=None) -> RunReport:
    """Sweep one or more matching parameters with the configured coefficients."""
    if parameters is None:
        parameters = [n for n, _ in cfg.sweeps] or list(SWEEP_PARAMETERS)
    index = build_index(cfg)
    gt = _require_gt(index, "a sweep")
    gated = gated_matrices(cfg, index)
    ctx = SweepContext(gated, gt, cfg.fusion_weights, cfg.match, cfg.tolerance, cfg.error_accepted_only)
    report = RunReport(cfg.output_dir)
    with staged_output(cfg.output_dir) as stage:
        report.extra["sweeps"] = _run_sweeps(cfg, ctx, parameters, stage)
        names = sorted(p.relative_to(stage) for p in stage.rglob("*") if p.is_file())
    report.files = [cfg.output_dir / n for n in names]
    return report
