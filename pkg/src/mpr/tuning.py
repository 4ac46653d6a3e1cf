"""Fusion-coefficient search with a genetic algorithm, and parameter sweeps."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import GroundTruth
from .descriptors.types import VALID_CHANNELS, Channel, channel_name
from .errors import AllWeightsZero, EmptyList, InvalidRange
from .evaluation import DEFAULT_TOLERANCE, EvalCounts, Metrics, compute_metrics, evaluate
from .matching import (
    best_columns,
    FusionWeights,
    GatedDistanceMatrix,
    MatchParams,
    compute_score_matrix,
    fuse_score_matrices,
    select_matches,
)

log = logging.getLogger(__name__)

GENE_MIN, GENE_MAX = 0.0, 4.0
N_GENES = len(VALID_CHANNELS)
SWEEP_PARAMETERS = ("v_min", "n_q", "threshold_t")


@dataclass(frozen=True)
class GAConfig:
    population: int = 50
    generations: int = 80
    runs: int = 15
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    mutation_sigma: float = 0.3
    tournament: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.generations < 1 or self.runs < 1:
            raise ValueError("population, generations and runs must all be >= 1")
        for name in ("mutation_rate", "crossover_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")


# --------------------------------------------------------------------------
# Training data and fitness
# --------------------------------------------------------------------------


@dataclass
class TrainingSet:
    """Channel score matrices cached once; fitness only re-fuses and re-selects."""

    scores: Mapping[Channel, np.ndarray]
    truth: np.ndarray  # ground-truth db index per query row
    tolerance: int = DEFAULT_TOLERANCE
    threshold_t: float = 0.0

    @classmethod
    def from_gated(cls, gated: Mapping[Channel, GatedDistanceMatrix], gt: GroundTruth,
                   params: MatchParams = MatchParams(), tolerance: int = DEFAULT_TOLERANCE,
                   threshold_t: float = 0.0) -> "TrainingSet":
        # single-row cones so the sequence search does not bias the coefficients
        single = params.with_(n_q=1)
        scores = {c: compute_score_matrix(g, single) for c, g in gated.items()}
        n = next(iter(gated.values())).shape[0]
        truth = np.array([gt[i] for i in range(n)])
        return cls(scores, truth, tolerance, threshold_t)


def decision_counts(fused: np.ndarray, truth: np.ndarray, threshold_t: float, tolerance: int) -> EvalCounts:
    best = best_columns(fused)
    accepted = fused[np.arange(len(best)), best] >= threshold_t
    near = np.abs(best - truth) <= tolerance
    return EvalCounts(int((accepted & near).sum()), int((accepted & ~near).sum()), int((~accepted).sum()))


def fitness(genome: Sequence[float], training: TrainingSet) -> float:
    """F1 of the decisions induced by fusing with ``genome``; 0 for an all-zero genome."""
    weights = FusionWeights.from_vector(genome).restrict(training.scores)
    try:
        fused = fuse_score_matrices(training.scores, weights)
    except AllWeightsZero:
        return 0.0
    counts = decision_counts(fused, training.truth, training.threshold_t, training.tolerance)
    return compute_metrics(counts).f1


# --------------------------------------------------------------------------
# Genetic algorithm
# --------------------------------------------------------------------------


@dataclass
class GARun:
    genome: np.ndarray
    fitness: float
    trace: list[float] = field(default_factory=list)  # best fitness per generation


def _tournament(rng, fit: np.ndarray, size: int) -> int:
    picks = rng.integers(0, len(fit), size)
    best = picks[0]
    for p in picks[1:]:
        if fit[p] > fit[best] or (fit[p] == fit[best] and p < best):
            best = p
    return int(best)


def run_ga(config: GAConfig, training: TrainingSet, run_index: int = 0) -> GARun:
    """Elitist generational GA: tournament selection, uniform crossover, clamped Gaussian mutation."""
    rng = np.random.default_rng([config.seed, run_index])
    cache: dict[bytes, float] = {}

    def score(genome):
        key = genome.tobytes()
        if key not in cache:
            cache[key] = fitness(genome, training)
        return cache[key]

    pop = rng.uniform(GENE_MIN, GENE_MAX, (config.population, N_GENES))
    fit = np.array([score(g) for g in pop])
    trace = [float(fit.max())]
    for _ in range(config.generations - 1):
        elite = int(fit.argmax())
        children = [pop[elite].copy()]
        while len(children) < config.population:
            a = pop[_tournament(rng, fit, config.tournament)]
            b = pop[_tournament(rng, fit, config.tournament)]
            if rng.random() < config.crossover_rate:
                child = np.where(rng.random(N_GENES) < 0.5, a, b)
            else:
                child = a.copy()
            mutate = rng.random(N_GENES) < config.mutation_rate
            if mutate.any():
                child[mutate] += rng.normal(0.0, config.mutation_sigma, int(mutate.sum()))
                np.clip(child, GENE_MIN, GENE_MAX, out=child)
            children.append(child)
        pop = np.array(children)
        fit = np.array([score(g) for g in pop])
        trace.append(float(fit.max()))
    best = int(fit.argmax())
    return GARun(pop[best].copy(), float(fit[best]), trace)


def aggregate_runs(genomes: Sequence[Sequence[float]]) -> np.ndarray:
    if len(genomes) == 0:
        raise EmptyList("cannot aggregate zero genomes")
    return np.mean(np.asarray(genomes, dtype=np.float64), axis=0)


@dataclass
class TuningResult:
    runs: list[GARun]
    aggregated: np.ndarray
    aggregated_fitness: float


def tune(config: GAConfig, training: TrainingSet) -> TuningResult:
    runs = []
    for r in range(config.runs):
        runs.append(run_ga(config, training, r))
        log.info("GA run %d/%d: best F1 %.4f", r + 1, config.runs, runs[-1].fitness)
    agg = aggregate_runs([run.genome for run in runs])
    return TuningResult(runs, agg, fitness(agg, training))


def _fmt_genome(g) -> str:
    return "\t".join(f"{x:.6f}" for x in g)


def write_tuning_report(result: TuningResult, report_path, traces_path) -> tuple[Path, Path]:
    header = "\t".join(channel_name(c) for c in VALID_CHANNELS)
    lines = ["# genomes in channel order", f"run\t{header}\tf1"]
    for r, run in enumerate(result.runs):
        lines.append(f"{r}\t{_fmt_genome(run.genome)}\t{run.fitness:.6f}")
    lines.append(f"mean\t{_fmt_genome(result.aggregated)}\t{result.aggregated_fitness:.6f}")
    report_path = Path(report_path)
    report_path.write_text("\n".join(lines) + "\n")
    traces_path = Path(traces_path)
    with traces_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "generation", "best_f1"])
        for r, run in enumerate(result.runs):
            for g, f in enumerate(run.trace):
                w.writerow([r, g, f"{f:.6f}"])
    return report_path, traces_path


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepContext:
    """Everything a sweep needs besides the swept parameter."""

    gated: Mapping[Channel, GatedDistanceMatrix]
    gt: GroundTruth
    weights: FusionWeights
    params: MatchParams = MatchParams()
    tolerance: int = DEFAULT_TOLERANCE
    accepted_only_error: bool = False
    _scores: dict | None = None

    @property
    def scores(self) -> dict:
        """Channel score matrices at the base parameters (computed once)."""
        if self._scores is None:
            self._scores = {c: compute_score_matrix(g, self.params) for c, g in self.gated.items()}
        return self._scores


@dataclass
class SweepResult:
    parameter: str
    values: list
    metrics: list[Metrics]
    counts: list[EvalCounts]
    accepted: list[frozenset] = field(default_factory=list)


def _validate_sweep(parameter: str, values: Sequence) -> None:
    if parameter not in SWEEP_PARAMETERS:
        raise InvalidRange(f"cannot sweep {parameter!r}; choose one of {SWEEP_PARAMETERS}")
    if len(values) == 0:
        raise InvalidRange("no sweep values")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidRange("sweep values must be strictly increasing")
    if parameter == "v_min" and not all(0.1 <= v <= 0.75 for v in values):
        raise InvalidRange("v_min sweep values must lie in [0.1, 0.75]")
    if parameter == "n_q" and not all(int(v) == v and v >= 1 for v in values):
        raise InvalidRange("n_q sweep values must be integers >= 1")
    if parameter == "threshold_t" and not all(0.0 <= v <= 1.0 for v in values):
        raise InvalidRange("threshold sweep values must lie in [0, 1]")


def _evaluate_fused(fused: np.ndarray, ctx: SweepContext, threshold_t: float):
    decisions = select_matches(fused, threshold_t)
    counts, metrics = evaluate(decisions, ctx.gt, ctx.tolerance, ctx.accepted_only_error)
    accepted = frozenset(d.query_index for d in decisions if d.accepted)
    return counts, metrics, accepted


def sweep(parameter: str, values: Sequence, ctx: SweepContext) -> SweepResult:
    """Re-run matching and evaluation per value, all other parameters fixed.

    ``v_min`` sweeps tie ``v_max`` to ``1 / v_min``. Threshold sweeps reuse
    the cached score matrices; cone sweeps recompute private copies.
    """
    values = list(values)
    _validate_sweep(parameter, values)
    result = SweepResult(parameter, values, [], [])
    base_fused = None
    for v in values:
        if parameter == "threshold_t":
            if base_fused is None:
                base_fused = fuse_score_matrices(ctx.scores, ctx.weights)
            fused, t = base_fused, float(v)
        else:
            if parameter == "v_min":
                params = ctx.params.with_(v_min=float(v), v_max=1.0 / float(v))
            else:
                params = ctx.params.with_(n_q=int(v))
            scores = {c: compute_score_matrix(g, params) for c, g in ctx.gated.items()}
            fused, t = fuse_score_matrices(scores, ctx.weights), ctx.params.threshold_t
        counts, metrics, accepted = _evaluate_fused(fused, ctx, t)
        result.counts.append(counts)
        result.metrics.append(metrics)
        result.accepted.append(accepted)
    return result


def write_sweep_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([result.parameter, "precision", "recall", "f1", "mean_error", "tp", "fp", "fn"])
        for v, m, c in zip(result.values, result.metrics, result.counts):
            w.writerow([v, f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f1:.6f}", f"{m.mean_error:.6f}",
                        c.tp, c.fp, c.fn])
    return path
