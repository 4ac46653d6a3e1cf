"""GNSS-gated distance matrices, online cone search, score fusion and match selection.

Score matrices are plain ``(n, l)`` float64 arrays with entries in [0, 1];
row ``i`` only ever depends on query rows ``<= i``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import GnssFix, pairwise_geodesic
from .descriptors.types import (
    VALID_CHANNELS,
    Channel,
    DescriptorKind,
    DescriptorSet,
    DescriptorVector,
    channel_name,
    parse_channel,
)
from .errors import AllWeightsZero, ChannelMismatch, DimensionMismatch

BOW_DEGENERATE_DISTANCE = 2.0
CONE_ROUNDINGS = ("outer", "inner")


@dataclass(frozen=True)
class MatchParams:
    n_q: int = 10
    v_min: float = 0.4
    v_max: float = 2.5
    gate_m: float = 15.0
    threshold_t: float = 0.16
    strict_eq4: bool = False  # divide by n_q instead of the clipped row count
    cone_rounding: str = "outer"

    def __post_init__(self):
        if int(self.n_q) != self.n_q or self.n_q < 1:
            raise ValueError(f"n_q must be an integer >= 1, got {self.n_q}")
        if not self.v_min > 0:
            raise ValueError(f"v_min must be > 0, got {self.v_min}")
        if not self.v_max >= self.v_min:
            raise ValueError(f"v_max ({self.v_max}) must be >= v_min ({self.v_min})")
        if not self.gate_m >= 0:
            raise ValueError(f"gate must be >= 0 metres, got {self.gate_m}")
        if not 0.0 <= self.threshold_t <= 1.0:
            raise ValueError(f"threshold t must lie in [0, 1], got {self.threshold_t}")
        if self.cone_rounding not in CONE_ROUNDINGS:
            raise ValueError(f"cone_rounding must be one of {CONE_ROUNDINGS}")

    def with_(self, **kw) -> "MatchParams":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# Fusion weights
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FusionWeights:
    weights: Mapping[Channel, float] = field(default_factory=dict)

    def __post_init__(self):
        for ch, w in self.weights.items():
            if ch not in VALID_CHANNELS:
                raise ChannelMismatch(f"no such channel {ch!r}")
            if not (math.isfinite(w) and w >= 0):
                raise ValueError(f"weight of {channel_name(ch)} must be finite and >= 0, got {w}")

    def __getitem__(self, channel: Channel) -> float:
        return self.weights.get(channel, 0.0)

    @classmethod
    def uniform(cls, channels: Iterable[Channel] = VALID_CHANNELS, value: float = 1.0) -> "FusionWeights":
        return cls({c: float(value) for c in channels})

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "FusionWeights":
        if len(values) != len(VALID_CHANNELS):
            raise DimensionMismatch(f"expected {len(VALID_CHANNELS)} coefficients, got {len(values)}")
        return cls({c: float(v) for c, v in zip(VALID_CHANNELS, values)})

    def as_vector(self) -> np.ndarray:
        return np.array([self[c] for c in VALID_CHANNELS])

    def restrict(self, channels: Iterable[Channel]) -> "FusionWeights":
        keep = set(channels)
        return FusionWeights({c: w for c, w in self.weights.items() if c in keep})

    def scaled(self, factor: float) -> "FusionWeights":
        return FusionWeights({c: w * factor for c, w in self.weights.items()})


# Mean of the two training-set GA results (canonical channel order).
OPTIMAL_WEIGHTS = FusionWeights.from_vector([1.245, 1.685, 1.579, 1.091, 0.987, 0.526, 0.623, 0.840, 1.422])


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------


def _stack(vectors: Sequence[DescriptorVector]) -> tuple[np.ndarray, np.ndarray]:
    dims = {v.dimension for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed descriptor dimensions {sorted(dims)}")
    payload = np.stack([v.payload for v in vectors]).astype(np.float64)
    degenerate = np.array([v.degenerate for v in vectors])
    return payload, degenerate


class SparseHistograms:
    """Stacked non-negative histograms plus their non-zero coordinates.

    BoW histograms have at most a few hundred non-zero words out of
    thousands, so L1 distances are computed over supports only.
    """

    def __init__(self, dense: np.ndarray):
        self.dense = dense
        self.rows, self.cols = np.nonzero(dense)
        self.vals = dense[self.rows, self.cols]

    @property
    def shape(self) -> tuple[int, int]:
        return self.dense.shape


def _l1_histograms(q: np.ndarray, d: SparseHistograms) -> np.ndarray:
    """Exact L1 distances: shared support of the query plus the database-only remainder.

    Every term is a sum of non-negative values, so identical rows give exactly 0.
    """
    out = np.empty((q.shape[0], d.shape[0]))
    for i, a in enumerate(q):
        support = np.flatnonzero(a)
        shared = np.abs(d.dense[:, support] - a[support]).sum(axis=1)
        outside = a[d.cols] == 0
        db_only = np.bincount(d.rows[outside], weights=d.vals[outside], minlength=d.shape[0])
        out[i] = shared + db_only
    return out


def pairwise_distances(kind: DescriptorKind, q: np.ndarray, d, q_degenerate=None, d_degenerate=None) -> np.ndarray:
    """Distance block between stacked payloads (rows are descriptors).

    For BoW, ``d`` may be a prebuilt :class:`SparseHistograms`.
    """
    if q.shape[1] != d.shape[1]:
        raise DimensionMismatch(f"descriptor dimensions differ: {q.shape[1]} vs {d.shape[1]}")
    if kind is DescriptorKind.LDB:
        # Hamming count on 0/1 floats; exact in float64
        return q.sum(1)[:, None] + d.sum(1)[None, :] - 2.0 * (q @ d.T)
    if kind is DescriptorKind.BOW:
        if not isinstance(d, SparseHistograms):
            d = SparseHistograms(d)
        out = _l1_histograms(q, d)
        if q_degenerate is not None:
            out[np.asarray(q_degenerate, bool), :] = BOW_DEGENERATE_DISTANCE
        if d_degenerate is not None:
            out[:, np.asarray(d_degenerate, bool)] = BOW_DEGENERATE_DISTANCE
        return out
    return cdist(q, d, "euclidean")


def descriptor_distance(a: DescriptorVector, b: DescriptorVector) -> float:
    """Hamming (LDB), L1 of histograms (BoW) or Euclidean (GIST, CNN)."""
    if a.channel != b.channel:
        raise ChannelMismatch(f"{channel_name(a.channel)} vs {channel_name(b.channel)}")
    if a.dimension != b.dimension:
        raise ChannelMismatch(f"dimension {a.dimension} vs {b.dimension}")
    qa, qd = _stack([a])
    da, dd = _stack([b])
    return float(pairwise_distances(a.kind, qa, da, qd, dd)[0, 0])


# --------------------------------------------------------------------------
# Gated distance matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GatedDistanceMatrix:
    values: np.ndarray  # (n, l), finite
    excluded: np.ndarray  # (n, l) bool
    channel: Channel | None = None
    gate_m: float = math.inf

    def __post_init__(self):
        if self.values.shape != self.excluded.shape or self.values.ndim != 2:
            raise DimensionMismatch("values and exclusion mask must be matching 2-D arrays")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def gnss_exclusion(query_fixes: Sequence[GnssFix], db_fixes: Sequence[GnssFix], gate_m: float) -> np.ndarray:
    """True where both fixes are valid and farther apart than the gate."""
    if math.isinf(gate_m):
        return np.zeros((len(query_fixes), len(db_fixes)), bool)
    dist, valid = pairwise_geodesic(query_fixes, db_fixes)
    with np.errstate(invalid="ignore"):
        return valid & (dist > gate_m)


def _channel_payloads(sets: Sequence[DescriptorSet], channel: Channel):
    try:
        vectors = [s[channel] for s in sets]
    except KeyError:
        raise ChannelMismatch(f"channel {channel_name(channel)} missing from a descriptor set") from None
    return _stack(vectors)


def compute_distance_matrix(query: Sequence[DescriptorSet], db: Sequence[DescriptorSet], channel: Channel,
                            query_fixes: Sequence[GnssFix], db_fixes: Sequence[GnssFix],
                            gate_m: float) -> GatedDistanceMatrix:
    q, qdeg = _channel_payloads(query, channel)
    d, ddeg = _channel_payloads(db, channel)
    values = pairwise_distances(channel[0], q, d, qdeg, ddeg)
    excluded = gnss_exclusion(query_fixes, db_fixes, gate_m)
    return GatedDistanceMatrix(values, excluded, channel, gate_m)


def row_minima(gated: GatedDistanceMatrix) -> np.ndarray:
    """Best column of every row over non-excluded cells, -1 for fully excluded rows."""
    masked = np.where(gated.excluded, np.inf, gated.values)
    best = masked.argmin(axis=1)
    best[gated.excluded.all(axis=1)] = -1
    return best


# --------------------------------------------------------------------------
# Cone search
# --------------------------------------------------------------------------


def cone_offsets(params: MatchParams) -> list[tuple[int, int, int]]:
    """``(k, lo, hi)``: row ``i - k`` of a cone spans columns ``[j - hi, j - lo]``."""
    out = []
    for k in range(params.n_q):
        slow, fast = round(k * params.v_min, 9), round(k * params.v_max, 9)
        if params.cone_rounding == "outer":
            lo, hi = math.floor(slow), math.ceil(fast)
        else:
            lo, hi = math.ceil(slow), math.floor(fast)
        out.append((k, lo, hi))
    return out


def cone_region(i: int, j: int, params: MatchParams, n: int, l: int) -> set[tuple[int, int]]:
    if not (0 <= i < n and 0 <= j < l):
        raise IndexError(f"anchor ({i}, {j}) outside {n}x{l}")
    cells = set()
    for k, lo, hi in cone_offsets(params):
        if k > i:
            break
        for c in range(max(0, j - hi), min(l - 1, j - lo) + 1):
            cells.add((i - k, c))
    return cells


def score_pair(i: int, j: int, gated: GatedDistanceMatrix, minima: np.ndarray, params: MatchParams) -> float:
    """Fraction of cone rows whose best match lies inside the cone of (i, j)."""
    n, l = gated.shape
    cells = cone_region(i, j, params, n, l)
    n_match = sum(1 for r, c in cells if minima[r] == c)
    denom = params.n_q if params.strict_eq4 else len({r for r, _ in cells})
    return n_match / denom


def score_row(i: int, minima: Sequence[int], l: int, params: MatchParams,
              offsets: list[tuple[int, int, int]] | None = None) -> np.ndarray:
    """Scores of every anchor in query row ``i`` (anchor exclusion not applied).

    Reads ``minima[i - k]`` for ``k < n_q`` only.
    """
    offsets = cone_offsets(params) if offsets is None else offsets
    delta = np.zeros(l + 1, np.int64)
    rows = np.zeros(l, np.int64)
    for k, lo, hi in offsets:
        if k > i:
            break
        if lo > hi or lo >= l:
            continue
        rows[lo:] += 1
        c = minima[i - k]
        if c < 0 or c + lo > l - 1:
            continue
        delta[c + lo] += 1
        delta[min(c + hi, l - 1) + 1] -= 1
    n_match = np.cumsum(delta[:l])
    if params.strict_eq4:
        return n_match / float(params.n_q)
    return n_match / rows


def compute_score_matrix(gated: GatedDistanceMatrix, params: MatchParams) -> np.ndarray:
    n, l = gated.shape
    minima = row_minima(gated)
    offsets = cone_offsets(params)
    scores = np.stack([score_row(i, minima, l, params, offsets) for i in range(n)])
    scores[gated.excluded] = 0.0
    return scores


def fuse_score_matrices(channel_scores: Mapping[Channel, np.ndarray], weights: FusionWeights) -> np.ndarray:
    """Weighted mean of channel score matrices over positive-weight channels."""
    active = [c for c in VALID_CHANNELS if c in channel_scores and weights[c] > 0]
    missing = [c for c, w in weights.weights.items() if w > 0 and c not in channel_scores]
    if missing:
        raise ChannelMismatch(f"weights given for absent channels: {', '.join(map(channel_name, missing))}")
    if not active:
        raise AllWeightsZero("no channel carries a positive fusion weight")
    shapes = {np.shape(channel_scores[c]) for c in active}
    if len(shapes) > 1:
        raise DimensionMismatch(f"score matrices differ in shape: {sorted(shapes)}")
    total = np.zeros(shapes.pop())
    norm = 0.0
    # relative to the largest weight, so tiny (even subnormal) weights cannot underflow
    top = max(weights[c] for c in active)
    for c in active:
        w = weights[c] / top
        total += w * np.asarray(channel_scores[c])
        norm += w
    return total / norm


# --------------------------------------------------------------------------
# Selection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchDecision:
    query_index: int
    best_db_index: int
    best_score: float
    accepted: bool


# Fused scores lie in [0, 1]. Values closer than this are exact ties that
# floating-point rounding of the weights split, e.g. after rescaling them.
TIE_EPS = 1e-9


def best_columns(fused: np.ndarray) -> np.ndarray:
    """Per-row argmax of a fused matrix, lowest index among (near-)ties."""
    fused = np.atleast_2d(np.asarray(fused, dtype=float))
    top = fused.max(axis=1, keepdims=True)
    return (fused >= top - TIE_EPS).argmax(axis=1)


def decide(i: int, fused_row: np.ndarray, threshold_t: float) -> MatchDecision:
    j = int(best_columns(fused_row)[0])
    s = float(fused_row[j])
    return MatchDecision(i, j, s, s >= threshold_t)


def select_matches(fused: np.ndarray, threshold_t: float) -> list[MatchDecision]:
    return [decide(i, row, threshold_t) for i, row in enumerate(np.asarray(fused))]


# --------------------------------------------------------------------------
# Batch and streaming drivers
# --------------------------------------------------------------------------


def channel_score_matrices(query: Sequence[DescriptorSet], db: Sequence[DescriptorSet],
                           query_fixes, db_fixes, channels: Iterable[Channel],
                           params: MatchParams) -> tuple[dict, dict]:
    """Gated distance and score matrix of every channel: ``(gated, scores)`` dicts."""
    gated, scores = {}, {}
    for ch in channels:
        gated[ch] = compute_distance_matrix(query, db, ch, query_fixes, db_fixes, params.gate_m)
        scores[ch] = compute_score_matrix(gated[ch], params)
    return gated, scores


class OnlineMatcher:
    """Match query frames one at a time against a fully indexed database."""

    def __init__(self, db: Sequence[DescriptorSet], db_fixes: Sequence[GnssFix],
                 channels: Iterable[Channel], weights: FusionWeights, params: MatchParams):
        self.channels = [c for c in VALID_CHANNELS if c in set(channels)]
        self.weights = weights.restrict(self.channels)
        self.params = params
        self.db_fixes = list(db_fixes)
        self.l = len(db)
        self._db = {}
        for c in self.channels:
            payload, deg = _channel_payloads(db, c)
            self._db[c] = (SparseHistograms(payload) if c[0] is DescriptorKind.BOW else payload, deg)
        self._offsets = cone_offsets(params)
        self.minima: dict[Channel, list[int]] = {c: [] for c in self.channels}
        self.channel_rows: dict[Channel, list[np.ndarray]] = {c: [] for c in self.channels}
        self.decisions: list[MatchDecision] = []

    def push(self, query: DescriptorSet, fix: GnssFix) -> MatchDecision:
        i = len(self.decisions)
        excluded = gnss_exclusion([fix], self.db_fixes, self.params.gate_m)[0]
        rows = {}
        for c in self.channels:
            payload, deg = _channel_payloads([query], c)
            d, ddeg = self._db[c]
            dist = pairwise_distances(c[0], payload, d, deg, ddeg)[0]
            masked = np.where(excluded, np.inf, dist)
            self.minima[c].append(-1 if excluded.all() else int(masked.argmin()))
            row = score_row(i, self.minima[c], self.l, self.params, self._offsets)
            row[excluded] = 0.0
            rows[c] = row
            self.channel_rows[c].append(row)
        fused = fuse_score_matrices(rows, self.weights)
        decision = decide(i, fused, self.params.threshold_t)
        self.decisions.append(decision)
        return decision

    def score_matrices(self) -> dict[Channel, np.ndarray]:
        return {c: np.stack(rows) for c, rows in self.channel_rows.items() if rows}


# --------------------------------------------------------------------------
# File output
# --------------------------------------------------------------------------

MATCH_HEADER = ["query_index", "best_db_index", "best_score", "accepted"]


def write_matches(decisions: Iterable[MatchDecision], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MATCH_HEADER)
        for d in decisions:
            w.writerow([d.query_index, d.best_db_index, repr(d.best_score), int(d.accepted)])


def read_matches(path) -> list[MatchDecision]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        MatchDecision(int(r["query_index"]), int(r["best_db_index"]), float(r["best_score"]),
                      r["accepted"].strip() in ("1", "true", "True"))
        for r in rows
    ]


def dump_score_matrix(scores: np.ndarray, channel: Channel | str, path) -> tuple[Path, Path]:
    """Row-major float32 payload plus a ``.txt`` sidecar holding ``n l channel``."""
    path = Path(path)
    name = channel if isinstance(channel, str) else channel_name(channel)
    scores = np.asarray(scores)
    path.write_bytes(np.ascontiguousarray(scores, "<f4").tobytes())
    header = path.with_suffix(".txt")
    header.write_text(f"{scores.shape[0]} {scores.shape[1]} {name}\n")
    return path, header


def load_score_matrix(path) -> tuple[np.ndarray, str]:
    path = Path(path)
    n, l, name = path.with_suffix(".txt").read_text().split()
    data = np.frombuffer(path.read_bytes(), "<f4").reshape(int(n), int(l))
    return data.astype(np.float64), name


__all__ = [
    "BOW_DEGENERATE_DISTANCE", "FusionWeights", "GatedDistanceMatrix", "MatchDecision", "MatchParams",
    "OPTIMAL_WEIGHTS", "OnlineMatcher", "channel_score_matrices", "compute_distance_matrix",
    "best_columns", "compute_score_matrix", "cone_offsets", "cone_region", "decide", "descriptor_distance",
    "dump_score_matrix", "fuse_score_matrices", "gnss_exclusion", "load_score_matrix", "pairwise_distances",
    "parse_channel", "read_matches", "row_minima", "score_pair", "score_row", "select_matches",
    "write_matches",
]
