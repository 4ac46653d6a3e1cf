"""Hierarchical k-medoids vocabulary over 256-bit binary features, plus BoW histograms.

Binary file format (little-endian)::

    8s   magic  b"MPRVOC1\\0"
    u32  k
    u32  L
    u32  node count N
    N x { i32 parent, i32 word id (-1 for inner nodes), u8[32] medoid }

Node 0 is the root; its medoid bytes are zero.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import Modality
from ..errors import InsufficientFeatures, ParseError
from .types import DescriptorKind, DescriptorVector

MAGIC = b"MPRVOC1\0"
_HEADER = struct.Struct("<8sIII")
_NODE = np.dtype([("parent", "<i4"), ("word", "<i4"), ("desc", "u1", (32,))])
_MAX_ITER = 10
_MAX_MEDOID_CANDIDATES = 512


def _bits(packed: np.ndarray) -> np.ndarray:
    return np.unpackbits(packed, axis=1).astype(np.float32)


def _hamming(a_bits: np.ndarray, b_bits: np.ndarray) -> np.ndarray:
    # exact for 0/1 entries: float32 integers below 2**24
    return a_bits.sum(1)[:, None] + b_bits.sum(1)[None, :] - 2.0 * (a_bits @ b_bits.T)


@dataclass
class Vocabulary:
    k: int
    depth: int
    parents: np.ndarray  # (N,) int32
    words: np.ndarray  # (N,) int32
    medoids: np.ndarray  # (N, 32) uint8

    def __post_init__(self):
        n = len(self.parents)
        self.children = np.full((n, self.k), -1, np.int64)
        fill = np.zeros(n, np.int64)
        for node in range(1, n):
            p = self.parents[node]
            self.children[p, fill[p]] = node
            fill[p] += 1
        self.word_count = int((self.words >= 0).sum())

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and (self.k, self.depth) == (other.k, other.depth)
            and np.array_equal(self.parents, other.parents)
            and np.array_equal(self.words, other.words)
            and np.array_equal(self.medoids, other.medoids)
        )

    def quantize(self, features: np.ndarray) -> np.ndarray:
        """Word id of every packed feature by greedy descent from the root."""
        features = np.asarray(features, np.uint8).reshape(-1, 32)
        node = np.zeros(len(features), np.int64)
        for _ in range(self.depth + 1):
            active = self.words[node] < 0
            if not active.any():
                break
            ch = self.children[node[active]]  # (m, k)
            cand = self.medoids[np.where(ch >= 0, ch, 0)]  # (m, k, 32)
            dist = np.bitwise_count(cand ^ features[active][:, None, :]).sum(-1).astype(np.int64)
            dist[ch < 0] = np.iinfo(np.int64).max
            node[active] = ch[np.arange(len(ch)), dist.argmin(1)]
        return self.words[node].astype(np.int64)

    # -- serialisation -------------------------------------------------------

    def to_bytes(self) -> bytes:
        table = np.zeros(len(self.parents), _NODE)
        table["parent"] = self.parents
        table["word"] = self.words
        table["desc"] = self.medoids
        return _HEADER.pack(MAGIC, self.k, self.depth, len(table)) + table.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Vocabulary":
        if len(blob) < _HEADER.size:
            raise ParseError("vocabulary file truncated")
        magic, k, depth, n = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ParseError("not a vocabulary file (bad magic)")
        body = blob[_HEADER.size:]
        if len(body) != n * _NODE.itemsize:
            raise ParseError(f"vocabulary node table has {len(body)} bytes, expected {n * _NODE.itemsize}")
        table = np.frombuffer(body, _NODE)
        return cls(
            k,
            depth,
            table["parent"].astype(np.int32),
            table["word"].astype(np.int32),
            table["desc"].copy(),
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_bytes(Path(path).read_bytes())


def _kmedoids(bits: np.ndarray, k: int, rng: np.random.Generator) -> tuple[list[np.ndarray], list[int]]:
    """Split distinct rows of ``bits`` into k clusters.

    Returns the member index arrays and the medoid row of each cluster.
    """
    m = len(bits)
    centers = [int(rng.integers(m))]
    nearest = _hamming(bits, bits[centers])[:, 0]
    while len(centers) < k:
        w = nearest.astype(np.float64) ** 2
        nxt = int(rng.choice(m, p=w / w.sum()))
        centers.append(nxt)
        nearest = np.minimum(nearest, _hamming(bits, bits[[nxt]])[:, 0])

    for _ in range(_MAX_ITER):
        assign = _hamming(bits, bits[centers]).argmin(1)
        updated = []
        for c in range(k):
            members = np.flatnonzero(assign == c)
            cand = members
            if len(members) > _MAX_MEDOID_CANDIDATES:
                cand = np.union1d(rng.choice(members, _MAX_MEDOID_CANDIDATES, replace=False), [centers[c]])
            cost = _hamming(bits[cand], bits[members]).sum(1)
            updated.append(int(cand[cost.argmin()]))
        if updated == centers:
            break
        centers = updated
    assign = _hamming(bits, bits[centers]).argmin(1)
    return [np.flatnonzero(assign == c) for c in range(k)], centers


def build_vocabulary(features: np.ndarray, k: int = 10, depth: int = 5, seed: int = 0) -> Vocabulary:
    """Train a vocabulary tree with at most ``k ** depth`` words.

    Nodes whose features are all identical become leaves, so a degenerate
    input yields a single-word tree.
    """
    features = np.asarray(features, np.uint8).reshape(-1, 32)
    if k < 2 or depth < 1:
        raise ValueError("need k >= 2 and depth >= 1")
    if len(features) < k:
        raise InsufficientFeatures(f"{len(features)} features cannot seed {k} clusters")
    rng = np.random.default_rng(seed)

    parents, medoids = [-1], [np.zeros(32, np.uint8)]
    queue = [(0, features, 0)]  # node id, member features, level
    head = 0
    leaf_flags = {}
    while head < len(queue):
        node, feats, level = queue[head]
        head += 1
        uniq = np.unique(feats, axis=0)
        if level == depth or len(uniq) <= 1:
            leaf_flags[node] = True
            continue
        leaf_flags[node] = False
        if len(uniq) <= k:
            groups = [feats[(feats == u).all(1)] for u in uniq]
            centers = list(uniq)
        else:
            ubits = _bits(uniq)
            clusters, cidx = _kmedoids(ubits, k, rng)
            # route duplicates with their distinct representative
            owner = np.empty(len(uniq), np.int64)
            for c, members in enumerate(clusters):
                owner[members] = c
            inv = np.unique(feats, axis=0, return_inverse=True)[1].reshape(-1)
            groups = [feats[owner[inv] == c] for c in range(k)]
            centers = [uniq[i] for i in cidx]
        for center, group in zip(centers, groups):
            child = len(parents)
            parents.append(node)
            medoids.append(np.asarray(center, np.uint8))
            queue.append((child, group, level + 1))

    words = np.full(len(parents), -1, np.int32)
    next_word = 0
    for node in range(len(parents)):
        if leaf_flags[node]:
            words[node] = next_word
            next_word += 1
    return Vocabulary(k, depth, np.array(parents, np.int32), words, np.array(medoids, np.uint8))


def extract_bow(features: np.ndarray, vocab: Vocabulary, modality: Modality = Modality.COLOR) -> DescriptorVector:
    """L1-normalised word histogram; an empty feature list gives a flagged zero vector."""
    features = np.asarray(features, np.uint8).reshape(-1, 32)
    if len(features) == 0:
        return DescriptorVector(DescriptorKind.BOW, modality, np.zeros(vocab.word_count), degenerate=True)
    counts = np.bincount(vocab.quantize(features), minlength=vocab.word_count).astype(np.float64)
    return DescriptorVector(DescriptorKind.BOW, modality, counts / counts.sum())
