"""Multimodal sequences: types, on-disk layout, GNSS geometry and a synthetic generator.

On-disk layout of one sequence root::

    <root>/color/000000.png      8-bit, 3 channels (BGR)
    <root>/depth/000000.png      16-bit raw depth in millimetres
    <root>/infrared/000000.png   8-bit grayscale
    <root>/gnss.csv              index,lat,lon,valid
    <root>/gt.csv                query_index,db_index (query roots only)
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import cv2
import numpy as np

from .errors import (
    DecodeError,
    IncompleteGroundTruth,
    IndexOutOfRange,
    InvalidFix,
    MalformedGnss,
    MissingModality,
)


EARTH_RADIUS_M = 6_371_000.0
DEPTH_MIN_MM = 500
DEPTH_MAX_MM = 10_000


class Modality(enum.Enum):
    COLOR = 0
    DEPTH = 1
    INFRARED = 2

    @property
    def dirname(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Modality":
        key = text.strip().lower()
        for m in cls:
            if m.dirname == key or m.dirname[0] == key:
                return m
        raise ValueError(f"unknown modality {text!r}")


class Role(enum.Enum):
    QUERY = "query"
    DATABASE = "database"


@dataclass(frozen=True)
class GnssFix:
    latitude: float
    longitude: float
    valid: bool = True

    def __post_init__(self):
        if self.valid:
            if not (-90.0 <= self.latitude <= 90.0 and -180.0 <= self.longitude <= 180.0):
                raise InvalidFix(f"fix out of range: ({self.latitude}, {self.longitude})")


@dataclass(frozen=True)
class MultimodalFrame:
    index: int
    images: Mapping[Modality, np.ndarray]
    gnss: GnssFix
    depth_raw: np.ndarray | None = None

    def __post_init__(self):
        shapes = {img.shape[:2] for img in self.images.values()}
        if len(shapes) > 1:
            raise DecodeError(f"frame {self.index}: mixed resolutions {sorted(shapes)}")


@dataclass(frozen=True)
class Sequence:
    frames: tuple[MultimodalFrame, ...]
    role: Role

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a sequence needs at least one frame")
        for pos, frame in enumerate(self.frames):
            if frame.index != pos:
                raise ValueError(f"frame at position {pos} has index {frame.index}")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i: int) -> MultimodalFrame:
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def fixes(self) -> list[GnssFix]:
        return [f.gnss for f in self.frames]


@dataclass(frozen=True)
class GroundTruth:
    pairs: Mapping[int, int]

    def __getitem__(self, query_index: int) -> int:
        return self.pairs[query_index]

    def __contains__(self, query_index: int) -> bool:
        return query_index in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)


# --------------------------------------------------------------------------
# GNSS geometry
# --------------------------------------------------------------------------


def geodesic_distance(a: GnssFix, b: GnssFix) -> float:
    """Haversine great-circle distance in metres between two valid fixes."""
    if not (a.valid and b.valid):
        raise InvalidFix("geodesic distance needs two valid fixes")
    lat1, lat2 = math.radians(a.latitude), math.radians(b.latitude)
    dlat = lat2 - lat1
    dlon = math.radians(b.longitude - a.longitude)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def pairwise_geodesic(query: Iterable[GnssFix], db: Iterable[GnssFix]) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised haversine over all query x database pairs.

    Returns ``(distances, both_valid)``; distances for pairs with an invalid
    fix are NaN.
    """
    q = list(query)
    d = list(db)
    qlat = np.radians([f.latitude for f in q])[:, None]
    qlon = np.radians([f.longitude for f in q])[:, None]
    dlat = np.radians([f.latitude for f in d])[None, :]
    dlon = np.radians([f.longitude for f in d])[None, :]
    h = np.sin((dlat - qlat) / 2) ** 2 + np.cos(qlat) * np.cos(dlat) * np.sin((dlon - qlon) / 2) ** 2
    dist = 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))
    valid = np.array([f.valid for f in q])[:, None] & np.array([f.valid for f in d])[None, :]
    dist[~valid] = np.nan
    return dist, valid


def offset_fix(fix: GnssFix, east_m: float, north_m: float) -> GnssFix:
    """Move a fix by a small local east/north displacement (spherical earth)."""
    lat = fix.latitude + math.degrees(north_m / EARTH_RADIUS_M)
    lon = fix.longitude + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(fix.latitude))))
    return GnssFix(lat, lon, fix.valid)


# --------------------------------------------------------------------------
# Depth
# --------------------------------------------------------------------------


def _depth_formula(raw: np.ndarray) -> np.ndarray:
    d = np.clip(raw.astype(np.float64), DEPTH_MIN_MM, DEPTH_MAX_MM)
    out = np.rint((d - DEPTH_MIN_MM) * (255.0 / (DEPTH_MAX_MM - DEPTH_MIN_MM)))
    out[raw == 0] = 0
    return out.astype(np.uint8)


_DEPTH_LUT = _depth_formula(np.arange(1 << 16, dtype=np.uint16))


def normalize_depth(raw: np.ndarray) -> np.ndarray:
    """Map raw millimetre depth to 8 bits over the [500, 10000] mm window.

    Zero (missing) pixels land on 0 like anything nearer than the window.
    """
    raw = np.asarray(raw)
    if raw.dtype == np.uint16:
        return _DEPTH_LUT[raw]
    return _depth_formula(raw)


# --------------------------------------------------------------------------
# Loading / writing
# --------------------------------------------------------------------------


def _read_gnss(path: Path) -> list[tuple[int, GnssFix]]:
    if not path.is_file():
        raise MalformedGnss(f"missing GNSS track {path}")
    rows = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "index":
                continue
            if len(row) != 4:
                raise MalformedGnss(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                idx = int(row[0])
                lat, lon = float(row[1]), float(row[2])
                valid = row[3].strip().lower() in ("1", "true", "yes")
            except ValueError as exc:
                raise MalformedGnss(f"{path}:{lineno}: {exc}") from None
            rows.append((idx, GnssFix(lat, lon, valid)))
    return rows


def _read_image(path: Path, modality: Modality) -> tuple[np.ndarray, np.ndarray | None]:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DecodeError(f"cannot decode {path}")
    if modality is Modality.DEPTH:
        if img.ndim != 2:
            raise DecodeError(f"{path}: depth must be single-channel")
        if img.dtype == np.uint16:
            return normalize_depth(img), img
        if img.dtype == np.uint8:
            return img, None
        raise DecodeError(f"{path}: unsupported depth dtype {img.dtype}")
    if img.dtype != np.uint8:
        raise DecodeError(f"{path}: expected 8-bit image, got {img.dtype}")
    if modality is Modality.COLOR:
        if img.ndim == 2:
            img = cv2.cvtColor(img, cv2.COLOR_GRAY2BGR)
        elif img.shape[2] == 4:
            img = cv2.cvtColor(img, cv2.COLOR_BGRA2BGR)
    elif img.ndim == 3:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    return img, None


def load_sequence(root, role: Role, enabled: Iterable[Modality]) -> Sequence:
    """Read one sequence from ``root`` decoding only the enabled modalities."""
    root = Path(root)
    enabled = sorted(set(enabled), key=lambda m: m.value)
    track = _read_gnss(root / "gnss.csv")
    indices = [i for i, _ in track]
    if indices != list(range(len(track))):
        raise MalformedGnss(f"{root}/gnss.csv: indices must run 0..n-1 in order")
    for m in enabled:
        folder = root / m.dirname
        n_files = len(list(folder.glob("*.png"))) if folder.is_dir() else 0
        if n_files > len(track):
            raise MalformedGnss(
                f"{root}: {n_files} {m.dirname} frames but {len(track)} GNSS rows"
            )
    frames = []
    for idx, fix in track:
        images = {}
        depth_raw = None
        for m in enabled:
            path = root / m.dirname / f"{idx:06d}.png"
            if not path.is_file():
                raise MissingModality(f"frame {idx} has no {m.dirname} image ({path})")
            images[m], raw = _read_image(path, m)
            if raw is not None:
                depth_raw = raw
        frames.append(MultimodalFrame(idx, images, fix, depth_raw))
    if not frames:
        raise MalformedGnss(f"{root}: empty sequence")
    return Sequence(tuple(frames), role)


def write_sequence(seq: Sequence, root) -> None:
    root = Path(root)
    for m in Modality:
        if any(m in f.images for f in seq):
            (root / m.dirname).mkdir(parents=True, exist_ok=True)
    for frame in seq:
        for m, img in frame.images.items():
            out = frame.depth_raw if (m is Modality.DEPTH and frame.depth_raw is not None) else img
            path = root / m.dirname / f"{frame.index:06d}.png"
            if not cv2.imwrite(str(path), out):
                raise OSError(f"failed to write {path}")
    with (root / "gnss.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "lat", "lon", "valid"])
        for frame in seq:
            g = frame.gnss
            w.writerow([frame.index, repr(g.latitude), repr(g.longitude), int(g.valid)])


def load_ground_truth(path, query_len: int, db_len: int) -> GroundTruth:
    pairs: dict[int, int] = {}
    with Path(path).open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue  # header
            q, d = int(row[0]), int(row[1])
            if not (0 <= q < query_len and 0 <= d < db_len):
                raise IndexOutOfRange(f"{path}:{lineno}: pair ({q},{d}) outside ({query_len},{db_len})")
            pairs[q] = d
    missing = [q for q in range(query_len) if q not in pairs]
    if missing:
        raise IncompleteGroundTruth(f"{path}: no entry for {len(missing)} query frames (first {missing[0]})")
    return GroundTruth(pairs)


def write_ground_truth(gt: GroundTruth, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_index", "db_index"])
        for q in sorted(gt.pairs):
            w.writerow([q, gt.pairs[q]])


# --------------------------------------------------------------------------
# Synthetic pairs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    viewpoint_px: float = 0.0
    brightness_gain: float = 0.0
    occlusion_rate: float = 0.0
    gnss_noise_m: float = 0.0

    def __post_init__(self):
        for name in ("viewpoint_px", "brightness_gain", "occlusion_rate", "gnss_noise_m"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


ORIGIN = GnssFix(30.2636, 120.1230)


def _smooth_noise(rng, shape, cell, channels=1):
    h, w = shape
    coarse = rng.random((h // cell + 2, w // cell + 2, channels)).astype(np.float32)
    up = cv2.resize(coarse, (w + 2 * cell, h + 2 * cell), interpolation=cv2.INTER_CUBIC)
    up = up.reshape(h + 2 * cell, w + 2 * cell, channels)
    return up[cell:cell + h, cell:cell + w]


def _render_world(rng, height, width):
    color = (
        0.45 * _smooth_noise(rng, (height, width), 48, 3)
        + 0.35 * _smooth_noise(rng, (height, width), 12, 3)
        + 0.20 * _smooth_noise(rng, (height, width), 4, 3)
    )
    color = np.clip(color * 255.0, 0, 255).astype(np.uint8)
    for _ in range(max(8, width // 18)):
        x, y = int(rng.integers(0, width)), int(rng.integers(0, height))
        col = tuple(int(c) for c in rng.integers(0, 256, 3))
        if rng.random() < 0.5:
            w2, h2 = int(rng.integers(6, 40)), int(rng.integers(6, 60))
            cv2.rectangle(color, (x, y), (x + w2, y + h2), col, -1)
        else:
            cv2.circle(color, (x, y), int(rng.integers(4, 24)), col, -1)
    depth = DEPTH_MIN_MM + (DEPTH_MAX_MM - DEPTH_MIN_MM) * (
        0.7 * _smooth_noise(rng, (height, width), 40)[..., 0]
        + 0.3 * _smooth_noise(rng, (height, width), 10)[..., 0]
    )
    depth = np.clip(depth, 0, 65535).astype(np.uint16)
    mix = color.astype(np.float32) @ np.array([0.2, 0.5, 0.3], np.float32)
    infrared = 0.7 * mix + 0.3 * 255.0 * _smooth_noise(rng, (height, width), 8)[..., 0]
    infrared = np.clip(infrared, 0, 255).astype(np.uint8)
    return color, depth, infrared


def generate_synthetic_pair(
    seed: int,
    length: int,
    perturbation: Perturbation = Perturbation(),
    size: tuple[int, int] = (240, 320),
    step_px: int = 24,
    step_m: float = 1.5,
) -> tuple[Sequence, Sequence, GroundTruth]:
    """Render a database/query pair that walks the same synthetic street.

    The database is the clean rendering; the query sees shifted crops,
    scaled brightness, random occluders and noisy GNSS. Ground truth is the
    identity. Output depends only on the arguments.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    p = perturbation
    height, width = size
    margin = int(math.ceil(abs(p.viewpoint_px))) + 4
    world_w = width + (length - 1) * step_px + 2 * margin
    rng = np.random.default_rng(seed)
    color_w, depth_w, ir_w = _render_world(rng, height, world_w)

    bearing = rng.uniform(0, 2 * math.pi)
    fixes = []
    east = north = 0.0
    for _ in range(length):
        fixes.append(offset_fix(ORIGIN, east, north))
        bearing += rng.normal(0.0, 0.05)
        east += step_m * math.sin(bearing)
        north += step_m * math.cos(bearing)

    qrng = np.random.default_rng([seed, 1])
    db_frames, q_frames = [], []
    for i in range(length):
        x0 = margin + i * step_px
        sl = np.s_[:, x0:x0 + width]
        db_frames.append(_make_frame(i, color_w[sl], depth_w[sl], ir_w[sl], fixes[i]))

        shift = int(qrng.integers(-int(abs(p.viewpoint_px)), int(abs(p.viewpoint_px)) + 1))
        sq = np.s_[:, x0 + shift:x0 + shift + width]
        color, depth, ir = color_w[sq].copy(), depth_w[sq].copy(), ir_w[sq].copy()
        if p.brightness_gain != 0.0:
            gain = max(0.0, 1.0 + p.brightness_gain)
            color = np.clip(np.rint(color * gain), 0, 255).astype(np.uint8)
            ir = np.clip(np.rint(ir * gain), 0, 255).astype(np.uint8)
        if qrng.random() < p.occlusion_rate:
            ow, oh = width // 4, height // 2
            ox, oy = int(qrng.integers(0, width - ow)), int(qrng.integers(0, height - oh))
            shade = qrng.integers(0, 256, 3)
            color[oy:oy + oh, ox:ox + ow] = shade
            ir[oy:oy + oh, ox:ox + ow] = int(shade.mean())
            depth[oy:oy + oh, ox:ox + ow] = 800
        fix = fixes[i]
        if p.gnss_noise_m > 0:
            # half-normal radius clipped at 3 sigma, uniform direction
            r = min(abs(qrng.normal(0.0, p.gnss_noise_m)), 3.0 * p.gnss_noise_m)
            theta = qrng.uniform(0, 2 * math.pi)
            fix = offset_fix(fix, r * math.sin(theta), r * math.cos(theta))
        q_frames.append(_make_frame(i, color, depth, ir, fix))

    gt = GroundTruth({i: i for i in range(length)})
    return Sequence(tuple(q_frames), Role.QUERY), Sequence(tuple(db_frames), Role.DATABASE), gt


def _make_frame(index, color, depth_raw, infrared, fix) -> MultimodalFrame:
    color = np.ascontiguousarray(color)
    depth_raw = np.ascontiguousarray(depth_raw)
    images = {
        Modality.COLOR: color,
        Modality.DEPTH: normalize_depth(depth_raw),
        Modality.INFRARED: np.ascontiguousarray(infrared),
    }
    return MultimodalFrame(index, images, fix, depth_raw)
