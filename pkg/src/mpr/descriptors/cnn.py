"""Ingestion of externally computed CNN descriptors.

Files are raw little-endian float32 arrays, ``<cnn_dir>/<index:06d>.f32``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..dataset import Modality
from ..errors import DimensionMismatch, ParseError
from .types import DescriptorKind, DescriptorVector


def cnn_path(cnn_dir, index: int) -> Path:
    return Path(cnn_dir) / f"{index:06d}.f32"


def read_f32(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) == 0 or len(blob) % 4:
        raise ParseError(f"{path}: size {len(blob)} is not a positive multiple of 4")
    return np.frombuffer(blob, "<f4").astype(np.float64)


def write_f32(path, vector) -> None:
    Path(path).write_bytes(np.asarray(vector, "<f4").tobytes())


def ingest_external_descriptor(path, expected_dim: int | None = None) -> DescriptorVector:
    """Load a CNN vector and L2-normalise it."""
    vec = read_f32(path)
    if expected_dim is not None and vec.size != expected_dim:
        raise DimensionMismatch(f"{path}: {vec.size} values, expected {expected_dim}")
    if not np.all(np.isfinite(vec)):
        raise ParseError(f"{path}: non-finite values")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ParseError(f"{path}: zero vector cannot be normalised")
    return DescriptorVector(DescriptorKind.CNN, Modality.COLOR, vec / norm)
