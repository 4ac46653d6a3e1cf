"""Whole-image LDB (local difference binary) code without bit selection."""
from __future__ import annotations

from math import comb

import cv2
import numpy as np

from ..errors import EmptyImage

DEFAULT_LEVELS = (2, 3, 4, 5)
LDB_SIZE = 64


def ldb_length(levels=DEFAULT_LEVELS) -> int:
    return 3 * sum(comb(g * g, 2) for g in levels)


def _cell_stats(planes: np.ndarray, g: int) -> np.ndarray:
    """(g*g, 3) array of mean intensity, mean d/dx, mean d/dy per cell.

    ``planes`` stacks intensity, d/dx and d/dy as a (3, H, W) array.
    """
    h, w = planes.shape[1:]
    rows = np.linspace(0, h, g + 1).round().astype(int)
    cols = np.linspace(0, w, g + 1).round().astype(int)
    sums = np.add.reduceat(np.add.reduceat(planes, rows[:-1], axis=1), cols[:-1], axis=2)
    area = np.outer(np.diff(rows), np.diff(cols))
    return (sums / area).reshape(3, g * g).T


_PAIRS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(g: int):
    if g not in _PAIRS:
        # row-major upper triangle: the same (i, j) order as itertools.combinations
        _PAIRS[g] = np.triu_indices(g * g, 1)
    return _PAIRS[g]


def extract_ldb(image: np.ndarray, levels=DEFAULT_LEVELS) -> np.ndarray:
    """Boolean LDB code of a grayscale raster.

    For every level ``g`` (ascending) and every unordered cell pair ``i < j``
    three bits are emitted: intensity, x-gradient and y-gradient of cell ``i``
    strictly greater than those of cell ``j``.
    """
    if image.size == 0:
        raise EmptyImage("LDB needs a non-empty image")
    if not levels or any(int(g) != g or not 1 <= g <= LDB_SIZE for g in levels):
        raise ValueError(f"LDB levels must be integers in [1, {LDB_SIZE}], got {levels}")
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.dtype != np.uint8:
        image = image.astype(np.float32)
    # resizing in the input dtype keeps flat regions exactly flat
    img = cv2.resize(image, (LDB_SIZE, LDB_SIZE), interpolation=cv2.INTER_AREA).astype(np.float64)
    dy, dx = np.gradient(img)
    planes = np.stack([img, dx, dy])
    bits = []
    for g in sorted(levels):
        stats = _cell_stats(planes, g)
        i, j = _pairs(g)
        bits.append((stats[i] > stats[j]).reshape(-1))
    return np.concatenate(bits)
