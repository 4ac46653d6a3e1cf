"""Slow, independent reference implementations used as test oracles.

Each oracle is written for clarity rather than speed and avoids sharing code
with the package under test.
"""
from __future__ import annotations

import math
from decimal import ROUND_CEILING, ROUND_FLOOR, Decimal
from itertools import combinations

import numpy as np

R_EARTH = 6_371_000.0


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R_EARTH * math.asin(math.sqrt(h))


# --------------------------------------------------------------------------
# Cone search
# --------------------------------------------------------------------------


def _dec(x) -> Decimal:
    return Decimal(repr(float(x)))


def cone_bounds(k: int, v_min, v_max, rounding: str = "outer"):
    """Column offsets for past row k, computed in exact decimal arithmetic."""
    slow, fast = k * _dec(v_min), k * _dec(v_max)
    if rounding == "outer":
        return int(slow.to_integral_value(ROUND_FLOOR)), int(fast.to_integral_value(ROUND_CEILING))
    return int(slow.to_integral_value(ROUND_CEILING)), int(fast.to_integral_value(ROUND_FLOOR))


def brute_cone_cells(i, j, n_q, v_min, v_max, l, rounding="outer"):
    cells = []
    for k in range(min(n_q, i + 1)):
        lo, hi = cone_bounds(k, v_min, v_max, rounding)
        for c in range(j - hi, j - lo + 1):
            if 0 <= c < l:
                cells.append((i - k, c))
    return cells


def brute_row_minima(values, excluded):
    n, l = len(values), len(values[0])
    out = []
    for r in range(n):
        best, best_c = None, -1
        for c in range(l):
            if excluded[r][c]:
                continue
            if best is None or values[r][c] < best:
                best, best_c = values[r][c], c
        out.append(best_c)
    return out


def brute_score_matrix(values, excluded, n_q, v_min, v_max, strict=False, rounding="outer"):
    """Enumerate every cone cell of every anchor explicitly."""
    values = np.asarray(values).tolist()
    excluded = np.asarray(excluded).tolist()
    n, l = len(values), len(values[0])
    minima = brute_row_minima(values, excluded)
    out = np.zeros((n, l))
    for i in range(n):
        for j in range(l):
            if excluded[i][j]:
                continue
            cells = brute_cone_cells(i, j, n_q, v_min, v_max, l, rounding)
            hits = sum(1 for r, c in cells if minima[r] == c)
            rows = len({r for r, _ in cells})
            out[i, j] = hits / (n_q if strict else rows)
    return out


# --------------------------------------------------------------------------
# Descriptors
# --------------------------------------------------------------------------


def illumination_invariant(bgr, alpha):
    x = (bgr.astype(np.float64) + 1.0) / 256.0
    b, g, r = x[..., 0], x[..., 1], x[..., 2]
    return 0.5 + np.log(g) - alpha * np.log(b) - (1 - alpha) * np.log(r)


def ldb_bits(img64: np.ndarray, levels=(2, 3, 4, 5)) -> np.ndarray:
    """LDB on an already resized float image, one cell and one pair at a time."""
    img = img64.astype(np.float64)
    dy, dx = np.gradient(img)
    h, w = img.shape
    bits = []
    for g in sorted(levels):
        ys = [round(h * t / g) for t in range(g + 1)]
        xs = [round(w * t / g) for t in range(g + 1)]
        cells = []
        for r in range(g):
            for c in range(g):
                sl = (slice(ys[r], ys[r + 1]), slice(xs[c], xs[c + 1]))
                cells.append((img[sl].mean(), dx[sl].mean(), dy[sl].mean()))
        for a, b in combinations(range(g * g), 2):
            for t in range(3):
                bits.append(cells[a][t] > cells[b][t])
    return np.array(bits, bool)


def ldb_length_by_enumeration(levels) -> int:
    return sum(3 * len(list(combinations(range(g * g), 2))) for g in levels)


def gist_reference(img128: np.ndarray, scales=4, orientations=8, grid=4, fc=4.0, boundary=32) -> np.ndarray:
    """Double-precision GIST on a prepared (min-max scaled, 128x128) float image."""
    # prefilter
    w = 5
    s1 = fc / np.sqrt(np.log(2))
    x = np.log(img128 + 1.0)
    x = np.pad(x, w, mode="symmetric")
    n = x.shape[0]
    fx, fy = np.meshgrid(np.arange(-n / 2, n / 2), np.arange(-n / 2, n / 2))
    gf = np.fft.fftshift(np.exp(-(fx ** 2 + fy ** 2) / s1 ** 2))
    out = x - np.real(np.fft.ifft2(np.fft.fft2(x) * gf))
    local = np.sqrt(np.abs(np.fft.ifft2(np.fft.fft2(out ** 2) * gf)))
    x = (out / (0.2 + local))[w:n - w, w:n - w]
    # gabor bank
    size = x.shape[0]
    x = np.pad(x, boundary, mode="symmetric")
    n = x.shape[0]
    fx, fy = np.meshgrid(np.arange(-n // 2, n // 2), np.arange(-n // 2, n // 2))
    fr = np.fft.fftshift(np.sqrt(fx ** 2.0 + fy ** 2.0))
    th = np.fft.fftshift(np.angle(fx + 1j * fy))
    spectrum = np.fft.fft2(x)
    feats = []
    for s in range(scales):
        f0 = 0.3 / (1.85 ** s)
        width = 16.0 * orientations ** 2 / 32.0 ** 2
        for o in range(orientations):
            tr = th + np.pi / orientations * o
            tr = tr + 2 * np.pi * (tr < -np.pi) - 2 * np.pi * (tr > np.pi)
            h = np.exp(-10 * 0.35 * (fr / n / f0 - 1) ** 2 - 2 * width * np.pi * tr ** 2)
            resp = np.abs(np.fft.ifft2(spectrum * h))[boundary:boundary + size, boundary:boundary + size]
            step = size // grid
            for r in range(grid):
                for c in range(grid):
                    feats.append(resp[r * step:(r + 1) * step, c * step:(c + 1) * step].mean())
    return np.array(feats).reshape(scales * orientations, grid, grid).reshape(-1)


# --------------------------------------------------------------------------
# Vocabulary
# --------------------------------------------------------------------------


def popcount_distance(a: np.ndarray, b: np.ndarray) -> int:
    return int(sum(bin(int(x) ^ int(y)).count("1") for x, y in zip(a, b)))


def descend(vocab, feature: np.ndarray) -> int:
    """Greedy tree descent one node at a time; ties go to the earliest child."""
    children = {}
    for node, parent in enumerate(vocab.parents):
        if parent >= 0:
            children.setdefault(int(parent), []).append(node)
    node = 0
    while node in children:
        best, best_d = None, None
        for child in children[node]:
            d = popcount_distance(vocab.medoids[child], feature)
            if best_d is None or d < best_d:
                best, best_d = child, d
        node = best
    return int(vocab.words[node])


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


def hand_metrics(tp, fp, fn):
    from fractions import Fraction

    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f = 2 * p * r / (p + r) if p + r else Fraction(0)
    return float(p), float(r), float(f)
