"""Log-chromaticity illumination-invariant grayscale conversion."""
import numpy as np

from ..errors import WrongChannelCount

DEFAULT_ALPHA = 0.48


def illumination_invariant_log(image: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Per-pixel invariant ``0.5 + log G' - alpha log B' - (1 - alpha) log R'`` (float).

    ``image`` is 8-bit BGR; ``X' = (X + 1) / 256``.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise WrongChannelCount(f"expected a 3-channel BGR image, got shape {image.shape}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    x = np.log((image.astype(np.float64) + 1.0) / 256.0)
    b, g, r = x[..., 0], x[..., 1], x[..., 2]
    return 0.5 + g - alpha * b - (1.0 - alpha) * r


def illumination_invariant_transform(image: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Invariant image min-max rescaled to an 8-bit raster.

    A flat invariant image (e.g. any gray input) maps to all zeros.
    """
    inv = illumination_invariant_log(image, alpha)
    lo, hi = inv.min(), inv.max()
    if hi - lo <= 1e-12:
        return np.zeros(inv.shape, np.uint8)
    return np.rint((inv - lo) * (255.0 / (hi - lo))).astype(np.uint8)
