"""GIST scene descriptor: contrast normalisation, Gabor bank, block-averaged energy.

Frequency-domain Gabor construction follows the LabelMe ``LMgist`` recipe.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import cv2
import numpy as np

from ..errors import EmptyImage


@dataclass(frozen=True)
class GistParams:
    image_size: int = 128
    scales: int = 4
    orientations: int = 8
    grid: int = 4
    fc_prefilt: float = 4.0
    boundary: int = 32

    @property
    def dimension(self) -> int:
        return self.scales * self.orientations * self.grid * self.grid


@lru_cache(maxsize=8)
def gabor_bank(n: int, scales: int, orientations: int) -> np.ndarray:
    """Frequency-domain transfer functions, shape (scales*orientations, n, n, 2)."""
    fx, fy = np.meshgrid(np.arange(-n // 2, n // 2), np.arange(-n // 2, n // 2))
    fr = np.fft.fftshift(np.sqrt(fx ** 2.0 + fy ** 2.0))
    theta = np.fft.fftshift(np.angle(fx + 1j * fy))
    bank = np.empty((scales * orientations, n, n))
    k = 0
    for s in range(scales):
        f0 = 0.3 / (1.85 ** s)
        width = 16.0 * orientations ** 2 / 32.0 ** 2
        for o in range(orientations):
            tr = theta + np.pi / orientations * o
            tr = tr + 2 * np.pi * (tr < -np.pi) - 2 * np.pi * (tr > np.pi)
            bank[k] = np.exp(-10 * 0.35 * (fr / n / f0 - 1) ** 2 - 2 * width * np.pi * tr ** 2)
            k += 1
    # duplicated over a trailing (re, im) axis to multiply OpenCV's two-channel spectra directly
    bank = np.repeat(bank.astype(np.float32)[..., None], 2, axis=-1)
    bank.setflags(write=False)
    return bank


@lru_cache(maxsize=8)
def _prefilter_kernel(n: int, fc: float) -> np.ndarray:
    s1 = fc / np.sqrt(np.log(2))
    fx, fy = np.meshgrid(np.arange(-n / 2, n / 2), np.arange(-n / 2, n / 2))
    gf = np.fft.fftshift(np.exp(-(fx ** 2 + fy ** 2) / s1 ** 2))
    gf = np.repeat(gf[..., None], 2, axis=-1)
    gf.setflags(write=False)
    return gf


def _lowpass(img: np.ndarray, gf: np.ndarray) -> np.ndarray:
    spectrum = cv2.dft(img, flags=cv2.DFT_COMPLEX_OUTPUT)
    return cv2.dft(spectrum * gf, flags=cv2.DFT_INVERSE | cv2.DFT_SCALE | cv2.DFT_COMPLEX_OUTPUT)


def _prefilter(img: np.ndarray, fc: float) -> np.ndarray:
    """Whitening plus local contrast normalisation (square input)."""
    w = 5
    img = np.log(img + 1.0)
    img = np.pad(img, w, mode="symmetric")
    n = img.shape[0]
    gf = _prefilter_kernel(n, fc)
    out = img - _lowpass(img, gf)[:, :, 0]
    low = _lowpass(out ** 2, gf)
    local_std = np.sqrt(cv2.magnitude(low[:, :, 0], low[:, :, 1]))
    out = out / (0.2 + local_std)
    return out[w:n - w, w:n - w]


def _prepare(image: np.ndarray, size: int) -> np.ndarray:
    if image.size == 0:
        raise EmptyImage("GIST needs a non-empty image")
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.dtype != np.uint8:
        image = image.astype(np.float32)
    # uint8 resizing keeps a flat image exactly flat
    img = cv2.resize(image, (size, size), interpolation=cv2.INTER_AREA).astype(np.float64)
    if image.min() == image.max():
        return np.zeros_like(img)
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img *= 255.0 / peak
    return img


def extract_gist(image: np.ndarray, params: GistParams = GistParams()) -> np.ndarray:
    """512-dim (default) GIST vector of a grayscale (or BGR) image."""
    size, b, g = params.image_size, params.boundary, params.grid
    if size % 2:
        raise ValueError("image_size must be even")
    img = _prefilter(_prepare(image, size), params.fc_prefilt)
    padded = np.pad(img, b, mode="symmetric").astype(np.float32)
    bank = gabor_bank(padded.shape[0], params.scales, params.orientations)
    # OpenCV's DFT is several times faster than numpy/scipy for this batch of 2-D transforms
    spectrum = cv2.dft(padded, flags=cv2.DFT_COMPLEX_OUTPUT)
    cells = np.empty((bank.shape[0], g, g))
    for k in range(bank.shape[0]):
        out = cv2.dft(cv2.multiply(spectrum, bank[k]), flags=cv2.DFT_INVERSE | cv2.DFT_SCALE | cv2.DFT_COMPLEX_OUTPUT)
        crop = out[b:b + size, b:b + size]
        # area interpolation down to g x g is exactly the per-cell mean (area-weighted if size % g)
        cells[k] = cv2.resize(cv2.magnitude(crop[:, :, 0], crop[:, :, 1]), (g, g), interpolation=cv2.INTER_AREA)
    return cells.reshape(-1)
