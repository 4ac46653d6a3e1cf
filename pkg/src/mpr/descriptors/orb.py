"""Oriented FAST keypoints with steered BRIEF (ORB) descriptors via OpenCV."""
from __future__ import annotations

import cv2
import numpy as np

_EDGE = 31  # matches OpenCV's default ORB patch size
_POOL = 2000  # detector candidates; fixed so smaller budgets keep a prefix of larger ones


def detect_and_describe(image: np.ndarray, max_keypoints: int = 500) -> np.ndarray:
    """Packed 256-bit ORB descriptors, shape (k, 32) uint8, strongest first.

    The image is reflect-padded by the ORB edge margin so keypoints anywhere
    in the original frame are eligible; detections falling in the padding are
    dropped.
    """
    if max_keypoints < 1:
        raise ValueError("max_keypoints must be >= 1")
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.dtype != np.uint8:
        image = np.clip(image, 0, 255).astype(np.uint8)
    h, w = image.shape
    padded = cv2.copyMakeBorder(image, _EDGE, _EDGE, _EDGE, _EDGE, cv2.BORDER_REFLECT_101)
    orb = cv2.ORB_create(nfeatures=max(_POOL, 4 * max_keypoints), edgeThreshold=_EDGE, patchSize=_EDGE)
    kps = orb.detect(padded, None)
    if not kps:
        return np.zeros((0, 32), np.uint8)
    pts = cv2.KeyPoint_convert(kps).astype(np.float64) - _EDGE
    x, y = pts[:, 0], pts[:, 1]
    response = np.array([kp.response for kp in kps])
    octave = np.array([kp.octave for kp in kps])
    inside = np.flatnonzero((x >= 0) & (x < w) & (y >= 0) & (y < h))
    if not inside.size:
        return np.zeros((0, 32), np.uint8)
    # strongest first; ties broken by octave, row, column, then detection order
    order = inside[np.lexsort((inside, x[inside], y[inside], octave[inside], -response[inside]))]
    selected = []
    for rank, n in enumerate(order[:max_keypoints]):
        kp = kps[n]
        kp.class_id = rank
        selected.append(kp)
    # describing only the survivors is cheaper; OpenCV may regroup them by octave
    described, des = orb.compute(padded, selected)
    order = np.argsort([kp.class_id for kp in described], kind="stable")
    return np.ascontiguousarray(des[order])
