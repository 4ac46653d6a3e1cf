"""Multimodal sequence-based place recognition.

Descriptors (GIST, LDB, binary bag-of-words and external CNN vectors) are
computed per image modality, matched frame-to-frame under a GNSS gate,
aggregated along a velocity cone over recent query frames and fused with
per-channel coefficients.
"""

__version__ = "0.1.0"
