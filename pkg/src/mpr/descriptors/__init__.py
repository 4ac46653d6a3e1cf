"""Global and local image descriptors and per-frame descriptor sets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..dataset import Modality, MultimodalFrame
from ..errors import InvalidChannel, MissingModality
from .cnn import cnn_path, ingest_external_descriptor
from .gist import GistParams, extract_gist
from .illumination import DEFAULT_ALPHA, illumination_invariant_log, illumination_invariant_transform
from .ldb import DEFAULT_LEVELS, extract_ldb, ldb_length
from .orb import detect_and_describe
from .types import (
    VALID_CHANNELS,
    Channel,
    DescriptorKind,
    DescriptorSet,
    DescriptorVector,
    channel_name,
    parse_channel,
)
from .vocabulary import Vocabulary, build_vocabulary, extract_bow

__all__ = [
    "VALID_CHANNELS", "Channel", "DescriptorKind", "DescriptorSet", "DescriptorVector",
    "ExtractionParams", "GistParams", "Vocabulary", "build_vocabulary", "channel_name",
    "check_channels", "detect_and_describe", "extract_all", "extract_bow", "extract_gist",
    "extract_ldb", "illumination_invariant_log", "illumination_invariant_transform",
    "ingest_external_descriptor", "ldb_length", "parse_channel", "training_features",
]


@dataclass(frozen=True)
class ExtractionParams:
    alpha: float = DEFAULT_ALPHA
    gist: GistParams = GistParams()
    ldb_levels: tuple[int, ...] = DEFAULT_LEVELS
    max_keypoints: int = 500


def check_channels(channels: Iterable[Channel]) -> list[Channel]:
    """Validate against the channel matrix and return them in canonical order."""
    channels = set(channels)
    bad = [c for c in channels if c not in VALID_CHANNELS]
    if bad:
        names = ", ".join(sorted(f"{k.value}.{m.dirname}" for k, m in bad))
        raise InvalidChannel(f"invalid descriptor channel(s): {names}")
    return [c for c in VALID_CHANNELS if c in channels]


def _image(frame: MultimodalFrame, modality: Modality) -> np.ndarray:
    try:
        return frame.images[modality]
    except KeyError:
        raise MissingModality(f"frame {frame.index} has no {modality.dirname} image") from None


def extract_all(
    frame: MultimodalFrame,
    channels: Iterable[Channel],
    vocab: Vocabulary | None = None,
    cnn_dir=None,
    params: ExtractionParams = ExtractionParams(),
    cnn_dim: int | None = None,
) -> DescriptorSet:
    """Compute the descriptor of every requested channel for one frame."""
    entries = {}
    for kind, modality in check_channels(channels):
        if kind is DescriptorKind.CNN:
            if cnn_dir is None:
                raise MissingModality("CNN channel enabled but no descriptor directory given")
            vec = ingest_external_descriptor(cnn_path(cnn_dir, frame.index), cnn_dim)
        elif kind is DescriptorKind.BOW:
            if vocab is None:
                raise ValueError("BoW channel enabled but no vocabulary loaded")
            feats = detect_and_describe(_image(frame, modality), params.max_keypoints)
            vec = extract_bow(feats, vocab, modality)
        elif kind is DescriptorKind.GIST:
            vec = DescriptorVector(kind, modality, extract_gist(_image(frame, modality), params.gist))
        else:
            img = _image(frame, modality)
            if modality is Modality.COLOR:
                img = illumination_invariant_transform(img, params.alpha)
            vec = DescriptorVector(kind, modality, extract_ldb(img, params.ldb_levels))
        entries[(kind, modality)] = vec
    return DescriptorSet(entries)


def training_features(frames: Iterable[MultimodalFrame], modalities=(Modality.COLOR, Modality.INFRARED),
                      max_keypoints: int = 500) -> np.ndarray:
    """Stack ORB features of the given frames, e.g. for vocabulary training."""
    chunks = [
        detect_and_describe(f.images[m], max_keypoints)
        for f in frames
        for m in modalities
        if m in f.images
    ]
    return np.concatenate(chunks) if chunks else np.zeros((0, 32), np.uint8)
