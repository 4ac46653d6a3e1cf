from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..dataset import Modality


class DescriptorKind(enum.Enum):
    GIST = "gist"
    LDB = "ldb"
    BOW = "bow"
    CNN = "cnn"

    @classmethod
    def parse(cls, text: str) -> "DescriptorKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown descriptor kind {text!r}") from None


Channel = tuple[DescriptorKind, Modality]

# Canonical order used for genomes and reports.
VALID_CHANNELS: tuple[Channel, ...] = (
    (DescriptorKind.BOW, Modality.COLOR),
    (DescriptorKind.BOW, Modality.INFRARED),
    (DescriptorKind.GIST, Modality.COLOR),
    (DescriptorKind.GIST, Modality.DEPTH),
    (DescriptorKind.GIST, Modality.INFRARED),
    (DescriptorKind.LDB, Modality.COLOR),
    (DescriptorKind.LDB, Modality.DEPTH),
    (DescriptorKind.LDB, Modality.INFRARED),
    (DescriptorKind.CNN, Modality.COLOR),
)


def channel_name(channel: Channel) -> str:
    kind, modality = channel
    return f"{kind.value}.{modality.dirname}"


def parse_channel(text: str) -> Channel:
    kind, _, modality = text.strip().partition(".")
    return DescriptorKind.parse(kind), Modality.parse(modality)


@dataclass(frozen=True)
class DescriptorVector:
    """One descriptor payload: a boolean bit array (LDB) or a float vector."""

    kind: DescriptorKind
    modality: Modality
    payload: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        if self.payload.ndim != 1 or self.payload.size == 0:
            raise ValueError("descriptor payload must be a non-empty 1-D array")
        if self.is_binary:
            if self.payload.dtype != np.bool_:
                raise TypeError("binary descriptors are stored as bool arrays")
        elif not np.all(np.isfinite(self.payload)):
            raise ValueError(f"{channel_name(self.channel)} payload has non-finite values")

    @property
    def channel(self) -> Channel:
        return (self.kind, self.modality)

    @property
    def is_binary(self) -> bool:
        return self.kind is DescriptorKind.LDB

    @property
    def dimension(self) -> int:
        return int(self.payload.size)


@dataclass(frozen=True)
class DescriptorSet:
    entries: Mapping[Channel, DescriptorVector] = field(default_factory=dict)

    def __getitem__(self, channel: Channel) -> DescriptorVector:
        return self.entries[channel]

    def __contains__(self, channel: Channel) -> bool:
        return channel in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def channels(self) -> list[Channel]:
        return [c for c in VALID_CHANNELS if c in self.entries]
