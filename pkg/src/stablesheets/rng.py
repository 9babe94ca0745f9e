"""Named, counter-based random streams derived from one master seed.

``stream(master, label, index)`` feeds ``SeedSequence(master, spawn_key=
(crc32(label), index))`` into a Philox generator, so replicate ``i`` of
experiment ``label`` gets the same numbers no matter how many other
replicates run or in which order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "label_key"]


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8")) & 0xFFFFFFFF


def stream(master: int, label: str = "", index: int = 0) -> np.random.Generator:
    if master < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    seq = np.random.SeedSequence(int(master), spawn_key=(label_key(label), int(index)))
    return np.random.Generator(np.random.Philox(seq))
