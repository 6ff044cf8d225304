"""Counter-based random streams with fixed path blocks.

Paths are grouped into blocks of ``block_size`` consecutive path ids.  Each
block owns a Philox generator keyed by (master_seed, stream, block); the
Philox counter advances with the time step.  Every step draws a full block of
variates and a path keeps its column, so a path's noise depends only on
(master_seed, stream, path_id) and never on how many paths or workers a run
uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes | str) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


@dataclass(frozen=True)
class RngPolicy:
    master_seed: int
    stream: int = 0
    block_size: int = 4096

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    def with_stream(self, tag):
        """Independent policy for a named experiment or sub-task."""
        s = tag if isinstance(tag, int) else fnv1a_64(tag)
        return RngPolicy(self.master_seed, s & MASK64, self.block_size)

    def block_generator(self, block: int) -> np.random.Generator:
        ss = np.random.SeedSequence([self.master_seed, self.stream, int(block)])
        return np.random.Generator(np.random.Philox(ss))

    def blocks(self, n_paths, first_path=0):
        """(block index, first path id, number of paths) covering the requested ids."""
        out = []
        pid = first_path
        end = first_path + n_paths
        while pid < end:
            block = pid // self.block_size
            stop = min(end, (block + 1) * self.block_size)
            out.append((block, pid, stop - pid))
            pid = stop
        return out
