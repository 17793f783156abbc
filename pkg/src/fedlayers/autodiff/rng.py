from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class RngStream:
    """Named, seeded PCG64 stream.

    Streams are derived from ``(seed, *names)`` through ``SeedSequence``
    spawn keys, so a stream's values never depend on how many draws other
    streams have made.
    """

    def __init__(self, seed: int, *names: str):
        self.seed = int(seed)
        self.names = tuple(names)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(_key(n) for n in self.names))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, name: str) -> np.random.Generator:
        return RngStream(self.seed, *self.names, name).generator

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, names={self.names})"
