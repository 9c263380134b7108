"""Splittable, counter-based random streams.

Every random draw in the package goes through an :class:`RngStream`. A stream
is an immutable ``(seed, stream_id)`` pair; calling :meth:`RngStream.generator`
always returns a generator positioned at the start of that stream, so the same
pair reproduces the same draws no matter which process asks for them.
Sub-streams for replicate ``b``, split ``k``, permutation ``m`` are derived
with :meth:`RngStream.child`, which hashes the keys into a new stream id.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _derive_id(parent: int, keys: tuple) -> int:
    payload = repr((parent, keys)).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        """Fresh Philox generator at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *keys: int | str) -> "RngStream":
        """Independent sub-stream addressed by ``keys`` (ints or strings)."""
        return RngStream(self.seed, _derive_id(self.stream_id, keys))


def as_stream(rng: RngStream | int) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))
