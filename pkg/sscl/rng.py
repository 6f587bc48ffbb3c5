"""Deterministic, counter-based random streams keyed by tuples of integers.

Every random draw in the package comes from a stream identified by the run
seed plus a key such as `("view", epoch, step, sample, view)`. Streams are
built on the Philox counter-based bit generator, so a stream's draws depend
only on its key and never on how many other streams were created before it
or on which thread asks for it.
"""

import zlib
from typing import Tuple, Union

import numpy as np

KeyPart = Union[int, str]


def _key_word(part: KeyPart) -> int:
    if isinstance(part, str):
        # stable across interpreter runs, unlike hash()
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"Stream key parts must be non-negative, got {part}")
    return int(part)


class KeyedRandom:
    """Factory of keyed random streams.

    Args:
        seed: The run seed (u64).
        prefix: Key parts shared by every stream of this factory.
    """

    def __init__(self, seed: int, prefix: Tuple[KeyPart, ...] = ()):
        """Create a factory for the streams under `prefix`."""
        self.seed = int(seed)
        self.prefix = tuple(prefix)

    def __repr__(self) -> str:  # noqa: D105
        return f"KeyedRandom(seed={self.seed}, prefix={self.prefix!r})"

    def child(self, *key: KeyPart) -> "KeyedRandom":
        """A factory whose streams are all scoped below `key`."""
        return KeyedRandom(self.seed, self.prefix + tuple(key))

    def stream(self, *key: KeyPart) -> np.random.Generator:
        """The generator for `prefix + key`; equal keys give identical draws."""
        spawn_key = tuple(_key_word(part) for part in self.prefix + tuple(key))
        sequence = np.random.SeedSequence(self.seed, spawn_key=spawn_key)
        return np.random.Generator(np.random.Philox(sequence))
