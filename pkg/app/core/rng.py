import zlib

import numpy as np

from dataclasses import dataclass


def _encode(tag: int | str) -> int:
    # Strings are hashed with CRC-32 so stream keys do not depend on PYTHONHASHSEED.
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    if tag < 0:
        raise ValueError(f"Stream tags must be non-negative, got {tag}")
    return int(tag)


@dataclass(frozen=True)
class Rng:
    """
    Splittable, counter-based random stream.

    An Rng is a seed plus a derivation path (purpose tag, epoch, bag id, ...).
    The draws of a stream depend only on that pair, never on how many other
    streams were consumed before, so per-(epoch, bag) streams are independent
    of iteration order.

    Attributes:
        seed (int): Run seed, 64-bit unsigned.
        path (tuple): Derivation path of string or non-negative integer tags.
    """

    seed: int
    path: tuple[int | str, ...] = ()

    def derive(self, *tags: int | str) -> "Rng":
        """
        Return the child stream keyed by the given tags.

        Args:
            *tags: Purpose tag, epoch index, bag id, patch index, ...

        Returns:
            Rng: A new stream; the parent is left untouched.
        """
        return Rng(self.seed, self.path + tuple(tags))

    def generator(self) -> np.random.Generator:
        """
        Build a fresh numpy Generator positioned at the start of this stream.

        Returns:
            np.random.Generator: Philox-backed generator.
        """
        sequence = np.random.SeedSequence(
            entropy=self.seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=tuple(_encode(tag) for tag in self.path),
        )
        return np.random.Generator(np.random.Philox(sequence))
