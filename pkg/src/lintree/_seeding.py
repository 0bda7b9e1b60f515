import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Hash ``(seed, *keys)`` into an independent 63-bit seed.

    Sub-seeds depend only on their keys, never on scheduling order, so
    parallel and sequential runs draw identical streams.
    """
    words = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)]).generate_state(
        2, dtype=np.uint32)
    return int((int(words[0]) << 31) ^ int(words[1])) & 0x7FFFFFFFFFFFFFFF
