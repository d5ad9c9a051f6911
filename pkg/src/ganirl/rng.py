"""Counter-based, splittable random streams.

Every draw in the package comes from ``stream(seed, *keys)``. A stream is a
Philox generator keyed on the seed plus a tuple of labels, so the draws for
(say) iteration 17's generator batch do not depend on what was drawn before.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_word(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"stream keys must be non-negative, got {key}")
    return int(key)


def stream(seed: int, *keys: int | str) -> np.random.Generator:
    entropy = [_key_word(seed)] + [_key_word(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
