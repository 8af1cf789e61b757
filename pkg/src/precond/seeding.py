"""Sub-seed derivation.

Every command takes a single ``--seed``.  Components draw their own streams
from ``derive_seed(seed, label, ...)``: the first 8 bytes of
``sha256("<seed>/<label>/...")`` read as a big-endian integer.  Paired runs
that share a label therefore share randomness.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed: int, *labels) -> int:
    text = "/".join([str(seed), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def rng(seed: int, *labels) -> random.Random:
    return random.Random(derive_seed(seed, *labels))
