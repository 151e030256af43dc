"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox counter-based
generator whose 128-bit key encodes (stream seed, substream index).  Streams
with distinct keys are statistically independent, so work can be sharded
across any number of workers without changing a single drawn number.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream_seed(seed: int, *labels: object) -> int:
    """Derive a stable 64-bit seed for a named substream.

    Uses SHA-256 over the canonical text of (seed, labels) so the fan-out is
    reproducible across platforms and Python versions (unlike ``hash``).
    """
    text = repr((int(seed), tuple(str(l) for l in labels)))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def philox_key(stream_seed: int, counter_index: int) -> int:
    """Pack (stream seed, counter index) into a single 128-bit Philox key."""
    return ((int(stream_seed) & _MASK64) << 64) | (int(counter_index) & _MASK64)


def stream(stream_seed: int, counter_index: int = 0) -> np.random.Generator:
    """Generator for substream ``counter_index`` of stream ``stream_seed``.

    Deterministic in its two arguments; independent across distinct pairs.
    """
    return np.random.Generator(np.random.Philox(key=philox_key(stream_seed, counter_index)))


def normals(stream_seed: int, counter_index: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal block for one substream (float64, C order)."""
    return stream(stream_seed, counter_index).standard_normal(shape)
