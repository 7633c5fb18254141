"""Reproducible noise streams for trajectories and probe sequences.

Each trajectory owns one stream, addressed by ``(master_seed, stream_index)``.
Streams use the counter-based Philox-4x64-10 bit generator, keyed directly
with the pair, so equal pairs reproduce the identical increment sequence and
distinct stream indices give statistically independent streams without any
coordination between workers.  Gaussian variates come from numpy's ziggurat
``standard_normal``; increments over a step of length ``dt`` are scaled by
``sqrt(dt)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: recorded in every output's metadata so results can be regenerated
NOISE_ALGORITHM = "philox-4x64-10 + numpy standard_normal (ziggurat)"

_U64 = 1 << 64


@dataclass(frozen=True)
class NoiseSource:
    """Address of one reproducible noise stream.

    ``channels`` is the number of independent Brownian channels consumed per
    time step (one per projector for trajectory noise).
    """

    master_seed: int
    stream_index: int
    channels: int

    def __post_init__(self):
        if not 0 <= self.master_seed < _U64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if not 0 <= self.stream_index < _U64:
            raise ValueError("stream_index must fit in an unsigned 64-bit integer")
        if self.channels < 1:
            raise ValueError("need at least one noise channel")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream.

        Consumers draw sequentially; the sequence does not depend on how the
        draws are chunked.
        """
        key = self.master_seed + (self.stream_index << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def normal_increments(self, n_steps: int, dt: float) -> np.ndarray:
        """One-shot array of N(0, dt) increments, shape (n_steps, channels)."""
        if n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if dt <= 0:
            raise ValueError("dt must be positive")
        return self.generator().standard_normal((n_steps, self.channels)) * np.sqrt(dt)
