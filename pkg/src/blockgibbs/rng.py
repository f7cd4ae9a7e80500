"""Seedable random streams with substream support, plus the draw primitives.

Streams are backed by the counter-based Philox generator keyed on
(seed, substream), so any (seed, substream, counter) triple maps to the same
draw and substreams never share state.  Sequential consumers are bit
reproducible; parallel consumers should each own a substream.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """One reproducible draw stream identified by a 64-bit seed and substream id."""

    def __init__(self, seed: int, substream: int = 0):
        self.seed = int(seed)
        self.substream_id = int(substream)
        key = np.array([self.seed, self.substream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def substream(self, substream: int) -> "RngStream":
        """Independent stream under the same seed."""
        return RngStream(self.seed, substream)

    # Convenience passthroughs so samplers can hold a single object.
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, substream={self.substream_id})"


def generator_of(rng) -> np.random.Generator:
    """Accept either an RngStream or a bare numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def gamma_draw(shape, rate, rng):
    """Draw from the Gamma density with the shape-rate convention.

    Density proportional to x^(shape-1) exp(-rate x); mean shape/rate.
    Arguments broadcast, so vectors of per-level parameters draw in one call.
    Shapes below 1 are valid.
    """
    shape = np.asarray(shape, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    if not np.all(np.isfinite(shape)) or not np.all(np.isfinite(rate)):
        raise ValueError("gamma parameters must be finite")
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("gamma parameters must be positive")
    out = generator_of(rng).gamma(shape, 1.0 / rate)
    return float(out) if out.ndim == 0 else out


def normal_draw(mean, sd, rng):
    """Normal draw; sd = 0 returns the mean exactly. Arguments broadcast."""
    mean = np.asarray(mean, dtype=np.float64)
    sd = np.asarray(sd, dtype=np.float64)
    if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(sd)):
        raise ValueError("normal parameters must be finite")
    if np.any(sd < 0):
        raise ValueError("sd must be nonnegative")
    out = generator_of(rng).normal(mean, sd)
    return float(out) if out.ndim == 0 else out


def categorical_draw(weights, rng) -> int:
    """Draw a 0-based index with probability proportional to the weights."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    cum = np.cumsum(w)
    total = cum[-1]
    if total <= 0:
        raise ValueError("weights must not all be zero")
    u = generator_of(rng).random() * total
    return int(min(np.searchsorted(cum, u, side="right"), w.size - 1))
