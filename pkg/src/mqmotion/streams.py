"""Deterministic RNG streams.

All randomness in the package flows through Philox4x64-10 (a counter-based
generator) keyed by ``SeedSequence(seed, spawn_key=labels)``. Streams are
derived statelessly from (seed, label, counters), never advanced across
calls, so reproducing any draw only requires the integers that named it.

Stream labels:
    INIT     parameter initialization
    MASK     masking corruption draws
    NOISE    noise corruption draws (selection then values)
    SHUFFLE  per-epoch window order
    INTERP   gradient-penalty interpolation coefficients
    SYNTH    synthetic sequence generation
    CORRUPT  per-window corruption seed derivation
"""
from __future__ import annotations

import numpy as np

INIT = 0
MASK = 1
NOISE = 2
SHUFFLE = 3
INTERP = 4
SYNTH = 5
CORRUPT = 6


def stream(seed: int, *labels: int) -> np.random.Generator:
    """Return the Philox generator named by (seed, labels)."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in labels))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *labels: int) -> int:
    """Collapse (seed, labels) into a single 64-bit seed for child streams."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in labels))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)
