"""Reproducible per-replica random streams.

Every path owns a counter-based Philox stream keyed by (seed, batch tag,
replica index), so batches are deterministic regardless of worker count or
completion order, and disjoint seeds or tags give independent streams.

Draws are realized in fixed chunks per refill round: a block of standard
exponentials for inter-arrival times, a block of standard exponentials for
jump marks, then (for two-sided models) a block of uniforms for jump signs.
Event k consumes element k of each block.  numpy fills arrays with the same
variate sequence as repeated scalar calls, so the scalar and vectorized
engines see identical streams.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "JUMP_CHUNK",
    "BM_CHUNK",
    "jump_chunk_size",
    "stream_generator",
    "draw_jump_chunks",
    "JumpDraws",
]

JUMP_CHUNK = 64
JUMP_CHUNK_MAX = 4096
BM_CHUNK = 1024


def jump_chunk_size(round_idx: int) -> int:
    """Draw-block size for refill round r: grows 4x per round, capped.

    Part of the stream contract: block boundaries are fixed by the schedule,
    never by path state, so scalar and vectorized engines stay aligned.
    """
    return min(JUMP_CHUNK << (2 * round_idx), JUMP_CHUNK_MAX)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """SplitMix64 finalizer; decorrelates nearby seed/tag values."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def stream_generator(seed: int, batch_tag: int, replica: int) -> np.random.Generator:
    """Philox generator for one replica of one batch."""
    word0 = _splitmix64((seed & _MASK64) + _GOLDEN * (batch_tag & _MASK64))
    key = np.array([word0, replica & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_jump_chunks(gen: np.random.Generator, with_signs: bool, size: int = JUMP_CHUNK):
    """One refill round of ``size`` draws: (interarrivals, marks, signs or None)."""
    a = gen.standard_exponential(size)
    m = gen.standard_exponential(size)
    s = gen.random(size) if with_signs else None
    return a, m, s


class JumpDraws:
    """Scalar-engine view of one replica's stream, extended on demand."""

    def __init__(self, gen: np.random.Generator, with_signs: bool):
        self._gen = gen
        self._with_signs = with_signs
        self._round = 0
        self._inter = np.empty(0)
        self._marks = np.empty(0)
        self._signs = np.empty(0)

    def _ensure(self, k: int) -> None:
        while k >= self._inter.size:
            a, m, s = draw_jump_chunks(
                self._gen, self._with_signs, jump_chunk_size(self._round)
            )
            self._round += 1
            self._inter = np.concatenate([self._inter, a])
            self._marks = np.concatenate([self._marks, m])
            if self._with_signs:
                self._signs = np.concatenate([self._signs, s])

    def interarrival(self, k: int) -> float:
        self._ensure(k)
        return float(self._inter[k])

    def mark(self, k: int) -> float:
        self._ensure(k)
        return float(self._marks[k])

    def sign(self, k: int) -> float:
        self._ensure(k)
        return float(self._signs[k])
