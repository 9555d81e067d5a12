"""Deterministic seeding primitives.

Two independent mechanisms live here:

* ``child_seed`` — blake2b-based derivation of 64-bit seeds for named
  streams (instances, start points, CMA means, ...).  Children depend only
  on (master seed, label, indices), never on call order, so parallel
  schedules cannot change results.

* ``state_hash`` / ``SplitMix64`` counters — the per-search-state hash that
  makes every policy decision a pure function of the current solution.  All
  tie-breaks, jumps and permutations draw from counter streams derived from
  this hash, which keeps the hot loop free of RNG object construction and
  makes revisited states reproduce their decisions exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)

# splitmix64 constants (Steele, Lea & Flood; public domain reference values)
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)

# stream tags for per-state decision randomness
TAG_OBS_TIE = np.uint64(0x6F62735F746965)   # observation rank tie-breaks
TAG_ACT_TIE = np.uint64(0x6163745F746965)   # argmax tie-breaks
TAG_JUMP = np.uint64(0x6A756D70)            # hill-climber random jumps
TAG_PERM = np.uint64(0x7065726D)            # index permutations / subsampling

_BYTE_WEIGHTS = (np.uint64(1) << (np.uint64(8) * np.arange(8, dtype=np.uint64)))


def splitmix64(x: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """SplitMix64 finalizer; vectorized over uint64 arrays (wraps mod 2^64)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _SM_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM_M1
        z = (z ^ (z >> np.uint64(27))) * _SM_M2
        z = z ^ (z >> np.uint64(31))
    return z if z.ndim else np.uint64(z)


def child_seed(master_seed: int, label: str, *indices: int) -> int:
    """Derive a 64-bit child seed from a master seed, a stream label and indices.

    Independent of derivation order: two processes asking for the same
    (master, label, indices) triple always agree.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master_seed).to_bytes(8, "little", signed=False))
    h.update(label.encode("utf-8"))
    h.update(b"\x1f")
    for idx in indices:
        h.update(int(idx).to_bytes(8, "little", signed=True))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_from(master_seed: int, label: str, *indices: int) -> np.random.Generator:
    """PCG64 generator seeded from a named child stream."""
    return np.random.Generator(np.random.PCG64(child_seed(master_seed, label, *indices)))


def pack_solution_words(bits: np.ndarray) -> np.ndarray:
    """Pack 0/1 bit rows into uint64 words along the last axis."""
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(bits, axis=-1)  # ceil(n/8) bytes
    pad = (-packed.shape[-1]) % 8
    if pad:
        packed = np.concatenate(
            [packed, np.zeros(packed.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1
        )
    shaped = packed.reshape(packed.shape[:-1] + (-1, 8)).astype(np.uint64)
    return (shaped * _BYTE_WEIGHTS).sum(axis=-1)


def _splitmix64_array(z: np.ndarray) -> np.ndarray:
    """splitmix64 on a uint64 array (array integer ops wrap silently)."""
    z = z + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


def hash_base(master_seed: int) -> np.uint64:
    """First fold stage of state_hash; precomputable per run."""
    return splitmix64(np.uint64(int(master_seed) & 0xFFFFFFFFFFFFFFFF))


def state_hash_fold(words: np.ndarray, base: np.uint64, n: int) -> np.ndarray:
    """Remaining fold stages over pre-packed words (batch rows)."""
    h = np.full(words.shape[:-1], base, dtype=np.uint64)
    for j in range(words.shape[-1]):
        h = _splitmix64_array(h ^ words[..., j])
    return _splitmix64_array(h ^ np.uint64(n))


def state_hash_from_words(words: np.ndarray, master_seed: int, n: int):
    """Hash fold over pre-packed solution words (see pack_solution_words)."""
    h = state_hash_fold(np.atleast_2d(words), hash_base(master_seed), n)
    return h if np.asarray(words).ndim > 1 else np.uint64(h[0])


def state_hash(bits: np.ndarray, master_seed: int) -> np.ndarray | np.uint64:
    """64-bit hash of solution bits mixed with the run's master seed.

    Accepts a single bit-vector or a batch (rows are solutions); returns a
    uint64 per row.  The hash depends only on the bits and the master seed,
    so revisiting a state reproduces every downstream decision.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    return state_hash_from_words(pack_solution_words(bits), master_seed, bits.shape[-1])


def bit_word_masks(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-bit (word index, xor mask) under the pack_solution_words layout.

    Lets a search loop maintain packed words incrementally: flipping bit i
    of a solution toggles ``words[..., idx[i]] ^= mask[i]``.
    """
    i = np.arange(n)
    word_idx = i // 64
    mask = np.uint64(1) << ((np.uint64(8) * ((i.astype(np.uint64) // np.uint64(8)) % np.uint64(8)))
                            + (np.uint64(7) - i.astype(np.uint64) % np.uint64(8)))
    return word_idx, mask


def stream_keys(h: np.ndarray | np.uint64, tag: np.uint64, n: int) -> np.ndarray:
    """n uint64 keys per state for a tagged decision stream.

    ``h`` may be scalar or a batch of hashes; the result appends an axis of
    length n.  Keys are iid-uniform uint64, usable directly as sort keys.
    """
    harr = np.asarray(h, dtype=np.uint64)
    scalar = harr.ndim == 0
    base = _splitmix64_array((harr.reshape(1) if scalar else harr) ^ tag)
    counters = np.arange(1, n + 1, dtype=np.uint64)
    keys = _splitmix64_array(base[..., None] + counters)
    return keys[0] if scalar else keys


def uniform_index(h: np.ndarray | np.uint64, tag: np.uint64, n: int) -> np.ndarray | np.intp:
    """One index uniform over {0..n-1} per state (modulo bias < 2**-55 for n <= 256)."""
    harr = np.asarray(h, dtype=np.uint64)
    scalar = harr.ndim == 0
    base = _splitmix64_array((harr.reshape(1) if scalar else harr) ^ tag)
    idx = (base % np.uint64(n)).astype(np.intp)
    return np.intp(idx[0]) if scalar else idx


def state_permutations(h: np.ndarray | np.uint64, n: int) -> np.ndarray:
    """Per-state uniform permutation of {0..n-1} (argsort of tagged keys)."""
    return np.argsort(stream_keys(h, TAG_PERM, n), axis=-1)
