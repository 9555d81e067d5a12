"""Neighborhood observation functions.

A search state is summarized by the fitness variations of the one-flip
neighborhood, ``delta[i] = f(x) - f(flip_i(x))`` (so improving flips have
negative delta under maximization).  Four views of that information are
provided, from raw values to scale-free rank encodings:

* O1 — the delta column itself, (n, 1).
* O2 — current fitness and neighbor fitness side by side, (n, 2).
* O3 — signed normalized ranks in [-1, 1], (n, 1): positive deltas get
  rank/npos (smallest positive -> 1/npos, largest -> 1), negative deltas
  get -rank/nneg (most negative -> -1, closest to zero -> -1/nneg), zeros
  map to 0.  Ties are ordered by a seeded key stream.
* O4 — O3 plus the z-score of delta (population standard deviation),
  (n, 2).

O3/O4 are exactly invariant under positive rescaling of the objective;
all four are permutation-equivariant row-wise.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .hashing import TAG_OBS_TIE, splitmix64, stream_keys


class ObservationKind(str, Enum):
    O1 = "o1"
    O2 = "o2"
    O3 = "o3"
    O4 = "o4"

    @property
    def input_dim(self) -> int:
        return 1 if self in (ObservationKind.O1, ObservationKind.O3) else 2


def _tie_keys(deltas: np.ndarray, tiebreak_seed) -> np.ndarray:
    """uint64 tie-break keys matching deltas' shape.

    Accepts a per-entry key array, a zero-argument callable producing one,
    or an integer seed (whose key row is shared across batch rows, keeping
    the resolved tie order identical row-wise).
    """
    n = deltas.shape[-1]
    if callable(tiebreak_seed):
        return tiebreak_seed()
    if isinstance(tiebreak_seed, np.ndarray) and tiebreak_seed.shape == deltas.shape:
        return tiebreak_seed
    h = np.uint64(int(tiebreak_seed) & 0xFFFFFFFFFFFFFFFF)
    keys = stream_keys(splitmix64(h), TAG_OBS_TIE, n)
    return np.broadcast_to(keys, deltas.shape)


def _rank_from_order(deltas: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Map each entry's ascending sort position to the signed rank value."""
    n = deltas.shape[-1]
    nneg = np.sum(deltas < 0, axis=-1, keepdims=True)
    npos = np.sum(deltas > 0, axis=-1, keepdims=True)
    pos_grid = np.arange(n, dtype=np.int64)
    # ascending order: negatives occupy positions [0, nneg) -> (p - nneg)/nneg,
    # zeros the middle -> 0, positives the last npos -> (p - (n - npos) + 1)/npos
    neg_part = np.minimum(pos_grid - nneg, 0)
    pos_part = np.maximum(pos_grid - (n - npos) + 1, 0)
    by_position = (neg_part / np.maximum(nneg, 1)
                   + pos_part / np.maximum(npos, 1))
    out = np.empty_like(by_position)
    if out.ndim == 1:
        out[order] = by_position
    else:
        flat = (order + (np.arange(out.shape[0]) * n)[:, None]).ravel()
        out.reshape(-1)[flat] = by_position.ravel()
    return out


def signed_rank_values(deltas: np.ndarray, tie_keys) -> np.ndarray:
    """O3 rank encoding for one row or a batch of rows (last axis = moves).

    ``tie_keys`` may be a key array or a zero-argument callable producing
    one; it is only consulted when equal deltas actually occur.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    order = np.argsort(deltas, axis=-1)
    sorted_vals = np.take_along_axis(deltas, order, axis=-1)
    if np.any(sorted_vals[..., 1:] == sorted_vals[..., :-1]):
        keys = _tie_keys(deltas, tie_keys)
        order = np.lexsort((keys, deltas), axis=-1)
    return _rank_from_order(deltas, order)


def zscores(deltas: np.ndarray, ddof: int = 0) -> np.ndarray:
    """Z-score of each delta; all zeros when the spread is zero.

    Population standard deviation (ddof=0) is the default convention;
    ddof=1 switches to the sample estimator.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    centered = deltas - deltas.mean(axis=-1, keepdims=True)
    n = deltas.shape[-1]
    denom = max(n - ddof, 1)
    sd = np.sqrt(np.sum(centered * centered, axis=-1, keepdims=True) / denom)
    return np.divide(centered, sd, out=np.zeros_like(deltas), where=sd > 0)


def obs_o1(deltas: np.ndarray) -> np.ndarray:
    """Raw delta column, shape (n, 1)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    return deltas[..., None]


def obs_o2(f_x: float | np.ndarray, neighbor_fitness: np.ndarray) -> np.ndarray:
    """(current fitness, neighbor fitness) rows, shape (n, 2)."""
    neighbor_fitness = np.asarray(neighbor_fitness, dtype=np.float64)
    cur = np.broadcast_to(np.asarray(f_x, dtype=np.float64)[..., None],
                          neighbor_fitness.shape)
    return np.stack([cur, neighbor_fitness], axis=-1)


def obs_o3(deltas: np.ndarray, tiebreak_seed) -> np.ndarray:
    """Signed normalized ranks, shape (n, 1)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    return signed_rank_values(deltas, tiebreak_seed)[..., None]


def obs_o4(deltas: np.ndarray, tiebreak_seed, ddof: int = 0) -> np.ndarray:
    """Rank column plus z-score column, shape (n, 2)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    ranks = signed_rank_values(deltas, tiebreak_seed)
    return np.stack([ranks, zscores(deltas, ddof=ddof)], axis=-1)


def build_observation(kind: ObservationKind, deltas: np.ndarray,
                      fitness: float | np.ndarray, tie_keys) -> np.ndarray:
    """Observation rows for one state or a batch; last two axes are (n, d).

    ``tie_keys`` may be an integer seed or a precomputed uint64 key array
    matching ``deltas`` (the trajectory engine passes per-state key arrays
    derived from the state hash).
    """
    kind = ObservationKind(kind)
    deltas = np.asarray(deltas, dtype=np.float64)
    if kind is ObservationKind.O1:
        return obs_o1(deltas)
    if kind is ObservationKind.O2:
        neighbor = np.asarray(fitness, dtype=np.float64)[..., None] - deltas
        return obs_o2(fitness, neighbor)
    if kind is ObservationKind.O3:
        return signed_rank_values(deltas, tie_keys)[..., None]
    ranks = signed_rank_values(deltas, tie_keys)
    return np.stack([ranks, zscores(deltas)], axis=-1)
