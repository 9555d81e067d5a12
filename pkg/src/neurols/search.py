"""Bit-vector search states, incremental one-flip deltas, trajectories.

One sign convention holds throughout:
``delta[i] = f(x) - f(flip_i(x))``, so a move IMPROVES a maximization
objective exactly when its delta is negative; the improvement value is
``-delta[i]``.

Trajectories over one instance run as a batch: all restarts advance in
lockstep so that delta updates, observation building and policy forward
passes vectorize.  Per step the NK evaluator re-reads only the
contributions affected through reverse dependency links (O(n*(k+1)) table
lookups), and the QUBO evaluator maintains the gradient row Q x.
Everything is a pure function of (instance, start points, policy, master
seed): runs are bit-reproducible across schedulers and worker counts.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .hashing import bit_word_masks, hash_base, pack_solution_words, state_hash_fold
from .instances import Instance, NkInstance, QuboInstance, eval_nk, eval_qubo, nk_bit_weights


@dataclass
class StepContext:
    """Everything a policy may consult at one step, for a batch of states."""

    deltas: np.ndarray       # (B, n), delta[i] = f(x) - f(flip_i(x))
    fitness: np.ndarray      # (B,) current fitness
    hashes: np.ndarray       # (B,) uint64 per-state hashes
    bits: Optional[np.ndarray] = None  # (B, n) solutions; decisions must key
    #                                    off `hashes`, not raw bits

    @property
    def n(self) -> int:
        return self.deltas.shape[-1]


class Policy(Protocol):
    """Deterministic, memoryless move-selection policy."""

    def act_batch(self, ctx: StepContext) -> np.ndarray:
        """Action index in {0..n-1} per row of the batch."""
        ...


@dataclass
class Solution:
    """Bit-vector with cached fitness (kept consistent by apply_move)."""

    bits: np.ndarray
    fitness: float


@dataclass
class BatchState:
    bits: np.ndarray      # (B, n) uint8
    fitness: np.ndarray   # (B,)
    aux: dict = field(default_factory=dict)


class NkEvaluator:
    """Incremental NK evaluation via reverse dependency links."""

    def __init__(self, inst: NkInstance):
        self.inst = inst
        n, k = inst.n, inst.k
        weights = nk_bit_weights(k)
        # vars_of[j] = (j, links[j]...) with packed-bit weight per position
        vars_of = np.concatenate([np.arange(n)[:, None], inst.links], axis=1)
        # reverse map: for each variable i, the (j, xor_mask) pairs whose
        # contribution reads bit i
        flat_i = vars_of.ravel()
        flat_j = np.repeat(np.arange(n), k + 1)
        flat_mask = np.tile(weights, n)
        order = np.argsort(flat_i, kind="stable")
        self._seg_i = flat_i[order]
        self._rows_j = flat_j[order]
        self._masks = flat_mask[order].astype(np.int64)
        self._seg_starts = np.searchsorted(self._seg_i, np.arange(n))
        # padded per-variable affected lists for vectorized apply; padding
        # points at a dummy slot (column n, zero table row) so scatters of
        # padded entries never race with real updates
        counts = np.diff(np.append(self._seg_starts, len(self._seg_i)))
        lmax = int(counts.max())
        self._aff_j = np.full((n, lmax), n, dtype=np.int64)
        self._aff_mask = np.zeros((n, lmax), dtype=np.int64)
        for i in range(n):
            s, c = self._seg_starts[i], counts[i]
            self._aff_j[i, :c] = self._rows_j[s:s + c]
            self._aff_mask[i, :c] = self._masks[s:s + c]
        self._tables_pad = np.vstack([inst.tables, np.zeros((1, inst.tables.shape[1]))])
        self._vars_of = vars_of
        self._weights = weights
        # flat-gather layout for the delta pass
        width = inst.tables.shape[1]
        self._tables_flat = inst.tables.ravel()
        self._flat_off = self._rows_j * width
        # contribution-sum matrix: M[i, j] = 1 iff flipping i re-reads c_j
        m = np.zeros((n, n))
        m[self._seg_i, self._rows_j] = 1.0
        self._co_sum_t = np.ascontiguousarray(m.T)

    def full_eval(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        idx = bits[:, self._vars_of.ravel()].reshape(-1, self.inst.n, self.inst.k + 1) @ self._weights
        return self.inst.tables[np.arange(self.inst.n), idx].mean(axis=1)

    def init_batch(self, bits: np.ndarray) -> BatchState:
        bits = np.array(bits, dtype=np.uint8, copy=True)
        n = self.inst.n
        nb = bits.shape[0]
        idx = np.zeros((nb, n + 1), dtype=np.int64)
        idx[:, :n] = (bits[:, self._vars_of.ravel()].reshape(-1, n, self.inst.k + 1)
                      @ self._weights)
        c = np.zeros((nb, n + 1))
        c[:, :n] = self.inst.tables[np.arange(n), idx[:, :n]]
        return BatchState(bits=bits, fitness=c[:, :n].mean(axis=1),
                          aux={"idx": idx, "c": c})

    def deltas(self, state: BatchState) -> np.ndarray:
        idx, c = state.aux["idx"], state.aux["c"]
        n = self.inst.n
        flipped = self._tables_flat[self._flat_off + (idx[:, self._rows_j] ^ self._masks)]
        kept = c[:, :n] @ self._co_sum_t  # sum of re-read contributions per flip
        kept -= np.add.reduceat(flipped, self._seg_starts, axis=1)
        kept /= n
        return kept

    def apply(self, state: BatchState, actions: np.ndarray) -> None:
        idx, c = state.aux["idx"], state.aux["c"]
        rows = np.arange(state.bits.shape[0])[:, None]
        aj = self._aff_j[actions]        # (B, L)
        new_idx = idx[rows, aj] ^ self._aff_mask[actions]
        idx[rows, aj] = new_idx
        c[rows, aj] = self._tables_pad[aj, new_idx]
        state.bits[np.arange(len(actions)), actions] ^= 1
        state.fitness = c[:, :self.inst.n].mean(axis=1)


class QuboEvaluator:
    """One-flip QUBO evaluation via the maintained gradient row g = Q x."""

    def __init__(self, inst: QuboInstance):
        self.inst = inst
        self._diag = np.diag(inst.q).copy()

    def full_eval(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.float64))
        return np.einsum("bi,ij,bj->b", bits, self.inst.q, bits)

    def init_batch(self, bits: np.ndarray) -> BatchState:
        bits = np.array(bits, dtype=np.uint8, copy=True)
        x = bits.astype(np.float64)
        g = x @ self.inst.q
        return BatchState(bits=bits, fitness=np.einsum("bi,bi->b", x, g), aux={"g": g})

    def deltas(self, state: BatchState) -> np.ndarray:
        g = state.aux["g"]
        s = 1.0 - 2.0 * state.bits
        # f(flip_i) - f = 2 s_i g_i + q_ii; delta is its negation
        return -(2.0 * s * g + self._diag)

    def apply(self, state: BatchState, actions: np.ndarray) -> None:
        g = state.aux["g"]
        rows = np.arange(len(actions))
        s = 1.0 - 2.0 * state.bits[rows, actions]
        g += s[:, None] * self.inst.q[actions]
        state.bits[rows, actions] ^= 1
        state.fitness = np.einsum("bi,bi->b", state.bits.astype(np.float64), g)


def make_evaluator(inst: Instance):
    if isinstance(inst, NkInstance):
        return NkEvaluator(inst)
    if isinstance(inst, QuboInstance):
        return QuboEvaluator(inst)
    raise TypeError(f"unknown instance type {type(inst)!r}")


def evaluate(inst: Instance, bits: Sequence[int] | np.ndarray) -> float:
    """Full (non-incremental) fitness of one solution."""
    if isinstance(inst, NkInstance):
        return eval_nk(inst, bits)
    return eval_qubo(inst, bits)


def make_solution(inst: Instance, bits: Sequence[int] | np.ndarray) -> Solution:
    bits = np.asarray(bits, dtype=np.uint8)
    return Solution(bits=bits, fitness=evaluate(inst, bits))


def compute_deltas(inst: Instance, x: Solution | np.ndarray) -> np.ndarray:
    """delta[i] = f(x) - f(flip_i(x)) for all i."""
    bits = x.bits if isinstance(x, Solution) else np.asarray(x, dtype=np.uint8)
    if bits.shape[-1] != inst.n:
        raise ValueError(f"solution length {bits.shape[-1]} does not match n={inst.n}")
    ev = make_evaluator(inst)
    return ev.deltas(ev.init_batch(bits[None, :]))[0]


def apply_move(inst: Instance, x: Solution, i: int) -> Solution:
    """flip_i(x) with the fitness cache updated through the incremental path."""
    if not 0 <= i < inst.n:
        raise IndexError(f"action {i} out of range for n={inst.n}")
    ev = make_evaluator(inst)
    state = ev.init_batch(x.bits[None, :])
    ev.apply(state, np.array([i]))
    return Solution(bits=state.bits[0], fitness=float(state.fitness[0]))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("step", "action", "fitness", "n_improving", "chosen_rank",
                 "delta_of_chosen")


@dataclass
class TrajectoryRecord:
    """Per-step diagnostics of one executed trajectory.

    ``chosen_rank`` ranks the chosen move by improvement value descending:
    1 is the best improvement, n the worst deterioration.  ``n_improving``
    counts strictly improving moves before the step was taken.
    """

    horizon: int
    best_fitness: float
    actions: np.ndarray          # (H,)
    fitness: np.ndarray          # (H,) fitness after each move
    n_improving: np.ndarray      # (H,)
    chosen_rank: np.ndarray      # (H,)
    delta_of_chosen: np.ndarray  # (H,)
    start_fitness: float = 0.0

    def rows(self):
        for t in range(self.horizon):
            yield (t, int(self.actions[t]), float(self.fitness[t]),
                   int(self.n_improving[t]), int(self.chosen_rank[t]),
                   float(self.delta_of_chosen[t]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for row in self.rows():
            buf.write(f"{row[0]},{row[1]},{row[2]:.17g},{row[3]},{row[4]},{row[5]:.17g}\n")
        return buf.getvalue()


def run_trajectory_groups(instances: Sequence[Instance],
                          starts_list: Sequence[np.ndarray], policy: Policy,
                          horizon: int, master_seed: int, record: bool = False,
                          evaluators=None,
                          ) -> tuple[list[np.ndarray], Optional[list[list[TrajectoryRecord]]]]:
    """Advance trajectories over several same-size instances in lockstep.

    All trajectories of all instances form one fused batch, so observation
    building, hashing and the policy forward pass amortize across the whole
    group while delta bookkeeping stays per instance.  Returns per-instance
    reward arrays (and per-instance record lists when ``record`` is set).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(instances) != len(starts_list) or not instances:
        raise ValueError("instances and start batches must align and be non-empty")
    n = instances[0].n
    starts_list = [np.atleast_2d(np.asarray(x, dtype=np.uint8)) for x in starts_list]
    for inst, x0 in zip(instances, starts_list):
        if inst.n != n or x0.shape[1] != n:
            raise ValueError("all instances and start points in a group must share n")
    evs = list(evaluators) if evaluators is not None else [make_evaluator(i) for i in instances]
    states = [ev.init_batch(x0) for ev, x0 in zip(evs, starts_list)]
    sizes = [len(x0) for x0 in starts_list]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    nb = int(bounds[-1])
    slices = [slice(int(bounds[g]), int(bounds[g + 1])) for g in range(len(instances))]

    fitness = np.concatenate([st.fitness for st in states])
    best = fitness.copy()
    start_fitness = fitness.copy()
    deltas = np.empty((nb, n))
    rows = np.arange(nb)
    # packed words stay in sync with the bits so per-state hashing skips
    # re-packing at every step
    words = pack_solution_words(np.concatenate([st.bits for st in states], axis=0))
    word_idx, word_mask = bit_word_masks(n)
    base = hash_base(master_seed)
    if record:
        rec_actions = np.empty((horizon, nb), dtype=np.int64)
        rec_fitness = np.empty((horizon, nb))
        rec_nimp = np.empty((horizon, nb), dtype=np.int64)
        rec_rank = np.empty((horizon, nb), dtype=np.int64)
        rec_delta = np.empty((horizon, nb))
    # multi-threaded BLAS only slows down the tiny per-step matmuls
    with threadpool_limits(limits=1, user_api="blas"):
        for t in range(horizon):
            for sl, ev, st in zip(slices, evs, states):
                deltas[sl] = ev.deltas(st)
            hashes = state_hash_fold(words, base, n)
            ctx = StepContext(deltas=deltas, fitness=fitness, hashes=hashes, bits=None)
            actions = np.asarray(policy.act_batch(ctx), dtype=np.int64)
            if actions.shape != (nb,) or actions.min() < 0 or actions.max() >= n:
                raise ValueError("policy returned invalid actions")
            if record:
                chosen = deltas[rows, actions]
                rec_actions[t] = actions
                rec_nimp[t] = (deltas < 0).sum(axis=1)
                rec_rank[t] = 1 + (deltas < chosen[:, None]).sum(axis=1)
                rec_delta[t] = chosen
            for sl, ev, st in zip(slices, evs, states):
                ev.apply(st, actions[sl])
                fitness[sl] = st.fitness
            words[rows, word_idx[actions]] ^= word_mask[actions]
            np.maximum(best, fitness, out=best)
            if record:
                rec_fitness[t] = fitness
    rewards = [best[sl].copy() for sl in slices]
    if not record:
        return rewards, None
    all_records = []
    for sl in slices:
        group = [
            TrajectoryRecord(
                horizon=horizon, best_fitness=float(best[b]),
                actions=rec_actions[:, b].copy(), fitness=rec_fitness[:, b].copy(),
                n_improving=rec_nimp[:, b].copy(), chosen_rank=rec_rank[:, b].copy(),
                delta_of_chosen=rec_delta[:, b].copy(),
                start_fitness=float(start_fitness[b]),
            )
            for b in range(sl.start, sl.stop)
        ]
        all_records.append(group)
    return rewards, all_records


def run_trajectories(inst: Instance, x0: np.ndarray, policy: Policy, horizon: int,
                     master_seed: int, record: bool = False,
                     evaluator=None) -> tuple[np.ndarray, Optional[list[TrajectoryRecord]]]:
    """Execute a batch of trajectories (one row of x0 each) on one instance.

    Returns the rewards (max fitness encountered per trajectory, including
    the start) and, when ``record`` is set, full per-step diagnostics.
    """
    rewards, records = run_trajectory_groups(
        [inst], [x0], policy, horizon, master_seed, record=record,
        evaluators=[evaluator] if evaluator is not None else None)
    return rewards[0], records[0] if records else None


def run_trajectory(inst: Instance, x0: Solution | np.ndarray, policy: Policy,
                   horizon: int, master_seed: int = 0) -> TrajectoryRecord:
    """Single-trajectory wrapper; returns the full record."""
    bits = x0.bits if isinstance(x0, Solution) else np.asarray(x0, dtype=np.uint8)
    _, records = run_trajectories(inst, bits[None, :], policy, horizon,
                                  master_seed, record=True)
    return records[0]
