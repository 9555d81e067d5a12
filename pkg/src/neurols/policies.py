"""Move-selection policies: the neural row-scoring policy and baselines.

All policies are deterministic and memoryless: the action depends only on
the current neighborhood deltas, the solution bits (through the state
hash) and the run's master seed.  Randomized components (tie-breaks,
jumps, index permutations) draw from counter streams keyed by the state
hash, so revisiting a state always reproduces the same decision.

The neural policy applies one small MLP to every observation row
independently and takes the argmax of the n scores, which makes it
permutation-equivariant and size-independent by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .hashing import state_hash  # noqa: F401  (part of this module's surface:
#                                    policies key every decision off this hash)
from .hashing import (TAG_ACT_TIE, TAG_JUMP, TAG_OBS_TIE, TAG_PERM,
                      state_permutations, stream_keys, uniform_index)
from .observations import ObservationKind, build_observation
from .search import StepContext

_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# MLP scoring network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpArchitecture:
    """Row-wise scoring network: affine layers, tanh hiddens, linear output."""

    input_dim: int
    hidden: tuple[int, ...] = (10, 5)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)

    @property
    def param_count(self) -> int:
        sizes = self.layer_sizes
        return sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))


def unpack_theta(arch: MlpArchitecture, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into (W, b) per layer.

    Layout: for each layer in input->output order, the weight matrix
    (out x in, row-major) followed by the bias vector.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (arch.param_count,):
        raise ValueError(f"theta has length {theta.shape}, expected {arch.param_count}")
    layers = []
    sizes = arch.layer_sizes
    pos = 0
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        w = theta[pos:pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = theta[pos:pos + n_out]
        pos += n_out
        layers.append((w, b))
    return layers


def mlp_forward(arch: MlpArchitecture, theta: np.ndarray, rows: np.ndarray):
    """Score one row (returns a float) or a stack of rows (returns (...,))."""
    layers = unpack_theta(arch, theta)
    rows = np.asarray(rows, dtype=np.float64)
    single = rows.ndim == 1
    h = rows.reshape(-1, arch.input_dim)
    for w, b in layers[:-1]:
        h = np.tanh(h @ w.T + b)
    w, b = layers[-1]
    out = (h @ w.T + b)[:, 0]
    if single:
        return float(out[0])
    return out.reshape(rows.shape[:-1])


def _transposed_layers(layers) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.ascontiguousarray(w.T), b) for w, b in layers]


def _forward_transposed(tlayers, rows: np.ndarray) -> np.ndarray:
    h = rows.reshape(-1, rows.shape[-1])
    for wt, b in tlayers[:-1]:
        h = h @ wt
        h += b
        np.tanh(h, out=h)
    wt, b = tlayers[-1]
    return (h @ wt + b)[:, 0].reshape(rows.shape[:-1])


def _forward_layers(layers, rows: np.ndarray) -> np.ndarray:
    return _forward_transposed(_transposed_layers(layers), rows)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

def _argmax_tiebroken(values: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Row-wise argmax; exact ties resolved by smallest stream key."""
    top = values.max(axis=-1, keepdims=True)
    masked = np.where(values == top, keys, _U64_MAX)
    return np.argmin(masked, axis=-1)


class NeuroPolicy:
    """Row-scored argmax policy over a declared observation kind."""

    def __init__(self, arch: MlpArchitecture, theta: np.ndarray,
                 observation_kind: ObservationKind | str, master_seed: int = 0):
        self.arch = arch
        self.theta = np.array(theta, dtype=np.float64, copy=True)
        self.observation_kind = ObservationKind(observation_kind)
        if self.observation_kind.input_dim != arch.input_dim:
            raise ValueError(
                f"observation {self.observation_kind.value} feeds {self.observation_kind.input_dim} "
                f"columns but the network expects {arch.input_dim}")
        self.master_seed = int(master_seed)
        self._layers = _transposed_layers(unpack_theta(arch, self.theta))
        # analysis hook: called with (obs rows, scores) at every step when set
        self.on_scores = None

    def act_batch(self, ctx: StepContext) -> np.ndarray:
        n = ctx.n
        obs = build_observation(self.observation_kind, ctx.deltas, ctx.fitness,
                                lambda: stream_keys(ctx.hashes, TAG_OBS_TIE, n))
        scores = _forward_transposed(self._layers, obs)
        if self.on_scores is not None:
            self.on_scores(obs, scores)
        top = scores.max(axis=-1, keepdims=True)
        ties = scores == top
        if ties.sum() == ties.shape[0]:  # unique maxima everywhere
            return np.argmax(scores, axis=-1)
        return _argmax_tiebroken(scores, stream_keys(ctx.hashes, TAG_ACT_TIE, n))

    def scores(self, obs_rows: np.ndarray) -> np.ndarray:
        """Raw network scores for observation rows (analysis hook)."""
        return _forward_transposed(self._layers, np.asarray(obs_rows, dtype=np.float64))


class BhcPlusPolicy:
    """Best-improvement hill climber; uniform random jump at local optima.

    Exact ties on the best improvement go to the lowest index.
    """

    observation_kind = None

    def act_batch(self, ctx: StepContext) -> np.ndarray:
        improvement = -ctx.deltas
        best = np.argmax(improvement, axis=-1)
        rows = np.arange(improvement.shape[0])
        jump = uniform_index(ctx.hashes, TAG_JUMP, ctx.n)
        return np.where(improvement[rows, best] > 0, best, jump)


class FhcPlusPolicy:
    """First-improvement hill climber over a state-seeded index order."""

    observation_kind = None

    def act_batch(self, ctx: StepContext) -> np.ndarray:
        improvement = -ctx.deltas
        perm = state_permutations(ctx.hashes, ctx.n)
        rows = np.arange(improvement.shape[0])[:, None]
        improving = improvement[rows, perm] > 0
        any_imp = improving.any(axis=-1)
        first = perm[np.arange(len(perm)), np.argmax(improving, axis=-1)]
        jump = uniform_index(ctx.hashes, TAG_JUMP, ctx.n)
        return np.where(any_imp, first, jump)


class OneCommaLambdaPolicy:
    """(1,lambda)-ES move: sample lambda flips, keep the best even if worse.

    Samples without replacement by default ("evaluates lambda actions"
    reads as distinct evaluations); ``with_replacement=True`` switches to
    independent draws.  Ties go to the earliest drawn index.
    """

    observation_kind = None

    def __init__(self, lam: int, with_replacement: bool = False):
        if lam < 1:
            raise ValueError("lambda must be >= 1")
        self.lam = int(lam)
        self.with_replacement = bool(with_replacement)

    def act_batch(self, ctx: StepContext) -> np.ndarray:
        if self.lam > ctx.n:
            raise ValueError(f"lambda {self.lam} exceeds n={ctx.n}")
        if self.with_replacement:
            sample = (stream_keys(ctx.hashes, TAG_PERM, self.lam)
                      % np.uint64(ctx.n)).astype(np.int64)
        else:
            sample = state_permutations(ctx.hashes, ctx.n)[..., :self.lam]
        rows = np.arange(sample.shape[0])[:, None]
        improvement = -ctx.deltas[rows, sample]
        return sample[np.arange(len(sample)), np.argmax(improvement, axis=-1)]


# single-state functional forms -------------------------------------------

def _single_ctx(deltas: np.ndarray, state_seed: int,
                fitness: float = 0.0) -> StepContext:
    deltas = np.asarray(deltas, dtype=np.float64)[None, :]
    return StepContext(deltas=deltas, fitness=np.array([fitness]),
                       hashes=np.array([np.uint64(int(state_seed) & 0xFFFFFFFFFFFFFFFF)]),
                       bits=np.zeros_like(deltas, dtype=np.uint8))


def neuro_ls_act(arch: MlpArchitecture, theta: np.ndarray, obs: np.ndarray,
                 tiebreak_seed: int) -> int:
    """Argmax of per-row scores; ties broken by the seeded key stream."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != arch.input_dim:
        raise ValueError(f"observation shape {obs.shape} does not match input_dim={arch.input_dim}")
    scores = mlp_forward(arch, theta, obs)
    keys = stream_keys(np.uint64(int(tiebreak_seed) & 0xFFFFFFFFFFFFFFFF),
                       TAG_ACT_TIE, obs.shape[0])
    return int(_argmax_tiebroken(scores[None, :], keys[None, :])[0])


def bhc_plus_act(deltas: np.ndarray, state_seed: int) -> int:
    return int(BhcPlusPolicy().act_batch(_single_ctx(deltas, state_seed))[0])


def fhc_plus_act(deltas: np.ndarray, state_seed: int) -> int:
    return int(FhcPlusPolicy().act_batch(_single_ctx(deltas, state_seed))[0])


def one_comma_lambda_act(deltas: np.ndarray, lam: int, state_seed: int,
                         with_replacement: bool = False) -> int:
    policy = OneCommaLambdaPolicy(lam, with_replacement=with_replacement)
    return int(policy.act_batch(_single_ctx(deltas, state_seed))[0])


# ---------------------------------------------------------------------------
# Policy files
# ---------------------------------------------------------------------------

def save_policy(policy: NeuroPolicy, path: str | Path,
                provenance: Optional[str] = None) -> None:
    doc = {
        "arch": {"d": policy.arch.input_dim, "hidden": list(policy.arch.hidden)},
        "theta": policy.theta.tolist(),
        "observation_kind": policy.observation_kind.value,
        "master_seed": policy.master_seed,
    }
    if provenance:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc))


def load_policy(path: str | Path) -> NeuroPolicy:
    doc = json.loads(Path(path).read_text())
    arch = MlpArchitecture(input_dim=int(doc["arch"]["d"]),
                           hidden=tuple(int(h) for h in doc["arch"]["hidden"]))
    return NeuroPolicy(arch=arch, theta=np.asarray(doc["theta"], dtype=np.float64),
                       observation_kind=doc["observation_kind"],
                       master_seed=int(doc.get("master_seed", 0)))


def baseline_policy(name: str, es_lambda: Optional[int] = None):
    """Construct a baseline by CLI name: bhc, fhc or es."""
    name = name.lower()
    if name == "bhc":
        return BhcPlusPolicy()
    if name == "fhc":
        return FhcPlusPolicy()
    if name == "es":
        if es_lambda is None:
            raise ValueError("es baseline requires a lambda value")
        return OneCommaLambdaPolicy(es_lambda)
    raise ValueError(f"unknown baseline {name!r}")
