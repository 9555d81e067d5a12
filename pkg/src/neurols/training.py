"""Neuro-evolution training loop.

Each generation regenerates a fresh batch of training instances (seeded by
generation index, so every candidate in the generation is scored on
identical instance/start pairs), asks the optimizer for a population of
parameter vectors, scores each by the empirical objective (mean over
instances and restarts of the best fitness found along a trajectory),
tells the optimizer, and evaluates the generation's training-best
candidate on a validation set that stays fixed across all generations and
runs.  The champion is the individual with the best logged validation
score; independent runs differ only through their CMA seed and mean
initialization.

Seeds bind to logical units (run, generation, instance, restart), never
to workers, so parallel candidate evaluation changes wall-clock only.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from multiprocessing import get_context
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .cmaes import CmaesOptimizer
from .hashing import child_seed, rng_from
from .instances import Instance, InstanceSet, generate_nk, generate_nk_set, start_points
from .observations import ObservationKind
from .policies import MlpArchitecture, NeuroPolicy, OneCommaLambdaPolicy
from .search import Policy, run_trajectory_groups

REQUIRED_CONFIG_FIELDS = ("n", "k", "observation_kind")


@dataclass
class TrainConfig:
    """Everything needed to reproduce a training experiment bit-exactly."""

    n: int
    k: int
    observation_kind: str = "o4"
    q: int = 10                 # training instances per generation
    r: int = 10                 # restarts per training instance
    generations: int = 100
    runs: int = 10
    horizon: Optional[int] = None  # defaults to 2n
    sigma_init: float = 0.2
    pop_size: Optional[int] = None
    hidden: tuple[int, ...] = (10, 5)
    val_instances: int = 10
    val_restarts: int = 10
    master_seed: int = 0
    workers: int = 1
    final_generation_only: bool = False  # champion from final gen only

    def __post_init__(self):
        if min(self.q, self.r, self.generations, self.runs) < 1:
            raise ValueError("q, r, generations and runs must all be >= 1")
        if not 0 <= self.k < self.n:
            raise ValueError(f"k must satisfy 0 <= k < n, got k={self.k}, n={self.n}")
        self.observation_kind = ObservationKind(self.observation_kind).value
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def effective_horizon(self) -> int:
        return self.horizon if self.horizon else 2 * self.n

    @property
    def arch(self) -> MlpArchitecture:
        return MlpArchitecture(input_dim=ObservationKind(self.observation_kind).input_dim,
                               hidden=self.hidden)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        for name in REQUIRED_CONFIG_FIELDS:
            if name not in doc:
                raise ValueError(f"missing required config field {name!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        # workers is a throughput knob: it never changes results, so it must
        # not invalidate checkpoints or cache keys
        import hashlib
        doc = self.to_dict()
        doc.pop("workers")
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


# ---------------------------------------------------------------------------
# Empirical objective
# ---------------------------------------------------------------------------

def empirical_score(policy: Policy, instances: Sequence[Instance],
                    starts: Sequence[np.ndarray], horizon: int,
                    master_seed: int) -> float:
    """Mean best-fitness-along-trajectory over all (instance, restart) pairs."""
    if not instances:
        raise ValueError("instance batch must be non-empty")
    rewards, _ = run_trajectory_groups(instances, starts, policy, horizon, master_seed)
    total = sum(float(r.sum()) for r in rewards)
    count = sum(len(r) for r in rewards)
    return total / count


def score_on_set(policy: Policy, iset: InstanceSet, horizon: int,
                 master_seed: Optional[int] = None) -> float:
    """Empirical score of a policy on a stored instance set."""
    seed = iset.master_seed if master_seed is None else master_seed
    starts = [iset.start_points(i) for i in range(len(iset.instances))]
    return empirical_score(policy, iset.instances, starts, horizon, seed)


def _training_batch(cfg: TrainConfig, run: int, gen: int):
    instances = [
        generate_nk(cfg.n, cfg.k, child_seed(cfg.master_seed, "inst:train", run, gen, i))
        for i in range(cfg.q)
    ]
    starts = [
        start_points(cfg.master_seed, f"train:{run}:{gen}", i, cfg.r, cfg.n)
        for i in range(cfg.q)
    ]
    return instances, starts


def _mp_context():
    """Pick a worker start method that works for the calling context.

    Fork is cheap and needs no re-importable __main__ (so unguarded
    scripts and REPLs just work), but is unsafe from a threaded parent
    such as the service's job runner; there we spawn, which requires the
    usual importable main module.
    """
    import threading
    single_threaded = threading.active_count() == 1
    if hasattr(os, "fork") and single_threaded:
        return get_context("fork")
    main_file = getattr(sys.modules.get("__main__"), "__file__", None)
    if main_file and Path(main_file).exists():
        return get_context("spawn")
    if hasattr(os, "fork"):
        return get_context("fork")
    return get_context("spawn")


_WORKER_BATCH: dict = {}


def _score_theta_task(args) -> float:
    """Worker task: score one candidate on its generation's batch."""
    cfg_doc, run, gen, theta = args
    cfg = TrainConfig.from_dict(cfg_doc)
    key = (cfg.config_hash(), run, gen)
    if _WORKER_BATCH.get("key") != key:
        _WORKER_BATCH["key"] = key
        _WORKER_BATCH["batch"] = _training_batch(cfg, run, gen)
    instances, starts = _WORKER_BATCH["batch"]
    policy = NeuroPolicy(cfg.arch, np.asarray(theta), cfg.observation_kind,
                         master_seed=cfg.master_seed)
    return empirical_score(policy, instances, starts, cfg.effective_horizon,
                           cfg.master_seed)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    """Per-generation log plus the selected champion."""

    config: TrainConfig
    rows: list[dict] = field(default_factory=list)  # run, generation, train_F, valid_F
    champion_theta: Optional[np.ndarray] = None
    champion_valid: float = -np.inf
    champion_run: int = -1
    champion_generation: int = -1

    def champion_policy(self) -> NeuroPolicy:
        if self.champion_theta is None:
            raise ValueError("training produced no champion")
        return NeuroPolicy(self.config.arch, self.champion_theta,
                           self.config.observation_kind,
                           master_seed=self.config.master_seed)

    def validation_envelope(self) -> list[dict]:
        """Per-generation min/best/max validation score across runs."""
        by_gen: dict[int, list[float]] = {}
        for row in self.rows:
            by_gen.setdefault(row["generation"], []).append(row["valid_F"])
        return [
            {"generation": g, "valid_min": min(v), "valid_max": max(v)}
            for g, v in sorted(by_gen.items())
        ]

    def to_csv(self, provenance: Optional[str] = None) -> str:
        lines = []
        if provenance:
            lines.append(f"# provenance {provenance}")
        lines.append("generation,run,train_F,valid_F")
        for row in self.rows:
            lines.append(f"{row['generation']},{row['run']},"
                         f"{row['train_F']:.17g},{row['valid_F']:.17g}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def validation_set(cfg: TrainConfig) -> InstanceSet:
    return generate_nk_set("valid", cfg.n, cfg.k, cfg.val_instances,
                           cfg.val_restarts, cfg.master_seed)


def validation_reference(cfg: TrainConfig, policy: Policy) -> float:
    """Score of a fixed policy (e.g. a baseline) on the validation set."""
    return score_on_set(policy, validation_set(cfg), cfg.effective_horizon,
                        cfg.master_seed)


def _load_checkpoint(path: Path, cfg_hash: str):
    doc = json.loads(path.read_text())
    if doc.get("config_hash") != cfg_hash:
        raise ValueError("checkpoint was written by a different configuration")
    return doc


def train(cfg: TrainConfig,
          checkpoint_path: Optional[str | Path] = None,
          progress: Optional[Callable[[int, int, float, float], None]] = None,
          ) -> TrainReport:
    """Run the full neuro-evolution experiment described by ``cfg``.

    Deterministic in ``cfg`` alone; a checkpoint written after any
    generation resumes to a bit-identical report.
    """
    dim = cfg.arch.param_count
    vset = validation_set(cfg)
    val_starts = [vset.start_points(i) for i in range(len(vset.instances))]
    horizon = cfg.effective_horizon
    cfg_hash = cfg.config_hash()
    report = TrainReport(config=cfg)

    start_run, start_gen, opt = 0, 0, None
    ckpt = Path(checkpoint_path) if checkpoint_path else None
    if ckpt and ckpt.exists():
        doc = _load_checkpoint(ckpt, cfg_hash)
        report.rows = doc["rows"]
        report.champion_valid = doc["champion"]["valid"]
        report.champion_run = doc["champion"]["run"]
        report.champion_generation = doc["champion"]["generation"]
        if doc["champion"]["theta"] is not None:
            report.champion_theta = np.asarray(doc["champion"]["theta"])
        start_run, start_gen = doc["run"], doc["gen"]
        if doc.get("optimizer") is not None:
            opt = CmaesOptimizer.from_dict(doc["optimizer"])

    executor = None
    if cfg.workers and cfg.workers > 1:
        executor = ProcessPoolExecutor(max_workers=cfg.workers,
                                       mp_context=_mp_context())
    try:
        for run in range(start_run, cfg.runs):
            if opt is None:
                mean0 = rng_from(cfg.master_seed, "mean0", run).standard_normal(dim)
                opt = CmaesOptimizer(dim, mean0, cfg.sigma_init,
                                     pop_size=cfg.pop_size,
                                     seed=child_seed(cfg.master_seed, "cma", run))
            gen0 = start_gen if run == start_run else 0
            for gen in range(gen0, cfg.generations):
                thetas = opt.ask()
                tasks = [(cfg.to_dict(), run, gen, theta.tolist()) for theta in thetas]
                if executor is not None:
                    scores = list(executor.map(_score_theta_task, tasks))
                else:
                    scores = [_score_theta_task(t) for t in tasks]
                scores = np.asarray(scores)
                opt.tell(thetas, scores, maximize=True)

                best_j = int(np.argmax(scores))
                policy = NeuroPolicy(cfg.arch, thetas[best_j], cfg.observation_kind,
                                     master_seed=cfg.master_seed)
                valid_f = empirical_score(policy, vset.instances, val_starts,
                                          horizon, cfg.master_seed)
                report.rows.append({"run": run, "generation": gen,
                                    "train_F": float(scores[best_j]),
                                    "valid_F": float(valid_f)})
                is_last = gen == cfg.generations - 1
                if (valid_f > report.champion_valid
                        and (not cfg.final_generation_only or is_last)):
                    report.champion_valid = float(valid_f)
                    report.champion_theta = thetas[best_j].copy()
                    report.champion_run = run
                    report.champion_generation = gen
                if progress:
                    progress(run, gen, float(scores[best_j]), float(valid_f))
                if ckpt:
                    nxt_run, nxt_gen = (run, gen + 1) if not is_last else (run + 1, 0)
                    doc = {
                        "config_hash": cfg_hash,
                        "run": nxt_run,
                        "gen": nxt_gen,
                        "optimizer": opt.to_dict() if not is_last else None,
                        "rows": report.rows,
                        "champion": {
                            "theta": (report.champion_theta.tolist()
                                      if report.champion_theta is not None else None),
                            "valid": report.champion_valid,
                            "run": report.champion_run,
                            "generation": report.champion_generation,
                        },
                    }
                    tmp = ckpt.with_suffix(".tmp")
                    tmp.write_text(json.dumps(doc))
                    tmp.replace(ckpt)
            opt = None
    finally:
        if executor is not None:
            executor.shutdown()
    return report


# ---------------------------------------------------------------------------
# (1,lambda) calibration
# ---------------------------------------------------------------------------

def divisor_grid(n: int) -> list[int]:
    return sorted({d for d in range(1, n + 1) if n % d == 0} | {1, n})


def calibrate_lambda(n: int, k: int, grid: Optional[Sequence[int]] = None,
                     master_seed: int = 0, q: int = 10, r: int = 10,
                     horizon: Optional[int] = None) -> tuple[int, dict[int, float]]:
    """Grid-search lambda for the (1,lambda)-ES on a fresh training batch.

    Returns the best lambda (ties to the smaller value) and the score of
    every grid member.
    """
    grid = sorted(set(int(g) for g in (grid if grid is not None else divisor_grid(n))))
    if not grid:
        raise ValueError("lambda grid must be non-empty")
    if grid[0] < 1 or grid[-1] > n:
        raise ValueError(f"lambda grid must lie within [1, {n}]")
    horizon = horizon if horizon else 2 * n
    instances = [generate_nk(n, k, child_seed(master_seed, "inst:calib", i))
                 for i in range(q)]
    starts = [start_points(master_seed, "calib", i, r, n) for i in range(q)]
    scores: dict[int, float] = {}
    best_lam, best_score = grid[0], -np.inf
    for lam in grid:
        f = empirical_score(OneCommaLambdaPolicy(lam), instances, starts,
                            horizon, master_seed)
        scores[lam] = f
        if f > best_score:
            best_lam, best_score = lam, f
    return best_lam, scores
