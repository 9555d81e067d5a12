"""Covariance matrix adaptation evolution strategy (ask/tell).

Standard parameterization: log-rank recombination weights over the best
half, cumulative step-size adaptation, rank-one plus rank-mu covariance
update, eigendecomposition refreshed every generation (dimensions here
stay around 100, so this is cheap).  Selection is purely rank-based, so
any strictly increasing transform of the scores leaves every update
bit-identical.

Scores may be maximized or minimized via the ``maximize`` flag on tell;
non-finite scores are ranked worst and counted in ``nonfinite_scores``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EIGEN_FLOOR = 1e-14


def default_pop_size(dim: int) -> int:
    return 4 + int(math.floor(3 * math.log(dim)))


class CmaesOptimizer:
    """Single-owner ask/tell optimizer over R^dim."""

    def __init__(self, dim: int, mean0: Sequence[float] | np.ndarray,
                 sigma0: float, pop_size: Optional[int] = None, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        mean0 = np.asarray(mean0, dtype=np.float64)
        if mean0.shape != (dim,):
            raise ValueError(f"mean0 must have shape ({dim},), got {mean0.shape}")
        self.dim = dim
        self.mean = mean0.copy()
        self.sigma = float(sigma0)
        self.pop_size = int(pop_size) if pop_size else default_pop_size(dim)
        if self.pop_size < 2:
            raise ValueError("population size must be >= 2")
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(seed))

        mu = self.pop_size // 2
        raw = np.log((self.pop_size + 1) / 2) - np.log(np.arange(1, mu + 1))
        self.weights = raw / raw.sum()
        self.mu = mu
        self.mu_eff = 1.0 / np.sum(self.weights ** 2)

        n, mu_eff = dim, self.mu_eff
        self.c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
        self.d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + self.c_sigma
        self.c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
        self.c_mu = min(1 - self.c_1,
                        2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))

        self.cov = np.eye(dim)
        self.p_sigma = np.zeros(dim)
        self.p_c = np.zeros(dim)
        self.generation = 0
        self.nonfinite_scores = 0
        self.eigen_repairs = 0
        self._refresh_eigen()

    # -- internals ---------------------------------------------------------

    def _refresh_eigen(self) -> None:
        self.cov = (self.cov + self.cov.T) / 2.0
        vals, vecs = np.linalg.eigh(self.cov)
        if np.any(vals < EIGEN_FLOOR):
            self.eigen_repairs += 1
            vals = np.maximum(vals, EIGEN_FLOOR)
            self.cov = (vecs * vals) @ vecs.T
            self.cov = (self.cov + self.cov.T) / 2.0
        self._eig_vecs = vecs
        self._eig_sqrt = np.sqrt(vals)

    def _inv_sqrt_times(self, v: np.ndarray) -> np.ndarray:
        b, d = self._eig_vecs, self._eig_sqrt
        return b @ ((b.T @ v) / d)

    # -- protocol ----------------------------------------------------------

    def ask(self) -> np.ndarray:
        """Sample a (pop_size, dim) candidate batch from N(mean, sigma^2 C)."""
        z = self.rng.standard_normal((self.pop_size, self.dim))
        y = (z * self._eig_sqrt) @ self._eig_vecs.T
        return self.mean + self.sigma * y

    def tell(self, candidates: np.ndarray, scores: Sequence[float] | np.ndarray,
             maximize: bool = True) -> "CmaesOptimizer":
        """Rank-based update from the scored candidates of the last ask."""
        candidates = np.asarray(candidates, dtype=np.float64)
        scores = np.asarray(scores, dtype=np.float64)
        if candidates.shape != (len(scores), self.dim):
            raise ValueError("candidates and scores disagree in shape")
        if len(scores) != self.pop_size:
            raise ValueError(f"expected {self.pop_size} scores, got {len(scores)}")
        finite = np.isfinite(scores)
        self.nonfinite_scores += int((~finite).sum())
        worst = -np.inf if maximize else np.inf
        key = np.where(finite, scores, worst)
        order = np.argsort(-key if maximize else key, kind="stable")
        sel = order[: self.mu]

        y = (candidates - self.mean) / self.sigma
        y_w = self.weights @ y[sel]
        self.mean = self.mean + self.sigma * y_w

        c_s, mu_eff, n = self.c_sigma, self.mu_eff, self.dim
        self.p_sigma = ((1 - c_s) * self.p_sigma
                        + math.sqrt(c_s * (2 - c_s) * mu_eff) * self._inv_sqrt_times(y_w))
        self.generation += 1
        norm_ps = float(np.linalg.norm(self.p_sigma))
        denom = math.sqrt(1 - (1 - c_s) ** (2 * self.generation))
        h_sigma = norm_ps / denom < (1.4 + 2 / (n + 1)) * self.chi_n

        c_c = self.c_c
        self.p_c = ((1 - c_c) * self.p_c
                    + (math.sqrt(c_c * (2 - c_c) * mu_eff) * y_w if h_sigma else 0.0))
        delta_h = (1 - h_sigma) * c_c * (2 - c_c)

        rank_mu = (self.weights[:, None] * y[sel]).T @ y[sel]
        self.cov = ((1 - self.c_1 - self.c_mu + self.c_1 * delta_h) * self.cov
                    + self.c_1 * np.outer(self.p_c, self.p_c)
                    + self.c_mu * rank_mu)
        self.sigma = self.sigma * math.exp((c_s / self.d_sigma) * (norm_ps / self.chi_n - 1))
        self._refresh_eigen()
        return self

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "pop_size": self.pop_size,
            "seed": self.seed,
            "mean": self.mean.tolist(),
            "sigma": self.sigma,
            "cov": self.cov.tolist(),
            "p_sigma": self.p_sigma.tolist(),
            "p_c": self.p_c.tolist(),
            "generation": self.generation,
            "nonfinite_scores": self.nonfinite_scores,
            "eigen_repairs": self.eigen_repairs,
            "rng_state": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CmaesOptimizer":
        opt = cls(dim=int(doc["dim"]), mean0=np.asarray(doc["mean"]),
                  sigma0=float(doc["sigma"]), pop_size=int(doc["pop_size"]),
                  seed=int(doc["seed"]))
        opt.cov = np.asarray(doc["cov"], dtype=np.float64)
        opt.p_sigma = np.asarray(doc["p_sigma"], dtype=np.float64)
        opt.p_c = np.asarray(doc["p_c"], dtype=np.float64)
        opt.generation = int(doc["generation"])
        opt.nonfinite_scores = int(doc["nonfinite_scores"])
        opt.eigen_repairs = int(doc["eigen_repairs"])
        state = doc["rng_state"]
        if "state" in state and isinstance(state["state"], dict):
            state = {**state, "state": {k: int(v) for k, v in state["state"].items()}}
        opt.rng.bit_generator.state = state
        opt._refresh_eigen()
        return opt

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "CmaesOptimizer":
        return cls.from_dict(json.loads(Path(path).read_text()))


# procedural facade ---------------------------------------------------------

def cma_init(dim: int, mean0, sigma0: float, pop_size: Optional[int] = None,
             seed: int = 0) -> CmaesOptimizer:
    return CmaesOptimizer(dim, mean0, sigma0, pop_size=pop_size, seed=seed)


def cma_ask(state: CmaesOptimizer) -> np.ndarray:
    return state.ask()


def cma_tell(state: CmaesOptimizer, candidates, scores,
             maximize: bool = True) -> CmaesOptimizer:
    return state.tell(candidates, scores, maximize=maximize)
