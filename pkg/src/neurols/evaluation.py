"""Head-to-head evaluation, significance testing and strategy analysis.

Every strategy in a report is scored on identical (instance, start point)
pairs — scores differ only through decisions.  The default protocol is one
trajectory per instance so the per-strategy score vectors are iid across
instances, which is what the Welch comparisons assume.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .instances import InstanceSet, generate_puboi_set, puboi_m
from .policies import NeuroPolicy
from .search import Policy, TrajectoryRecord, run_trajectories, run_trajectory_groups
from .stats import WelchResult, welch_t

SIGNIFICANCE_LEVEL = 1e-3

QUBO_FAMILIES = {
    "uni": (1.0, 1.0),
    "imp": (10.0, 1.0),
    "ic": (10.0, 1.09),
}


@dataclass
class EvalReport:
    """Means, per-instance score vectors and pairwise Welch comparisons."""

    strategy_names: list[str]
    baseline_names: list[str]
    scores: dict[str, np.ndarray]
    comparisons: dict[tuple[str, str], WelchResult] = field(default_factory=dict)

    @property
    def means(self) -> dict[str, float]:
        return {name: float(v.mean()) for name, v in self.scores.items()}

    @property
    def best_name(self) -> str:
        means = self.means
        return max(self.strategy_names, key=lambda s: means[s])

    def significant(self, name: str) -> bool:
        """Better mean than every baseline with Welch p below 0.001."""
        if name in self.baseline_names or not self.baseline_names:
            return False
        means = self.means
        for base in self.baseline_names:
            cmp = self.comparisons[(name, base)]
            if not (means[name] > means[base] and cmp.p < SIGNIFICANCE_LEVEL):
                return False
        return True

    def to_csv(self, provenance: Optional[str] = None) -> str:
        buf = io.StringIO()
        if provenance:
            buf.write(f"# provenance {provenance}\n")
        header = ["strategy", "mean", "is_baseline", "is_best", "significant"]
        for base in self.baseline_names:
            header += [f"t_vs_{base}", f"df_vs_{base}", f"p_vs_{base}"]
        buf.write(",".join(header) + "\n")
        means, best = self.means, self.best_name
        for name in self.strategy_names:
            row = [name, f"{means[name]:.17g}",
                   str(int(name in self.baseline_names)),
                   str(int(name == best)),
                   str(int(self.significant(name)))]
            for base in self.baseline_names:
                cmp = self.comparisons.get((name, base))
                if cmp is None:
                    row += ["", "", ""]
                else:
                    row += [f"{cmp.t:.17g}", f"{cmp.df:.17g}", f"{cmp.p:.17g}"]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def scores_csv(self, provenance: Optional[str] = None) -> str:
        buf = io.StringIO()
        if provenance:
            buf.write(f"# provenance {provenance}\n")
        buf.write("instance," + ",".join(self.strategy_names) + "\n")
        count = len(next(iter(self.scores.values())))
        for i in range(count):
            buf.write(str(i) + "," +
                      ",".join(f"{self.scores[s][i]:.17g}" for s in self.strategy_names)
                      + "\n")
        return buf.getvalue()

    def format_table(self, decimals: int = 3) -> str:
        """Text table: best mean flagged *, significant-vs-all-baselines flagged +."""
        means, best = self.means, self.best_name
        width = max(len(s) for s in self.strategy_names) + 2
        lines = [f"{'strategy':<{width}}{'mean':>12}  flags"]
        for name in self.strategy_names:
            flags = ("*" if name == best else "") + ("+" if self.significant(name) else "")
            lines.append(f"{name:<{width}}{means[name]:>12.{decimals}f}  {flags}")
        return "\n".join(lines)


def evaluate_testset(strategies: dict[str, Policy], iset: InstanceSet,
                     horizon: int, baseline_names: Optional[Sequence[str]] = None,
                     master_seed: Optional[int] = None) -> EvalReport:
    """Score every strategy on the shared (instance, start) pairs of a set.

    With several restarts per instance the per-instance score is their
    mean; the standard test protocol uses a single restart.
    """
    if not strategies:
        raise ValueError("no strategies given")
    baseline_names = list(baseline_names or [])
    for b in baseline_names:
        if b not in strategies:
            raise ValueError(f"baseline {b!r} missing from strategies")
    seed = iset.master_seed if master_seed is None else master_seed
    starts = [iset.start_points(i) for i in range(len(iset.instances))]
    # policies are size-independent, so mixed-size sets are legal; fuse
    # trajectories per size bucket
    buckets: dict[int, list[int]] = {}
    for i, inst in enumerate(iset.instances):
        buckets.setdefault(inst.n, []).append(i)
    scores = {name: np.empty(len(iset.instances)) for name in strategies}
    for name, policy in strategies.items():
        for idxs in buckets.values():
            rewards, _ = run_trajectory_groups(
                [iset.instances[i] for i in idxs], [starts[i] for i in idxs],
                policy, horizon, seed)
            for i, r in zip(idxs, rewards):
                scores[name][i] = float(r.mean())
    report = EvalReport(strategy_names=list(strategies), baseline_names=baseline_names,
                        scores=scores)
    for name in strategies:
        if name in baseline_names:
            continue
        for base in baseline_names:
            report.comparisons[(name, base)] = welch_t(scores[name], scores[base])
    return report


def evaluate_ood(strategies: dict[str, Policy], qubo_sets: dict[str, InstanceSet],
                 baseline_names: Optional[Sequence[str]] = None,
                 horizon_factor: int = 2) -> dict[str, EvalReport]:
    """Same protocol as evaluate_testset over a collection of QUBO sets."""
    out = {}
    for label, iset in qubo_sets.items():
        n = iset.instances[0].n
        out[label] = evaluate_testset(strategies, iset, horizon_factor * n,
                                      baseline_names=baseline_names)
    return out


def build_qubo_test_sets(sizes: Sequence[int], m_fracs: Sequence[float],
                         families: Sequence[str], count: int, master_seed: int,
                         restarts: int = 1) -> dict[str, InstanceSet]:
    """Importance-weighted QUBO test sets keyed by 'n{n}_m{frac}_{family}'."""
    sets = {}
    for n in sizes:
        for frac in m_fracs:
            for fam in families:
                d, alpha = QUBO_FAMILIES[fam]
                label = f"n{n}_m{frac:g}_{fam}"
                sets[label] = generate_puboi_set(
                    role=f"test:{label}", n=n, m=puboi_m(n, frac), d=d, alpha=alpha,
                    count=count, restarts=restarts,
                    master_seed=master_seed)
    return sets


# ---------------------------------------------------------------------------
# Emergent-strategy analysis
# ---------------------------------------------------------------------------

def replay_with_diagnostics(policy: Policy, inst, x0: np.ndarray, horizon: int,
                            master_seed: int) -> TrajectoryRecord:
    """One trajectory with full per-step diagnostics."""
    _, records = run_trajectories(inst, np.asarray(x0)[None, :], policy, horizon,
                                  master_seed, record=True)
    return records[0]


@dataclass
class ResponseCurve:
    """Observation rows and network scores collected over replays."""

    inputs: np.ndarray   # (M, d)
    outputs: np.ndarray  # (M,)

    def to_csv(self, provenance: Optional[str] = None) -> str:
        buf = io.StringIO()
        if provenance:
            buf.write(f"# provenance {provenance}\n")
        d = self.inputs.shape[1]
        buf.write(",".join(f"input_{j+1}" for j in range(d)) + ",score\n")
        for row, out in zip(self.inputs, self.outputs):
            buf.write(",".join(f"{v:.17g}" for v in row) + f",{out:.17g}\n")
        return buf.getvalue()


def export_response(policy: NeuroPolicy, iset: InstanceSet, horizon: int,
                    replays: int = 10,
                    master_seed: Optional[int] = None) -> ResponseCurve:
    """Record every (observation row, score) pair over replayed trajectories.

    Replays the first ``replays`` (instance, start) pairs of the set, one
    trajectory each, capturing the network's inputs and outputs at every
    step.
    """
    seed = iset.master_seed if master_seed is None else master_seed
    inputs: list[np.ndarray] = []
    outputs: list[np.ndarray] = []

    def capture(obs: np.ndarray, scores: np.ndarray) -> None:
        inputs.append(obs.reshape(-1, obs.shape[-1]).copy())
        outputs.append(scores.reshape(-1).copy())

    policy.on_scores = capture
    try:
        for i in range(min(replays, len(iset.instances))):
            inst = iset.instances[i]
            x0 = iset.start_points(i)[:1]
            run_trajectories(inst, x0, policy, horizon, seed)
    finally:
        policy.on_scores = None
    return ResponseCurve(inputs=np.concatenate(inputs, axis=0),
                         outputs=np.concatenate(outputs, axis=0))
