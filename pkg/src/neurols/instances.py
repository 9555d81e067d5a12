"""Problem instance generation, evaluation and file formats.

Two pseudo-Boolean families are supported:

* NK landscapes — n binary variables, each contributing a table value
  indexed by its own bit and the bits of k random other variables; fitness
  is the mean contribution, so scores are comparable across n.

* QUBO — f(x) = x^T Q x with a symmetric real matrix Q.  The bundled
  generator builds "importance-weighted" instances from small quadratic
  sub-functions on 4-variable subsets; it is a faithful-in-spirit stand-in,
  and file loading is the authoritative path for reproducing externally
  published instances exactly.

Instances are immutable after construction (arrays are marked read-only)
and safe to share across concurrent evaluators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .hashing import child_seed, rng_from


class InstanceFormatError(ValueError):
    """Malformed or inconsistent instance file."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class NkInstance:
    """NK landscape: contribution tables over (own bit, k linked bits).

    ``links[i]`` lists the k distinct variables (!= i) whose bits co-index
    variable i's table.  Table row i has 2**(k+1) entries; the packed index
    puts variable i's own bit in the most significant position, followed by
    links[i] in order.
    """

    n: int
    k: int
    links: np.ndarray   # (n, k) int64
    tables: np.ndarray  # (n, 2**(k+1)) float64
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "links", _freeze(np.asarray(self.links, dtype=np.int64)))
        object.__setattr__(self, "tables", _freeze(np.asarray(self.tables, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class QuboInstance:
    """QUBO instance: symmetric coefficient matrix, f(x) = x^T Q x."""

    n: int
    q: np.ndarray  # (n, n) float64, symmetric
    metadata: Optional[dict] = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.shape != (self.n, self.n):
            raise ValueError(f"Q must be {self.n}x{self.n}, got {q.shape}")
        if not np.array_equal(q, q.T):
            raise ValueError("Q must be symmetric")
        object.__setattr__(self, "q", _freeze(q))


Instance = NkInstance | QuboInstance


# ---------------------------------------------------------------------------
# NK landscapes
# ---------------------------------------------------------------------------

def generate_nk(n: int, k: int, seed: int) -> NkInstance:
    """Random NK instance: uniform dependency links, uniform [0,1) tables.

    Links for each variable are drawn without replacement from the other
    n-1 variables; tables are iid uniform.  Deterministic in ``seed``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k < n:
        raise ValueError(f"k must satisfy 0 <= k < n, got k={k}, n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    links = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        draw = rng.choice(n - 1, size=k, replace=False)
        links[i] = np.where(draw < i, draw, draw + 1)  # skip i itself
    tables = rng.random((n, 2 ** (k + 1)))
    return NkInstance(n=n, k=k, links=links, tables=tables, seed=int(seed))


def nk_bit_weights(k: int) -> np.ndarray:
    """Packed-index weights: own bit first (most significant), then links."""
    return (2 ** np.arange(k, -1, -1)).astype(np.int64)


def nk_pack_indices(inst: NkInstance, x: np.ndarray) -> np.ndarray:
    """Table index per variable for solution(s) x; x may be (n,) or (B, n)."""
    x = np.asarray(x, dtype=np.int64)
    own = x[..., :, None]  # (..., n, 1)
    linked = x[..., inst.links] if inst.k else np.zeros(x.shape[:-1] + (inst.n, 0), dtype=np.int64)
    gathered = np.concatenate([own, linked], axis=-1)  # (..., n, k+1)
    return gathered @ nk_bit_weights(inst.k)


def eval_nk(inst: NkInstance, x: Sequence[int] | np.ndarray) -> float:
    """Mean table contribution for x; always in [0, 1)."""
    x = np.asarray(x)
    if x.shape != (inst.n,):
        raise ValueError(f"solution length {x.shape} does not match n={inst.n}")
    idx = nk_pack_indices(inst, x)
    return float(inst.tables[np.arange(inst.n), idx].mean())


# ---------------------------------------------------------------------------
# QUBO / importance-weighted generator
# ---------------------------------------------------------------------------

def eval_qubo(inst: QuboInstance, x: Sequence[int] | np.ndarray) -> float:
    """f(x) = x^T Q x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inst.n,):
        raise ValueError(f"solution length {x.shape} does not match n={inst.n}")
    return float(x @ inst.q @ x)


# Prototype sub-functions on 4 spin variables (s in {-1,+1}), given as
# (a, b, weight) edges of s_a * s_b terms.  Pattern p has 2p local maxima
# under one-flip moves, counted as states with no strictly better neighbor
# (the p=4 frustrated cycle's 8 optima are plateau-style).
_SUB_PATTERNS = {
    1: [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
    2: [(0, 1, 1.0), (2, 3, 1.0)],
    3: [(0, 1, -1.0), (0, 2, -1.0), (0, 3, -1.0), (1, 2, -1.0), (1, 3, -1.0), (2, 3, -1.0)],
    4: [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, -1.0)],
}


def _draw_quadruples(rng: np.random.Generator, n: int, m: int, d: float,
                     alpha: float, imp_mask: np.ndarray) -> np.ndarray:
    """m distinct 4-variable subsets, importance-weighted.

    Selection probability of an important variable is proportional to d;
    once a quadruple contains one, subsequent important picks in the same
    quadruple get a further alpha boost.
    """
    if d == 1.0 and alpha == 1.0:
        # uniform case: order variables by iid keys, take the first four
        keys = rng.random((m, n))
        return np.argsort(keys, axis=1)[:, :4].astype(np.int64)
    base = np.where(imp_mask, d, 1.0)
    quads = np.empty((m, 4), dtype=np.int64)
    for s in range(m):
        w = base.copy()
        boosted = False
        for t in range(4):
            p = w / w.sum()
            v = int(rng.choice(n, p=p))
            quads[s, t] = v
            w[v] = 0.0
            if imp_mask[v] and not boosted and alpha != 1.0:
                w[(w > 0) & imp_mask] *= alpha
                boosted = True
        # draws within a quadruple are distinct by construction
    return quads


def generate_puboi(n: int, m: int, d: float = 1.0, alpha: float = 1.0,
                   seed: int = 0, important_frac: float = 0.2) -> QuboInstance:
    """Importance-weighted QUBO built from 4-variable quadratic sub-functions.

    Each sub-function is a pure quadratic in spin space (so f(x) = f(~x)
    exactly), drawn from four prototype patterns with 2/4/6/8 symmetric
    local optima, with a random sign gauge per sub-function.  Accumulated
    into Q with the spin->binary change of variables (constants dropped,
    which preserves the complement symmetry).
    """
    if n < 4:
        raise ValueError("n must be at least 4")
    if m <= 0:
        raise ValueError("m must be positive")
    if d < 1.0 or alpha < 1.0:
        raise ValueError("d and alpha must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    n_imp = max(1, round(important_frac * n))
    imp_mask = np.zeros(n, dtype=bool)
    imp_mask[rng.choice(n, size=n_imp, replace=False)] = True

    quads = _draw_quadruples(rng, n, m, float(d), float(alpha), imp_mask)
    kinds = rng.integers(1, 5, size=m)
    gauges = rng.integers(0, 2, size=(m, 4)) * 2 - 1  # {-1,+1} spin sign flips

    q = np.zeros((n, n))
    for s in range(m):
        vars4 = quads[s]
        eps = gauges[s]
        for a, b, w in _SUB_PATTERNS[int(kinds[s])]:
            wab = w * eps[a] * eps[b]
            va, vb = int(vars4[a]), int(vars4[b])
            # w*s_a*s_b  ->  4w x_a x_b - 2w x_a - 2w x_b (+ constant, dropped)
            q[va, vb] += 2.0 * wab
            q[vb, va] += 2.0 * wab
            q[va, va] -= 2.0 * wab
            q[vb, vb] -= 2.0 * wab

    family = ("uniform" if d == 1.0 and alpha == 1.0
              else "important" if alpha == 1.0 else "important-concentrated")
    meta = {"generator": "puboi-style", "m": int(m), "d": float(d),
            "alpha": float(alpha), "family": family,
            "important_frac": float(important_frac), "seed": int(seed)}
    return QuboInstance(n=n, q=q, metadata=meta)


def puboi_m(n: int, m_frac: float) -> int:
    """Sub-function count from the density knob: m = m_frac * n(n-1)/2."""
    return max(1, round(m_frac * n * (n - 1) / 2))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def save_instance(inst: Instance, path: str | Path, provenance: str | None = None) -> None:
    """Write an instance file (NK: JSON; QUBO: coordinate text)."""
    path = Path(path)
    if isinstance(inst, NkInstance):
        doc = {
            "type": "nk",
            "n": inst.n,
            "k": inst.k,
            "seed": inst.seed,
            "links": inst.links.tolist(),
            "tables": inst.tables.tolist(),
        }
        if provenance:
            doc["provenance"] = provenance
        path.write_text(json.dumps(doc))
    elif isinstance(inst, QuboInstance):
        iu, ju = np.nonzero(np.triu(inst.q))
        lines = []
        if provenance:
            lines.append(f"# provenance {provenance}")
        if inst.metadata is not None:
            lines.append("# metadata " + json.dumps(inst.metadata))
        lines.append(f"qubo {inst.n} {len(iu)}")
        for i, j in zip(iu, ju):
            lines.append(f"{i} {j} {inst.q[i, j]:.17g}")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise TypeError(f"unknown instance type {type(inst)!r}")


def load_instance(path: str | Path) -> Instance:
    """Load an NK or QUBO instance file (format auto-detected)."""
    path = Path(path)
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _load_nk_json(text, path)
    return _load_qubo_text(text, path)


def _load_nk_json(text: str, path: Path) -> NkInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: invalid JSON: {exc}") from exc
    if doc.get("type") != "nk":
        raise InstanceFormatError(f"{path}: expected type 'nk', got {doc.get('type')!r}")
    try:
        n, k, seed = int(doc["n"]), int(doc["k"]), int(doc["seed"])
        links = np.asarray(doc["links"], dtype=np.int64)
        tables = np.asarray(doc["tables"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: missing or malformed field: {exc}") from exc
    if links.shape != (n, k):
        raise InstanceFormatError(f"{path}: links shape {links.shape} != ({n}, {k})")
    if tables.shape != (n, 2 ** (k + 1)):
        raise InstanceFormatError(f"{path}: tables shape {tables.shape} != ({n}, {2 ** (k + 1)})")
    for i in range(n):
        row = links[i]
        if len(set(row.tolist())) != k or np.any(row == i) or np.any((row < 0) | (row >= n)):
            raise InstanceFormatError(f"{path}: invalid links for variable {i}")
    if np.any((tables < 0) | (tables >= 1)):
        raise InstanceFormatError(f"{path}: table entries must lie in [0, 1)")
    return NkInstance(n=n, k=k, links=links, tables=tables, seed=seed)


def _load_qubo_text(text: str, path: Path) -> QuboInstance:
    metadata = None
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("metadata "):
                metadata = json.loads(body[len("metadata "):])
            continue
        lines.append(line)
    if not lines:
        raise InstanceFormatError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "qubo":
        raise InstanceFormatError(f"{path}: expected header 'qubo n nnz'")
    try:
        n, nnz = int(header[1]), int(header[2])
    except ValueError as exc:
        raise InstanceFormatError(f"{path}: bad header numbers") from exc
    if n <= 0:
        raise InstanceFormatError(f"{path}: n must be positive")
    entries = lines[1:]
    if len(entries) != nnz:
        raise InstanceFormatError(f"{path}: header declares {nnz} entries, found {len(entries)}")
    q = np.zeros((n, n))
    seen: set[tuple[int, int]] = set()
    for line in entries:
        parts = line.split()
        if len(parts) != 3:
            raise InstanceFormatError(f"{path}: bad entry line {line!r}")
        try:
            i, j, val = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise InstanceFormatError(f"{path}: bad entry line {line!r}") from exc
        if not (0 <= i < n and 0 <= j < n):
            raise InstanceFormatError(f"{path}: index out of range in {line!r}")
        if (i, j) in seen:
            raise InstanceFormatError(f"{path}: duplicate entry for ({i}, {j})")
        seen.add((i, j))
        q[i, j] = val
    # mirror entries given one-sided; reject contradictions
    for (i, j) in seen:
        if i == j:
            continue
        if (j, i) in seen:
            if q[i, j] != q[j, i]:
                raise InstanceFormatError(f"{path}: asymmetric values for ({i}, {j})")
        else:
            q[j, i] = q[i, j]
    return QuboInstance(n=n, q=q, metadata=metadata)


# ---------------------------------------------------------------------------
# Instance sets and manifests
# ---------------------------------------------------------------------------

def start_points(master_seed: int, role: str, instance_index: int,
                 restarts: int, n: int) -> np.ndarray:
    """Initial bit-vectors (restarts, n), reproducible from seed and indices."""
    out = np.empty((restarts, n), dtype=np.uint8)
    for j in range(restarts):
        rng = rng_from(master_seed, f"start:{role}", instance_index, j)
        out[j] = rng.integers(0, 2, size=n, dtype=np.uint8)
    return out


@dataclass
class InstanceSet:
    """Ordered instances plus per-instance shared start points.

    Start points are regenerated from (master_seed, role, instance index,
    restart index), so every strategy evaluated against the set sees
    identical starting solutions.
    """

    role: str
    master_seed: int
    instances: list[Instance]
    restarts: int
    paths: Optional[list[str]] = None
    _starts: list[np.ndarray] = field(default_factory=list, repr=False)

    def start_points(self, instance_index: int) -> np.ndarray:
        if not self._starts:
            n_by_index = [inst.n for inst in self.instances]
            self._starts = [
                start_points(self.master_seed, self.role, i, self.restarts, n)
                for i, n in enumerate(n_by_index)
            ]
        return self._starts[instance_index]


def generate_nk_set(role: str, n: int, k: int, count: int, restarts: int,
                    master_seed: int) -> InstanceSet:
    """Fresh NK instances with per-instance seeds split off the master seed."""
    instances = [
        generate_nk(n, k, child_seed(master_seed, f"inst:{role}", i))
        for i in range(count)
    ]
    return InstanceSet(role=role, master_seed=master_seed, instances=instances,
                       restarts=restarts)


def generate_puboi_set(role: str, n: int, m: int, d: float, alpha: float,
                       count: int, restarts: int, master_seed: int,
                       important_frac: float = 0.2) -> InstanceSet:
    instances = [
        generate_puboi(n, m, d, alpha, child_seed(master_seed, f"inst:{role}", i),
                       important_frac=important_frac)
        for i in range(count)
    ]
    return InstanceSet(role=role, master_seed=master_seed, instances=instances,
                       restarts=restarts)


def save_instance_set(iset: InstanceSet, out_dir: str | Path,
                      provenance: str | None = None) -> Path:
    """Write instance files plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, inst in enumerate(iset.instances):
        suffix = "json" if isinstance(inst, NkInstance) else "txt"
        kind = "nk" if isinstance(inst, NkInstance) else "qubo"
        name = f"{kind}_{i:04d}.{suffix}"
        save_instance(inst, out_dir / name, provenance=provenance)
        entries.append({"path": name, "restarts": iset.restarts})
    manifest = {"role": iset.role, "master_seed": iset.master_seed, "entries": entries}
    if provenance:
        manifest["provenance"] = provenance
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_instance_set(manifest_path: str | Path) -> InstanceSet:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
        role = doc["role"]
        master_seed = int(doc["master_seed"])
        entries = doc["entries"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{manifest_path}: malformed manifest: {exc}") from exc
    if not entries:
        raise InstanceFormatError(f"{manifest_path}: manifest lists no instances")
    base = manifest_path.parent
    instances, paths, restarts = [], [], None
    for entry in entries:
        p = base / entry["path"]
        instances.append(load_instance(p))
        paths.append(str(p))
        r = int(entry["restarts"])
        if restarts is None:
            restarts = r
        elif restarts != r:
            raise InstanceFormatError(f"{manifest_path}: mixed restart counts unsupported")
    return InstanceSet(role=role, master_seed=master_seed, instances=instances,
                       restarts=restarts or 1, paths=paths)
