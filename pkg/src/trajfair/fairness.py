"""Individual and group fairness of per-user model outcomes.

Individual fairness compares outcomes of similar users, found either by
thresholding a similarity matrix or by k-means clustering.  Group fairness
compares mean outcomes of demographic subgroups (disparate impact).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .entropy import KINDS, EntropyProfile
from .errors import InputError
from .ingest import DemographicTable, OutcomeTable

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.8
DEFAULT_TAU = 0.2
FOUR_FIFTHS = 0.8
FEATURES = ("effective_ssim",) + tuple(k.lower() for k in KINDS)


@dataclass(frozen=True)
class PairSelection:
    pairs: list[tuple[str, str]]
    similarities: list[float]
    total_pairs: int

    @property
    def fraction(self) -> float:
        return len(self.pairs) / self.total_pairs

    @property
    def percent(self) -> float:
        return 100.0 * len(self.pairs) / self.total_pairs


@dataclass(frozen=True)
class PairVerdict:
    user_a: str
    user_b: str
    metric: str
    similarity: float
    source: str
    column: str
    delta: float
    violated: bool


@dataclass(frozen=True)
class ViolationResult:
    rate: float
    verdicts: list[PairVerdict]
    dropped_users: list[str] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(v.violated for v in self.verdicts)

    @property
    def percent(self) -> float:
        # from the counts, so the value does not depend on rounding of rate
        return 100.0 * self.violations / len(self.verdicts)


def select_pairs(sim, epsilon: float = DEFAULT_EPSILON, ids: Sequence[str] | None = None) -> PairSelection:
    """Unordered pairs ``i < j`` with ``sim[i, j] >= epsilon``."""
    sim = np.asarray(sim, dtype=float)
    n = sim.shape[0]
    if sim.ndim != 2 or sim.shape != (n, n):
        raise InputError(f"similarity matrix must be square, got {sim.shape}")
    if n < 2:
        raise InputError("pair selection needs at least two users")
    if not 0 < epsilon < 1:
        raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    iu, ju = np.triu_indices(n, k=1)
    keep = sim[iu, ju] >= epsilon
    pairs = [(ids[i], ids[j]) for i, j in zip(iu[keep], ju[keep])]
    return PairSelection(pairs, sim[iu, ju][keep].tolist(), len(iu))


def outcome_delta(d_i: float, d_j: float) -> float:
    """Relative gap ``1 - min/max``; 0 when both outcomes are 0."""
    lo, hi = min(d_i, d_j), max(d_i, d_j)
    if hi == 0:
        return 0.0
    return 1.0 - lo / hi


def violation_rate(pairs: PairSelection | Sequence[tuple[str, str]], outcomes: OutcomeTable,
                   source: str, column: str, tau: float = DEFAULT_TAU,
                   metric: str = "") -> ViolationResult:
    """Share of similar pairs whose outcome delta exceeds ``tau``.

    Pairs touching a user without the requested outcome are dropped.
    """
    if not 0 < tau < 1:
        raise InputError(f"tau must lie in (0, 1), got {tau}")
    if isinstance(pairs, PairSelection):
        sims = pairs.similarities
        pairs = pairs.pairs
    else:
        sims = [float("nan")] * len(pairs)
    values = outcomes.column(source, column)
    dropped = sorted({u for pair in pairs for u in pair if u not in values})
    if dropped:
        log.info("%s/%s: dropping users without outcomes: %s", source, column, dropped)

    verdicts = []
    for (a, b), s in zip(pairs, sims):
        if a in values and b in values:
            delta = outcome_delta(values[a], values[b])
            verdicts.append(PairVerdict(a, b, metric, s, source, column, delta, delta > tau))
    if not verdicts:
        raise InputError(f"no qualifying pairs with {source}/{column} outcomes")
    rate = sum(v.violated for v in verdicts) / len(verdicts)
    return ViolationResult(rate, verdicts, dropped)


def feature_matrix(profiles: Sequence[EntropyProfile], eff_ssim: Mapping[str, float]):
    """Z-scored ``[effective SSIM, SE, LE, HE, AE]`` rows, one per user.

    Returns ``(user_ids, matrix)``.  Columns with zero variance become 0.
    """
    ids, rows = [], []
    for p in profiles:
        if p.user_id not in eff_ssim:
            raise InputError(f"no effective SSIM for user {p.user_id!r}")
        row = [eff_ssim[p.user_id]] + [p.get(k) for k in KINDS]
        if any(v is None or not np.isfinite(v) for v in row):
            raise InputError(f"incomplete features for user {p.user_id!r}")
        ids.append(p.user_id)
        rows.append(row)
    x = np.array(rows, dtype=float)
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    z = np.zeros_like(x)
    varying = sd > 0
    z[:, varying] = (x[:, varying] - mean[varying]) / sd[varying]
    return ids, z


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: dict[str, int]
    inertia: float
    silhouette: float
    centers: np.ndarray = field(repr=False, compare=False)
    inertia_history: tuple[float, ...] = field(default=(), compare=False)
    iterations: int = 0

    def members(self, cluster: int) -> list[str]:
        return [u for u, c in self.labels.items() if c == cluster]


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def silhouette_score(x: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette with Euclidean distance; singletons score 0.

    Returns 0 when fewer than two clusters are populated.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    present = np.unique(labels)
    if len(present) < 2:
        return 0.0
    dist = np.sqrt(_sq_dists(x, x))
    scores = np.zeros(len(x))
    for i in range(len(x)):
        same = labels == labels[i]
        if same.sum() == 1:
            continue
        a = dist[i, same].sum() / (same.sum() - 1)
        b = min(dist[i, labels == c].mean() for c in present if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def kmeans(features, k: int, seed: int = 0, ids: Sequence[str] | None = None,
           max_iter: int = 300) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments no longer change or after ``max_iter`` rounds.
    Labels are renumbered in order of first appearance, so equal partitions
    get equal labels.
    """
    x = np.asarray(features, dtype=float)
    n = len(x)
    if not 2 <= k <= n:
        raise InputError(f"k={k} out of range for {n} users")
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    labels = _sq_dists(x, centers).argmin(axis=1)
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
        d = _sq_dists(x, centers)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new

    remap = {}
    for lab in labels:
        remap.setdefault(int(lab), len(remap))
    canon = np.array([remap[int(lab)] for lab in labels])
    order = sorted(remap, key=remap.get)
    centers = centers[order]
    inertia = float(((x - centers[canon]) ** 2).sum())
    return ClusterAssignment(
        k=k,
        labels=dict(zip(ids, canon.tolist())),
        inertia=inertia,
        silhouette=silhouette_score(x, canon),
        centers=centers,
        inertia_history=tuple(history),
        iterations=iterations,
    )


@dataclass(frozen=True)
class KChoice:
    k: int
    inertia: dict[int, float]
    silhouette: dict[int, float]
    assignment: ClusterAssignment


def choose_k(features, k_min: int = 2, k_max: int = 8, seed: int = 0,
             ids: Sequence[str] | None = None) -> KChoice:
    """Pick the k with the highest silhouette (smallest k on ties).

    Inertia per k is reported too, for reading off an elbow.
    """
    n = len(features)
    if k_min < 2 or k_max > n or k_min > k_max:
        raise InputError(f"empty or invalid k range [{k_min}, {k_max}] for {n} users")
    runs = {k: kmeans(features, k, seed, ids) for k in range(k_min, k_max + 1)}
    best = max(runs, key=lambda k: (runs[k].silhouette, -k))
    return KChoice(best, {k: a.inertia for k, a in runs.items()},
                   {k: a.silhouette for k, a in runs.items()}, runs[best])


@dataclass(frozen=True)
class ClusterViolation:
    cluster: int
    size: int
    rate: float
    singleton: bool
    violators: list[str]
    mean_deltas: dict[str, float]

    @property
    def percent(self) -> float:
        return 100.0 * self.rate


def cluster_violation_rate(assignment: ClusterAssignment, outcomes: OutcomeTable,
                           source: str, column: str, tau: float = DEFAULT_TAU) -> list[ClusterViolation]:
    """Per cluster, the share of members whose mean delta to the rest exceeds ``tau``.

    Members without the outcome are left out of their cluster.
    """
    values = outcomes.column(source, column)
    out = []
    for c in range(assignment.k):
        members = [u for u in assignment.members(c) if u in values]
        if not members:
            continue
        means = {}
        if len(members) > 1:
            for u in members:
                deltas = [outcome_delta(values[u], values[v]) for v in members if v != u]
                means[u] = sum(deltas) / len(deltas)
        violators = [u for u, m in means.items() if m > tau]
        out.append(ClusterViolation(c, len(members), len(violators) / len(members),
                                    len(members) == 1, violators, means))
    return out


@dataclass(frozen=True)
class GroupFairnessRow:
    attribute: str
    value: str
    users: int
    source: str
    column: str
    mean: float
    advantaged: bool
    gfs: float | None
    fair: bool | None


def group_fairness_score(outcomes: OutcomeTable, demographics: DemographicTable, attribute: str,
                         source: str, column: str, mode: str = "symmetric") -> list[GroupFairnessRow]:
    """Disparate-impact score of every subgroup against the largest one.

    ``symmetric`` gives ``min(d/a, a/d)`` for advantaged mean ``a`` and
    subgroup mean ``d``; ``literal`` gives ``a/d``.  The advantaged row has
    no score.  A zero mean in a ratio leaves that row's score undefined.
    """
    if mode not in ("symmetric", "literal"):
        raise InputError(f"unknown GFS mode {mode!r}")
    groups = demographics.groups(attribute)
    if not groups:
        raise InputError(f"attribute {attribute!r} not in demographics")
    values = outcomes.column(source, column)
    groups = {g: [u for u in us if u in values] for g, us in groups.items()}
    groups = {g: us for g, us in groups.items() if us}
    if len(groups) < 2:
        raise InputError(f"{attribute!r} has fewer than two subgroups with {source}/{column} outcomes")

    # ties on size go to the lexicographically first subgroup
    adv = max(sorted(groups), key=lambda g: len(groups[g]))
    means = {g: float(np.mean([values[u] for u in us])) for g, us in groups.items()}
    a = means[adv]
    rows = []
    for g, us in groups.items():
        d = means[g]
        if g == adv:
            gfs = None
        elif mode == "symmetric":
            gfs = min(d / a, a / d) if a > 0 and d > 0 else None
        else:
            gfs = a / d if d > 0 else None
        fair = None if gfs is None else gfs >= FOUR_FIFTHS
        rows.append(GroupFairnessRow(attribute, g, len(us), source, column, d, g == adv, gfs, fair))
    return rows
