"""Time-varying communication topologies and gossip matrices.

A topology schedule is a deterministic map from a communication-round index
``q`` to an edge set on ``n`` nodes. One decentralized communication round is
simulated as a multiplication with the round's gossip matrix, built here as
the graph Laplacian divided by its largest eigenvalue.

Every gossip matrix ``W`` produced by this module satisfies four axioms:

1. sparsity: ``W[i, j] != 0`` only for edges ``(i, j)`` or ``i == j``,
2. kernel: ``W @ ones == 0``,
3. range: ``ones @ W == 0`` (outputs are zero-sum),
4. contraction: ``||W x - x||^2 <= (1 - 1/chi) ||x||^2`` for zero-sum ``x``,

where ``chi >= 1`` is the network condition number, the supremum over rounds
of ``lambda_max / lambda_min_plus`` of the Laplacian. ``chi`` governs how
fast repeated gossip rounds contract disagreement between nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TopologySchedule",
    "MixingSchedule",
    "ChiEstimate",
    "ValidationReport",
    "ring_edges",
    "star_edges",
    "random_geometric_edges",
    "ring_star_schedule",
    "star_cycle_schedule",
    "random_geometric_schedule",
    "schedule_from_pool",
    "make_schedule",
    "star_cycle_center",
    "laplacian",
    "gossip_matrix",
    "validate_gossip",
    "estimate_chi",
    "build_mixing",
    "edges_to_json",
    "edges_from_json",
    "save_gossip_csv",
]

# Relative cutoff separating the structural zero eigenvalue from numerical
# noise when locating lambda_min_plus.
EIGENVALUE_FLOOR = 1e-9


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri
            return True
        return False


def _canonical(edges):
    """Sorted tuple of (i, j) pairs with i < j and duplicates removed."""
    return tuple(sorted({(min(i, j), max(i, j)) for i, j in edges}))


def _is_connected(edges, n):
    uf = _UnionFind(n)
    for i, j in edges:
        uf.union(i, j)
    root = uf.find(0)
    return all(uf.find(i) == root for i in range(1, n))


def ring_edges(n):
    """Edge set of the ring on n nodes: (i, i+1 mod n)."""
    if n < 2:
        raise ValueError(f"ring needs n >= 2, got {n}")
    return _canonical((i, (i + 1) % n) for i in range(n))


def star_edges(n, center=0):
    """Edge set of the star on n nodes centered at the given node."""
    if n < 2:
        raise ValueError(f"star needs n >= 2, got {n}")
    if not 0 <= center < n:
        raise ValueError(f"center {center} out of range for n={n}")
    return _canonical((center, j) for j in range(n) if j != center)


def random_geometric_edges(n, radius, seed, index):
    """One connected random geometric graph on the unit square.

    Node coordinates are drawn from a counter-based generator keyed by
    ``(seed, index, node)``, so the graph is a pure function of its arguments
    and reproducible across platforms. Pairs closer than ``radius`` are
    connected; if the threshold graph is disconnected, the minimum number of
    index-path edges ``(i, i+1)`` joining distinct components is added.

    Parameters
    ----------
    n : int
        Number of nodes.
    radius : float
        Connection radius, in (0, sqrt(2)].
    seed : int
        Base seed of the schedule.
    index : int
        Position of this graph within the schedule's pool.

    Returns
    -------
    tuple of (int, int)
        Canonical edge list of a connected graph.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not 0.0 < radius <= math.sqrt(2.0):
        raise ValueError(f"radius must be in (0, sqrt(2)], got {radius}")
    coords = np.empty((n, 2))
    for i in range(n):
        coords[i] = np.random.default_rng([seed, index, i]).random(2)

    diffs = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    edges = [
        (i, j) for i in range(n) for j in range(i + 1, n) if dist[i, j] < radius
    ]

    uf = _UnionFind(n)
    for i, j in edges:
        uf.union(i, j)
    for i in range(n - 1):
        if uf.find(i) != uf.find(i + 1):
            uf.union(i, i + 1)
            edges.append((i, i + 1))
    return _canonical(edges)


def star_cycle_center(n, q):
    """Zero-based center of round q's star for the cycling-star schedule.

    Centers traverse the middle third of the node set with period n/3.
    """
    g = n // 3
    return g + (q % g)


@dataclass(frozen=True)
class TopologySchedule:
    """Deterministic map from round index q to an edge set.

    All supported schedules are cyclic: ``edges(q) = pool[q % cycle]``. Two
    queries at the same q always return the identical edge tuple.
    """

    n: int
    kind: str
    pool: tuple

    @property
    def cycle(self):
        return len(self.pool)

    def edges(self, q):
        if q < 0:
            raise ValueError(f"round index must be >= 0, got {q}")
        return self.pool[q % self.cycle]


def schedule_from_pool(pool, n, kind="custom"):
    """Schedule cycling through an explicit list of edge sets."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not pool:
        raise ValueError("pool must be nonempty")
    canon = []
    for edges in pool:
        edges = _canonical(edges)
        if not _is_connected(edges, n):
            raise ValueError("every pooled edge set must be connected")
        if any(i == j for i, j in edges):
            raise ValueError("self-loops are not allowed")
        canon.append(edges)
    return TopologySchedule(n=n, kind=kind, pool=tuple(canon))


def ring_star_schedule(n):
    """Alternate between the ring (even rounds) and the star at node 0."""
    return TopologySchedule(
        n=n, kind="ring_star", pool=(ring_edges(n), star_edges(n, 0))
    )


def star_cycle_schedule(n):
    """Stars whose center cycles through the middle third of the nodes.

    This is the adversarial sequence used by the communication lower bound:
    the only route between the first and last third of the nodes is through
    a center that changes every round.
    """
    if n < 3 or n % 3 != 0:
        raise ValueError(f"star cycle needs n divisible by 3 and >= 3, got {n}")
    pool = tuple(star_edges(n, star_cycle_center(n, q)) for q in range(n // 3))
    return TopologySchedule(n=n, kind="star_cycle", pool=pool)


def random_geometric_schedule(n, radius, pool_size, seed):
    """Cycle through a fixed pool of connected random geometric graphs."""
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    pool = tuple(
        random_geometric_edges(n, radius, seed, g) for g in range(pool_size)
    )
    return TopologySchedule(n=n, kind="random_geometric", pool=pool)


_SCHEDULE_BUILDERS = {
    "ring_star": lambda n, params: ring_star_schedule(n),
    "star_cycle": lambda n, params: star_cycle_schedule(n),
    "random_geometric": lambda n, params: random_geometric_schedule(
        n, params["radius"], params["pool_size"], params["seed"]
    ),
}


def make_schedule(kind, n, **params):
    """Build a schedule by kind name; see the individual constructors."""
    try:
        builder = _SCHEDULE_BUILDERS[kind]
    except KeyError:
        raise ValueError(
            f"unknown schedule kind {kind!r}; expected one of "
            f"{sorted(_SCHEDULE_BUILDERS)}"
        ) from None
    return builder(n, params)


def laplacian(edges, n):
    """Combinatorial graph Laplacian (degree matrix minus adjacency)."""
    lap = np.zeros((n, n))
    for i, j in edges:
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
    return lap


def _spectral_ratio(evals):
    """lambda_max / lambda_min_plus of a PSD spectrum, clamped to >= 1."""
    lam_max = evals[-1]
    positive = evals[evals > EIGENVALUE_FLOOR * lam_max]
    if positive.size == 0:
        raise ValueError("matrix has no positive eigenvalue")
    return max(float(lam_max / positive[0]), 1.0)


def gossip_matrix(edges, n):
    """Gossip matrix of a connected graph: Laplacian over its top eigenvalue.

    The result is symmetric positive semi-definite with eigenvalues in
    [0, 1], kernel spanned by the all-ones vector, and zero-sum rows and
    columns, so it satisfies all four gossip axioms with chi equal to the
    Laplacian condition number lambda_max / lambda_min_plus.

    Raises
    ------
    ValueError
        If the edge set is disconnected (the contraction axiom would fail
        for every finite chi).
    """
    if not _is_connected(edges, n):
        raise ValueError("gossip matrix requires a connected graph")
    lap = laplacian(edges, n)
    lam_max = float(np.linalg.eigvalsh(lap)[-1])
    return lap / lam_max


@dataclass(frozen=True)
class ChiEstimate:
    """Measured network condition number over a sampled horizon."""

    chi: float
    per_round: tuple

    def __post_init__(self):
        assert self.chi >= 1.0


def estimate_chi(schedule, horizon=None):
    """Largest per-round Laplacian condition number over the horizon.

    For a cyclic schedule the default horizon of one cycle already yields
    the exact supremum over all rounds.
    """
    if horizon is None:
        horizon = schedule.cycle
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    ratios = {}
    for q in range(min(horizon, schedule.cycle)):
        evals = np.linalg.eigvalsh(laplacian(schedule.edges(q), schedule.n))
        ratios[q] = _spectral_ratio(evals)
    per_round = tuple(ratios[q % schedule.cycle] for q in range(horizon))
    return ChiEstimate(chi=max(per_round), per_round=per_round)


@dataclass(frozen=True)
class ValidationReport:
    """Per-axiom outcome of a gossip-matrix check."""

    sparsity_ok: bool
    kernel_ok: bool
    range_ok: bool
    contraction_ok: bool
    kernel_residual: float
    range_residual: float
    worst_sampled_ratio: float
    spectral_worst_ratio: float | None

    @property
    def passed(self):
        return (
            self.sparsity_ok
            and self.kernel_ok
            and self.range_ok
            and self.contraction_ok
        )


def validate_gossip(w, edges, chi, samples=50, seed=0):
    """Check the four gossip axioms of a matrix against an edge set.

    Sparsity, kernel and range are checked entrywise at 1e-12. The
    contraction axiom is checked on ``samples`` random zero-sum vectors and,
    in addition, through the exact worst-case ratio obtained spectrally by
    restricting ``(W - I)' (W - I)`` to the zero-sum subspace.

    Failures are reported, not raised.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ValueError(f"gossip matrix must be square, got {w.shape}")
    edge_set = set(_canonical(edges))

    sparsity_ok = True
    for i in range(n):
        for j in range(n):
            if i != j and abs(w[i, j]) > 1e-12:
                if (min(i, j), max(i, j)) not in edge_set:
                    sparsity_ok = False

    ones = np.ones(n)
    kernel_residual = float(np.abs(w @ ones).max())
    range_residual = float(np.abs(ones @ w).max())

    bound = 1.0 - 1.0 / chi
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, n))
    x -= x.mean(axis=1, keepdims=True)
    diff = x @ w.T - x
    ratios = (diff**2).sum(axis=1) / (x**2).sum(axis=1)
    worst_sampled = float(ratios.max())
    contraction_ok = bool(np.all(ratios <= bound))

    # Exact worst case: restrict (W - I)'(W - I) to the zero-sum subspace.
    spectral_worst = None
    if np.allclose(w, w.T, atol=1e-12):
        p0 = np.eye(n) - np.full((n, n), 1.0 / n)
        m = w - np.eye(n)
        spectral_worst = float(np.linalg.eigvalsh(p0 @ (m.T @ m) @ p0)[-1])
        contraction_ok = contraction_ok and spectral_worst <= bound + 1e-12

    return ValidationReport(
        sparsity_ok=sparsity_ok,
        kernel_ok=kernel_residual <= 1e-12,
        range_ok=range_residual <= 1e-12,
        contraction_ok=contraction_ok,
        kernel_residual=kernel_residual,
        range_residual=range_residual,
        worst_sampled_ratio=worst_sampled,
        spectral_worst_ratio=spectral_worst,
    )


class MixingSchedule:
    """Gossip matrices of a topology schedule, precomputed over one cycle.

    Attributes
    ----------
    topology : TopologySchedule
    chi : float
        Measured condition number over the cycle.
    per_round : tuple of float
        Per-position Laplacian condition numbers.
    """

    def __init__(self, topology, mats, chi, per_round):
        self.topology = topology
        self._mats = tuple(mats)
        self.chi = chi
        self.per_round = per_round
        for mat in self._mats:
            mat.setflags(write=False)

    @property
    def n(self):
        return self.topology.n

    @property
    def cycle(self):
        return self.topology.cycle

    def w(self, q):
        """Gossip matrix of round q."""
        return self._mats[q % self.cycle]

    def edges(self, q):
        return self.topology.edges(q)


def build_mixing(schedule):
    """Precompute gossip matrices and the chi estimate for a schedule."""
    mats = [gossip_matrix(schedule.edges(q), schedule.n) for q in range(schedule.cycle)]
    est = estimate_chi(schedule)
    return MixingSchedule(schedule, mats, est.chi, est.per_round)


def edges_to_json(edges):
    """Serialize an edge set as a JSON array of [i, j] pairs."""
    return json.dumps([[int(i), int(j)] for i, j in edges])


def edges_from_json(text):
    return _canonical((int(i), int(j)) for i, j in json.loads(text))


def save_gossip_csv(w, path):
    """Write a gossip matrix as dense row-major CSV at full precision."""
    with open(path, "w", newline="\n") as fh:
        for row in np.asarray(w, dtype=float):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
