"""Worst-case instance certifying the communication lower bound.

The construction splits n = 3 floor(chi/3) nodes into thirds. The first
third holds the odd links of a chain quadratic plus an anchor pulling the
first coordinate toward 1; the last third holds the even links; the middle
third holds pure regularizers and exists only to relay information. The
communication graph at round q is the star centered at the (q mod n/3)-th
middle node, so a new coordinate of the chain can only light up after the
star center has cycled, forcing Omega(chi sqrt(L/mu) log(1/eps))
communication rounds for any first-order decentralized method.

The minimizer has the closed form x* = (rho, rho^2, ...) with

    rho = (sqrt(2L/(3 mu) + 1/3) - 1) / (sqrt(2L/(3 mu) + 1/3) + 1),

truncated here to d_trunc coordinates (the tail is geometrically small).
A span tracker replays the worst-case growth of the coordinate prefix each
node can have touched; the certifier checks any traced run against it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .objectives import QuadraticObjectives
from .topology import star_cycle_center, star_cycle_schedule

__all__ = [
    "HardInstance",
    "SpanTracker",
    "CertReport",
    "hard_rho",
    "hard_solution",
    "build_hard_instance",
    "center_one_based",
    "span_ceiling",
    "certify_run",
    "lower_bound_curve",
]


def hard_rho(L, mu):
    """Geometric decay rate of the worst-case solution; in [0, 1)."""
    if not L > mu > 0:
        raise ValueError(f"need L > mu > 0, got L={L}, mu={mu}")
    root = math.sqrt(2.0 * L / (3.0 * mu) + 1.0 / 3.0)
    return (root - 1.0) / (root + 1.0)


def hard_solution(L, mu, d_trunc):
    """Truncated minimizer (rho^1, ..., rho^d_trunc)."""
    rho = hard_rho(L, mu)
    return rho ** np.arange(1, d_trunc + 1)


def center_one_based(n, q):
    """Star center of round q in the one-based labeling n/3 + 1 + (q mod n/3)."""
    return star_cycle_center(n, q) + 1


@dataclass(frozen=True)
class HardInstance:
    """Adversarial problem plus its star-cycle topology."""

    chi: float
    n: int
    L: float
    mu: float
    d_trunc: int
    rho: float
    objectives: QuadraticObjectives
    schedule: object

    @property
    def group_size(self):
        return self.n // 3

    def group_of(self, i):
        """1, 2 or 3 for zero-based node i."""
        return i // self.group_size + 1

    def solution(self):
        return hard_solution(self.L, self.mu, self.d_trunc)


def _chain_quadratic(d, L, mu, pairs, anchor):
    """mu I plus (L - mu)/2 times disjoint difference links (+ anchor e1)."""
    h = 0.5 * (L - mu)
    quad = mu * np.eye(d)
    lin = np.zeros(d)
    offset = 0.0
    if anchor:
        quad[0, 0] += h
        lin[0] = -h
        offset = 0.25 * (L - mu)
    for a, b_ in pairs:
        quad[a, a] += h
        quad[b_, b_] += h
        quad[a, b_] -= h
        quad[b_, a] -= h
    return quad, lin, offset


def build_hard_instance(chi, L, mu, d_trunc):
    """Assemble the worst-case objectives and their star-cycle schedule.

    Parameters
    ----------
    chi : float
        Target network condition number, >= 3. The node count is
        3 floor(chi / 3), so every round's star has Laplacian condition
        number n <= chi.
    L, mu : float
        Smoothness and strong convexity, L > mu > 0.
    d_trunc : int
        Truncation dimension, >= 4.
    """
    if chi < 3:
        raise ValueError(f"need chi >= 3, got {chi}")
    if not L > mu > 0:
        raise ValueError(f"need L > mu > 0, got L={L}, mu={mu}")
    if d_trunc < 4:
        raise ValueError(f"need d_trunc >= 4, got {d_trunc}")
    n = 3 * int(chi // 3)
    g = n // 3

    # One-based chain links (2l, 2l+1) for the first group and (2l-1, 2l)
    # for the last, kept only while both ends fit in the truncation.
    odd_pairs = [(a, a + 1) for a in range(1, d_trunc - 1, 2)]
    even_pairs = [(a, a + 1) for a in range(0, d_trunc - 1, 2)]

    quad = np.empty((n, d_trunc, d_trunc))
    lin = np.empty((n, d_trunc))
    offsets = np.zeros(n)
    q1, l1, o1 = _chain_quadratic(d_trunc, L, mu, odd_pairs, anchor=True)
    q2 = mu * np.eye(d_trunc)
    q3, l3, _ = _chain_quadratic(d_trunc, L, mu, even_pairs, anchor=False)
    for i in range(n):
        if i < g:
            quad[i], lin[i], offsets[i] = q1, l1, o1
        elif i < 2 * g:
            quad[i], lin[i] = q2, 0.0
        else:
            quad[i], lin[i] = q3, l3

    objectives = QuadraticObjectives(quad, lin, offsets=offsets, L=L, mu=mu)
    return HardInstance(
        chi=float(chi),
        n=n,
        L=float(L),
        mu=float(mu),
        d_trunc=d_trunc,
        rho=hard_rho(L, mu),
        objectives=objectives,
        schedule=star_cycle_schedule(n),
    )


@dataclass(frozen=True)
class SpanTracker:
    """Worst-case prefix lengths s_i reachable by each node's memory.

    s_i starts at 0 (memory holds only the zero vector) and never decreases.
    A local computation extends the prefix by one only where the chain
    structure allows: first-group nodes on even s_i, last-group nodes on odd
    s_i, middle nodes never. A communication round moves information only
    through the round's star center: the center learns the global maximum,
    everyone else at most the center's previous value.
    """

    s: tuple
    q: int
    n: int

    @classmethod
    def fresh(cls, n):
        if n < 3 or n % 3 != 0:
            raise ValueError(f"need n divisible by 3 and >= 3, got {n}")
        return cls(s=(0,) * n, q=0, n=n)

    @property
    def group_size(self):
        return self.n // 3

    def after_compute(self):
        g = self.group_size
        new = []
        for i, si in enumerate(self.s):
            if i < g:
                new.append(si + (1 - si % 2))
            elif i < 2 * g:
                new.append(si)
            else:
                new.append(si + si % 2)
        return SpanTracker(s=tuple(new), q=self.q, n=self.n)

    def after_communicate(self):
        center = star_cycle_center(self.n, self.q)
        center_old = self.s[center]
        peak = max(self.s)
        new = tuple(
            peak if i == center else max(si, center_old)
            for i, si in enumerate(self.s)
        )
        return SpanTracker(s=new, q=self.q + 1, n=self.n)


def span_ceiling(tracker):
    """Per-node ceiling on s_i after q completed communication rounds.

    Equals 2 floor(q / (n/3)) plus one extra unit, except for last-group
    nodes and the middle nodes the center cycle has not yet revisited.
    """
    g = tracker.group_size
    base = 2 * (tracker.q // g)
    next_center = star_cycle_center(tracker.n, tracker.q)
    out = []
    for i in range(tracker.n):
        exempt = i >= 2 * g or next_center <= i < 2 * g
        out.append(base + (0 if exempt else 1))
    return tuple(out)


@dataclass(frozen=True)
class CertReport:
    """Outcome of checking a traced run against the lower-bound model."""

    support_ok: tuple
    distance_ok: tuple
    first_violation: dict | None
    q_total: int

    @property
    def passed(self):
        return self.first_violation is None

    def to_json(self, curve=None):
        obj = {
            "passed": self.passed,
            "support_ok": list(self.support_ok),
            "distance_ok": list(self.distance_ok),
            "first_violation": self.first_violation,
            "q_total": self.q_total,
        }
        if curve is not None:
            exact, relaxed = curve
            obj["lower_bound_curve"] = {
                "q": list(range(len(exact))),
                "exact": [float(v) for v in exact],
                "relaxed": [float(v) for v in relaxed],
            }
        return json.dumps(obj)


def _support_length(block, zero_tol):
    idx = np.flatnonzero(np.abs(block) > zero_tol)
    return int(idx[-1]) + 1 if idx.size else 0


def certify_run(instance, xs, T=1, zero_tol=1e-12):
    """Check a traced run of a first-order decentralized method.

    The trace ``xs`` holds the stacked x iterate after 0, 1, 2, ...
    iterations, each iteration consisting of one local computation round
    followed by T communication rounds. Two checks per iterate and node:

    (a) the nonzero-coordinate prefix of x_i never exceeds the tracker's
        worst-case span s_i;
    (b) ||x_i - x*||^2 >= rho^(2 s_i + 2) / (1 - rho^2) minus the
        truncation slack 2 rho^(2 d_trunc) / (1 - rho^2).
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    rho = instance.rho
    x_star = instance.solution()
    tail = 1.0 - rho**2
    slack = 2.0 * rho ** (2 * instance.d_trunc) / tail

    tracker = SpanTracker.fresh(instance.n)
    support_ok = []
    distance_ok = []
    first_violation = None

    for k, x in enumerate(xs):
        x = np.asarray(x, dtype=float)
        if x.shape != (instance.n, instance.d_trunc):
            raise ValueError(
                f"trace entry {k} has shape {x.shape}, expected "
                f"{(instance.n, instance.d_trunc)}"
            )
        if k > 0:
            tracker = tracker.after_compute()
            for _ in range(T):
                tracker = tracker.after_communicate()
        ok_a = True
        ok_b = True
        for i in range(instance.n):
            si = tracker.s[i]
            support = _support_length(x[i], zero_tol)
            if support > si:
                ok_a = False
                if first_violation is None:
                    first_violation = {
                        "check": "support",
                        "k": k,
                        "node": i,
                        "support": support,
                        "span": si,
                    }
            dist = float(np.sum((x[i] - x_star) ** 2))
            bound = rho ** (2 * si + 2) / tail - slack
            if dist < bound - 1e-12 * max(1.0, abs(bound)):
                ok_b = False
                if first_violation is None:
                    first_violation = {
                        "check": "distance",
                        "k": k,
                        "node": i,
                        "distance_sq": dist,
                        "bound": bound,
                    }
        support_ok.append(ok_a)
        distance_ok.append(ok_b)

    return CertReport(
        support_ok=tuple(support_ok),
        distance_ok=tuple(distance_ok),
        first_violation=first_violation,
        q_total=tracker.q,
    )


def lower_bound_curve(chi, L, mu, q_max):
    """Error floor after q communication rounds, exact and relaxed forms.

    The exact form is C rho^(24 q / chi) with C = rho^4 / (1 - rho^2); the
    relaxed form replaces rho^24 by the Bernoulli bound
    max(0, 1 - 24 sqrt(6 mu / L)), clamping at zero. Exact dominates relaxed
    pointwise.
    """
    if chi < 3:
        raise ValueError(f"need chi >= 3, got {chi}")
    rho = hard_rho(L, mu)
    c = rho**4 / (1.0 - rho**2)
    q = np.arange(q_max + 1)
    exact = c * rho ** (24.0 * q / chi)
    base = max(0.0, 1.0 - 24.0 * math.sqrt(6.0 * mu) / math.sqrt(L))
    relaxed = c * base ** (q / chi)
    return exact, relaxed
