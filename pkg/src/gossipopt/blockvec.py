"""Algebra on stacked node-block vectors.

A distributed vector is an (n, d) float array: one length-d block per node,
node-major and contiguous. The consensus subspace holds the vectors whose
blocks are all equal; its orthogonal complement holds the vectors whose
blocks sum to zero. Mixing a distributed vector with a gossip matrix costs
one communication round; ``multi_mix`` chains T rounds, which tightens the
contraction on the zero-block-sum subspace from (1 - 1/chi) to
(1 - 1/chi)**T.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_blocks",
    "mix",
    "project_consensus",
    "consensus_gap",
    "multi_mix",
    "to_json_dict",
    "from_json_dict",
    "to_bytes",
    "from_bytes",
]


def as_blocks(v):
    """Validate and return a 2-d float view of a distributed vector."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 2:
        raise ValueError(f"distributed vector must be 2-d (n, d), got shape {v.shape}")
    return v


def mix(w, v):
    """Apply one gossip round: output block i is sum_j W[i, j] * v_j.

    When the gossip matrix has zero column sums, the output blocks sum to
    zero regardless of the input.
    """
    w = np.asarray(w, dtype=float)
    v = as_blocks(v)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"gossip matrix must be square, got shape {w.shape}")
    if w.shape[0] != v.shape[0]:
        raise ValueError(
            f"node count mismatch: matrix is {w.shape[0]}x{w.shape[0]}, "
            f"vector has {v.shape[0]} blocks"
        )
    return w @ v


def project_consensus(v):
    """Orthogonal projection onto the zero-block-sum subspace.

    Subtracts the block mean from every block; idempotent.
    """
    v = as_blocks(v)
    return v - v.mean(axis=0, keepdims=True)


def consensus_gap(v):
    """Squared norm of the disagreement component; zero iff all blocks equal."""
    p = project_consensus(v)
    return float(np.vdot(p, p))


def multi_mix(mixing, k, T, v):
    """Apply the T-round compound gossip operator of iteration k.

    Computes ``v - prod_{q=kT}^{(k+1)T-1} (I - W(q)) v`` by T sequential
    single-round mixes, never materializing the compound matrix. Costs T
    communication rounds. For zero-block-sum v the result satisfies
    ``||out - v||^2 <= (1 - 1/chi)**T ||v||^2``.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    v = as_blocks(v)
    r = v
    for q in range(k * T, (k + 1) * T):
        r = r - mix(mixing.w(q), r)
    return v - r


def to_json_dict(v):
    """JSON-ready form: {n, d, blocks}."""
    v = as_blocks(v)
    return {"n": v.shape[0], "d": v.shape[1], "blocks": v.tolist()}


def from_json_dict(obj):
    v = np.array(obj["blocks"], dtype=float)
    if v.shape != (obj["n"], obj["d"]):
        raise ValueError(
            f"blocks shape {v.shape} disagrees with header ({obj['n']}, {obj['d']})"
        )
    return v


def to_bytes(v):
    """Little-endian float64 bytes, node-major."""
    return as_blocks(v).astype("<f8").tobytes(order="C")


def from_bytes(buf, n, d):
    v = np.frombuffer(buf, dtype="<f8")
    if v.size != n * d:
        raise ValueError(f"buffer holds {v.size} values, expected {n * d}")
    return v.reshape(n, d).astype(float)
