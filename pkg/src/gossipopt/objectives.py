"""Local objective functions and their gradient oracles.

Each of the n nodes owns one smooth, strongly convex function on R^d. Two
families are provided: l2-regularized logistic losses over per-node data,
and quadratics with per-node curvature matrices. Both expose full primal
gradients blockwise and stacked; quadratics additionally expose the
conjugate (dual) gradient in closed form. A centralized accelerated solver
produces high-accuracy minimizers of the averaged objective for use as test
references.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

__all__ = [
    "QuadraticObjectives",
    "LogisticObjectives",
    "gen_synthetic_logistic",
    "gen_random_quadratic",
    "reference_minimizer",
    "constants_csv",
]


class QuadraticObjectives:
    """Per-node quadratics f_i(x) = x'Q_i x / 2 + c_i'x + offset_i.

    Parameters
    ----------
    quad : ndarray, shape (n, d, d)
        Symmetric positive definite curvature per node.
    lin : ndarray, shape (n, d)
        Linear terms.
    offsets : ndarray, shape (n,), optional
        Additive constants (affect values, not gradients).
    L, mu : float, optional
        Smoothness and strong-convexity constants. Computed from the node
        spectra when omitted.
    """

    kind = "quadratic"

    def __init__(self, quad, lin, offsets=None, L=None, mu=None):
        quad = np.asarray(quad, dtype=float)
        lin = np.asarray(lin, dtype=float)
        if quad.ndim != 3 or quad.shape[1] != quad.shape[2]:
            raise ValueError(f"quad must have shape (n, d, d), got {quad.shape}")
        if lin.shape != quad.shape[:2]:
            raise ValueError(
                f"lin shape {lin.shape} disagrees with quad {quad.shape}"
            )
        self.quad = quad
        self.lin = lin
        self.n, self.d = lin.shape
        self.offsets = (
            np.zeros(self.n) if offsets is None else np.asarray(offsets, dtype=float)
        )
        if L is None or mu is None:
            eigs = np.linalg.eigvalsh(quad)
            L = float(eigs.max()) if L is None else L
            mu = float(eigs.min()) if mu is None else mu
        if not L >= mu > 0:
            raise ValueError(f"need L >= mu > 0, got L={L}, mu={mu}")
        self.L = float(L)
        self.mu = float(mu)
        self._mean_quad = quad.mean(axis=0)
        self._mean_lin = lin.mean(axis=0)
        self._cho = None

    def value_block(self, i, x):
        return float(0.5 * x @ (self.quad[i] @ x) + self.lin[i] @ x + self.offsets[i])

    def grad_block(self, i, x):
        return self.quad[i] @ x + self.lin[i]

    def value(self, x):
        qx = np.einsum("nij,nj->ni", self.quad, x)
        return float(
            0.5 * np.vdot(x, qx) + np.vdot(self.lin, x) + self.offsets.sum()
        )

    def grad(self, x):
        return np.einsum("nij,nj->ni", self.quad, x) + self.lin

    def mean_grad(self, x):
        """Gradient of (1/n) sum_i f_i at a single point x in R^d."""
        return self._mean_quad @ x + self._mean_lin

    def dual_grad_block(self, i, y):
        """Gradient of the conjugate of f_i: the x solving Q_i x + c_i = y."""
        if self._cho is None:
            self._cho = [cho_factor(self.quad[j]) for j in range(self.n)]
        return cho_solve(self._cho[i], y - self.lin[i])


class LogisticObjectives:
    """Per-node l2-regularized logistic losses over (features, labels).

    f_i(x) = (1/m) sum_j log(1 + exp(-b_ij a_ij'x)) + (reg/2) ||x||^2
    with labels in {-1, +1}. Smoothness uses the standard curvature bound
    lambda_max(A_i'A_i) / (4m) + reg; strong convexity equals reg.
    """

    kind = "logistic"

    def __init__(self, features, labels, reg, L=None):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.ndim != 3:
            raise ValueError(
                f"features must have shape (n, m, d), got {features.shape}"
            )
        if labels.shape != features.shape[:2]:
            raise ValueError(
                f"labels shape {labels.shape} disagrees with features"
            )
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError("labels must be -1 or +1")
        if reg <= 0:
            raise ValueError(f"reg must be positive, got {reg}")
        self.features = features
        self.labels = labels
        self.reg = float(reg)
        self.n, self.m, self.d = features.shape
        if L is None:
            top = max(
                float(np.linalg.eigvalsh(a.T @ a)[-1]) for a in features
            )
            L = top / (4.0 * self.m) + self.reg
        self.L = float(L)
        self.mu = self.reg

    def value_block(self, i, x):
        margins = self.features[i] @ x
        losses = np.logaddexp(0.0, -self.labels[i] * margins)
        return float(losses.mean() + 0.5 * self.reg * (x @ x))

    def grad_block(self, i, x):
        margins = self.features[i] @ x
        s = expit(-self.labels[i] * margins)
        data_grad = -(self.features[i].T @ (self.labels[i] * s)) / self.m
        return data_grad + self.reg * x

    def value(self, x):
        margins = np.einsum("nmd,nd->nm", self.features, x)
        losses = np.logaddexp(0.0, -self.labels * margins)
        return float(losses.mean(axis=1).sum() + 0.5 * self.reg * np.vdot(x, x))

    def grad(self, x):
        margins = np.einsum("nmd,nd->nm", self.features, x)
        s = expit(-self.labels * margins)
        data_grad = -np.einsum("nmd,nm->nd", self.features, self.labels * s) / self.m
        return data_grad + self.reg * x

    def mean_grad(self, x):
        margins = self.features @ x
        s = expit(-self.labels * margins)
        data_grad = -np.einsum("nmd,nm->d", self.features, self.labels * s) / (
            self.m * self.n
        )
        return data_grad + self.reg * x

    def dual_grad_block(self, i, y):
        raise NotImplementedError(
            "logistic losses have no closed-form conjugate gradient"
        )

    def to_json(self):
        return json.dumps(
            {
                "kind": self.kind,
                "features": self.features.tolist(),
                "labels": self.labels.tolist(),
                "reg": self.reg,
                "L": self.L,
                "mu": self.mu,
            }
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(obj["features"], obj["labels"], obj["reg"], L=obj["L"])


def gen_synthetic_logistic(n, m, d, seed, kappa):
    """Synthetic classification data with a prescribed condition number.

    Features are standard normal; labels follow a planted unit direction
    with 5% independent flips. The regularizer is set so that the stored
    condition number (L_data + reg) / reg equals ``kappa`` exactly.
    """
    if min(n, m, d) < 1:
        raise ValueError("n, m, d must all be >= 1")
    if kappa <= 1:
        raise ValueError(f"kappa must exceed 1, got {kappa}")
    rng = np.random.default_rng(seed)
    planted = rng.standard_normal(d)
    planted /= np.linalg.norm(planted)
    features = rng.standard_normal((n, m, d))
    clean = np.where(features @ planted >= 0.0, 1.0, -1.0)
    flips = rng.random((n, m)) < 0.05
    labels = np.where(flips, -clean, clean)
    l_data = max(float(np.linalg.eigvalsh(a.T @ a)[-1]) for a in features) / (4.0 * m)
    reg = l_data / (kappa - 1.0)
    return LogisticObjectives(features, labels, reg, L=l_data + reg)


def gen_random_quadratic(n, d, L, mu, seed):
    """Random quadratics whose node spectra exactly span [mu, L]."""
    if not L > mu > 0:
        raise ValueError(f"need L > mu > 0, got L={L}, mu={mu}")
    if d < 2:
        raise ValueError(f"need d >= 2 to pin both spectrum endpoints, got {d}")
    rng = np.random.default_rng(seed)
    quad = np.empty((n, d, d))
    for i in range(n):
        basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = rng.uniform(mu, L, size=d)
        eigs[0], eigs[-1] = mu, L
        quad[i] = (basis * eigs) @ basis.T
        quad[i] = 0.5 * (quad[i] + quad[i].T)
    lin = rng.standard_normal((n, d))
    return QuadraticObjectives(quad, lin, L=L, mu=mu)


def constants_csv(objectives):
    """One-line CSV summary of the conditioning constants."""
    kappa = objectives.L / objectives.mu
    return (
        "L,mu,kappa\n"
        f"{objectives.L!r},{objectives.mu!r},{kappa!r}\n"
    )


def reference_minimizer(objectives, tol=1e-10, max_iter=10_000_000):
    """High-accuracy minimizer of the averaged objective.

    Runs the constant-momentum accelerated gradient method for strongly
    convex problems on (1/n) sum_i f_i, using the stored constants, until
    the gradient norm drops below ``tol``. Deterministic (starts from zero).

    Raises
    ------
    RuntimeError
        If the iteration cap is exceeded.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    L, mu = objectives.L, objectives.mu
    momentum = (np.sqrt(L) - np.sqrt(mu)) / (np.sqrt(L) + np.sqrt(mu))
    x = np.zeros(objectives.d)
    lookahead = x.copy()
    for _ in range(max_iter):
        g = objectives.mean_grad(lookahead)
        if np.linalg.norm(g) <= tol:
            return lookahead
        x_next = lookahead - g / L
        lookahead = x_next + momentum * (x_next - x)
        x = x_next
    raise RuntimeError(f"reference solve did not reach tol={tol} in {max_iter} steps")
