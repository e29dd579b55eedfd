"""Accelerated decentralized solver over time-varying gossip networks.

The method minimizes sum_i f_i(x) with x constrained to the consensus
subspace, through a saddle-point reformulation with multipliers y (for the
coupling x = w) and z (restricted to the zero-block-sum subspace). Each
iteration takes one full gradient, solves the two implicitly coupled primal
and dual updates in closed form, and performs one compound communication
round: the two payloads that must travel over the network are mixed by the
same per-round gossip matrices, with an error-feedback buffer m absorbing
what a single imperfect averaging round leaves behind.

With the closed-form parameter schedule of :func:`derive_params`, the
potential tracked by :func:`lyapunov` contracts by at least
``1 - sqrt(mu) / (32 chi sqrt(L))`` per iteration, which yields
``O(chi sqrt(L/mu) log(1/eps))`` iterations to reach an eps-accurate
solution. Running T consensus sub-rounds per iteration (T about
``chi ln 2``) makes the effective network condition number a constant, at T
communication rounds per iteration.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import blockvec
from .objectives import reference_minimizer

__all__ = [
    "Params",
    "State",
    "SaddleReference",
    "LyapunovReport",
    "RunRecord",
    "RunResult",
    "DivergenceError",
    "derive_params",
    "effective_chi",
    "init_state",
    "make_reference",
    "saddle_state",
    "step",
    "lyapunov",
    "run",
    "save_checkpoint",
    "load_checkpoint",
]

DIVERGENCE_LIMIT = 1e100


class DivergenceError(RuntimeError):
    """Raised when an iterate leaves the finite range; carries the iteration."""

    def __init__(self, k, magnitude):
        super().__init__(
            f"divergence at iteration {k}: max |coordinate| = {magnitude:.3e}"
        )
        self.k = k
        self.magnitude = magnitude


@dataclass(frozen=True)
class Params:
    """Step sizes and interpolation weights of the solver.

    All fields are determined in closed form by (L, mu, chi); see
    :func:`derive_params`. Invariants: nu < mu, and tau1, sigma1 in (0, 1).
    """

    tau1: float
    tau2: float
    eta: float
    alpha: float
    nu: float
    beta: float
    sigma1: float
    sigma2: float
    theta: float
    gamma: float
    delta: float
    zeta: float
    chi: float

    def override(self, **values):
        """Replace selected fields; every override must stay positive."""
        for name, value in values.items():
            if not value > 0:
                raise ValueError(f"override {name}={value} must be positive")
        return replace(self, **values)


def derive_params(L, mu, chi):
    """Theoretical parameter schedule for constants (L, mu, chi).

    Parameters
    ----------
    L, mu : float
        Smoothness and strong convexity of the local objectives, L > mu > 0.
    chi : float
        Condition number of the (possibly compound) mixing operator, >= 1.
    """
    if not L > mu > 0:
        raise ValueError(f"need L > mu > 0, got L={L}, mu={mu}")
    if chi < 1:
        raise ValueError(f"need chi >= 1, got {chi}")
    tau2 = math.sqrt(mu / L)
    tau1 = 1.0 / (1.0 / tau2 + 0.5)
    eta = 1.0 / (L * tau2)
    alpha = mu / 2.0
    nu = mu / 2.0
    beta = 1.0 / (2.0 * L)
    sigma2 = math.sqrt(mu) / (16.0 * chi * math.sqrt(L))
    sigma1 = 1.0 / (1.0 / sigma2 + 0.5)
    theta = nu / (4.0 * sigma2)
    gamma = nu / (14.0 * sigma2 * chi**2)
    delta = 1.0 / (17.0 * L)
    zeta = 0.5
    return Params(
        tau1=tau1,
        tau2=tau2,
        eta=eta,
        alpha=alpha,
        nu=nu,
        beta=beta,
        sigma1=sigma1,
        sigma2=sigma2,
        theta=theta,
        gamma=gamma,
        delta=delta,
        zeta=zeta,
        chi=chi,
    )


def effective_chi(chi, T):
    """Condition number of the compound T-round mixing operator.

    One round contracts zero-block-sum vectors by (1 - 1/chi); T chained
    rounds contract by (1 - 1/chi)**T. Whenever that reaches 1/2 (the
    T = ceil(chi ln 2) choice), the compound operator behaves like a network
    with constant condition number 2.
    """
    if chi < 1:
        raise ValueError(f"need chi >= 1, got {chi}")
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    if T == 1:
        return chi
    contraction = (1.0 - 1.0 / chi) ** T
    if contraction <= 0.5:
        return 2.0
    return 1.0 / (1.0 - contraction)


def consensus_rounds(chi):
    """Number of sub-rounds T = ceil(chi ln 2) that halves disagreement."""
    return max(1, math.ceil(chi * math.log(2.0)))


@dataclass
class State:
    """Full solver state after k iterations."""

    k: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    m: np.ndarray
    x_f: np.ndarray
    y_f: np.ndarray
    z_f: np.ndarray


def init_state(n, d, x0=None, y0=None, z0=None, m0=None):
    """Initial state; defaults to all zeros, which places z in the
    zero-block-sum subspace as required."""

    def _field(v):
        if v is None:
            return np.zeros((n, d))
        v = blockvec.as_blocks(v)
        if v.shape != (n, d):
            raise ValueError(f"expected shape {(n, d)}, got {v.shape}")
        return v.copy()

    x = _field(x0)
    y = _field(y0)
    z = _field(z0)
    m = _field(m0)
    block_sum = float(np.linalg.norm(z.sum(axis=0)))
    if block_sum > 1e-8 * (1.0 + float(np.linalg.norm(z))):
        raise ValueError(
            f"z0 must lie in the zero-block-sum subspace; block sum norm "
            f"{block_sum:.3e}"
        )
    return State(k=0, x=x, y=y, z=z, m=m, x_f=x.copy(), y_f=y.copy(), z_f=z.copy())


@dataclass(frozen=True)
class SaddleReference:
    """Saddle point data derived from a minimizer of the averaged objective.

    x is the minimizer replicated across blocks; y holds the per-node
    gradients shifted by -nu x; z is the zero-block-sum multiplier with
    y + z lying in the consensus subspace.
    """

    x_bar: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    nu: float
    f_star: float
    grad_star: np.ndarray
    yz: np.ndarray


def make_reference(objectives, nu, x_bar=None, tol=1e-12):
    """Build the saddle-point reference from (or computing) a minimizer.

    The multiplier z is the projection of ``-nu x - y`` onto the
    zero-block-sum subspace; the block mean it removes equals the averaged
    gradient at ``x_bar`` and must already be negligible, which is checked.
    """
    if x_bar is None:
        x_bar = reference_minimizer(objectives, tol=tol)
    x_bar = np.asarray(x_bar, dtype=float)
    x = np.tile(x_bar, (objectives.n, 1))
    grad_star = objectives.grad(x)
    y = grad_star - nu * x
    raw = -nu * x - y
    residual = float(np.linalg.norm(raw.mean(axis=0)))
    scale = 1.0 + float(np.linalg.norm(x_bar))
    if residual > 1e-8 * scale:
        raise ValueError(
            f"reference point is not accurate enough: averaged gradient norm "
            f"{residual:.3e} exceeds 1e-8 * {scale:.3e}"
        )
    z = blockvec.project_consensus(raw)
    return SaddleReference(
        x_bar=x_bar,
        x=x,
        y=y,
        z=z,
        nu=float(nu),
        f_star=objectives.value(x),
        grad_star=grad_star,
        yz=y + z,
    )


def saddle_state(reference):
    """State sitting exactly at the saddle point, with zero momentum buffer."""
    n, d = reference.x.shape
    return init_state(n, d, x0=reference.x, y0=reference.y, z0=reference.z)


def _mix_rounds(mixing, k, T, payloads):
    """Mix several payloads through the same T rounds of iteration k.

    The payloads are concatenated along the block dimension so each
    simulated round is a single exchange carrying all of them.
    """
    widths = [p.shape[1] for p in payloads]
    stacked = np.concatenate(payloads, axis=1)
    mixed = blockvec.multi_mix(mixing, k, T, stacked)
    out = []
    start = 0
    for width in widths:
        out.append(mixed[:, start : start + width])
        start += width
    return out


def step(state, params, objectives, mixing, T=1):
    """Advance the solver by one iteration.

    Exactly one full-gradient evaluation and T communication rounds (each
    carrying both network payloads). The mutually implicit x/y updates are
    eliminated in closed form: with g the shifted gradient at the
    extrapolated point, substituting the x-update into the y-update leaves a
    scalar-coefficient linear equation for y, solvable blockwise.
    """
    p = params
    x, y, z, m = state.x, state.y, state.z, state.m

    x_g = p.tau1 * x + (1.0 - p.tau1) * state.x_f
    y_g = p.sigma1 * y + (1.0 - p.sigma1) * state.y_f
    z_g = p.sigma1 * z + (1.0 - p.sigma1) * state.z_f

    g = objectives.grad(x_g) - p.nu * x_g

    b = p.eta / (1.0 + p.eta * p.alpha)
    a = (x + p.eta * p.alpha * x_g - p.eta * g) / (1.0 + p.eta * p.alpha)
    denom = 1.0 + p.theta * p.beta + p.theta * b
    y_new = (
        y + p.theta * p.beta * g - p.theta * ((y_g + z_g) / p.nu) - p.theta * a
    ) / denom
    x_new = a + b * y_new

    x_f_new = x_g + p.tau2 * (x_new - x)
    y_f_new = y_g + p.sigma2 * (y_new - y)

    s = y_g + z_g
    payload = (p.gamma / p.nu) * s + m
    mixed_payload, mixed_s = _mix_rounds(mixing, state.k, T, [payload, s])

    z_new = z + p.gamma * p.delta * (z_g - z) - mixed_payload
    m_new = payload - mixed_payload
    z_f_new = z_g - p.zeta * mixed_s

    return State(
        k=state.k + 1,
        x=x_new,
        y=y_new,
        z=z_new,
        m=m_new,
        x_f=x_f_new,
        y_f=y_f_new,
        z_f=z_f_new,
    )


@dataclass(frozen=True)
class LyapunovReport:
    """Decomposition of the contracting potential at one iterate.

    Every component is nonnegative: the Bregman term because the objective
    minus (nu/2) ||.||^2 stays convex (nu < mu), the buffer term because it
    is a projection seminorm.
    """

    psi_x: float
    psi_yz: float
    components: dict

    @property
    def total(self):
        return self.psi_x + self.psi_yz


def _sqnorm(v):
    return float(np.vdot(v, v))


def lyapunov(state, params, objectives, reference):
    """Evaluate the potential certifying per-iteration geometric decay."""
    p = params
    ref = reference

    dx = state.x - ref.x
    d_f = (
        objectives.value(state.x_f)
        - ref.f_star
        - float(np.vdot(ref.grad_star, state.x_f - ref.x))
    )
    x_dist = (1.0 / p.eta + p.alpha) * _sqnorm(dx)
    x_bregman = (2.0 / p.tau2) * (d_f - 0.5 * p.nu * _sqnorm(state.x_f - ref.x))
    psi_x = x_dist + x_bregman

    m_proj_vec = blockvec.project_consensus(state.m)
    z_hat = state.z - m_proj_vec
    y_dist = (1.0 / p.theta + 0.5 * p.beta) * _sqnorm(state.y - ref.y)
    yf_dist = (0.5 * p.beta / p.sigma2) * _sqnorm(state.y_f - ref.y)
    zhat_dist = (1.0 / p.gamma) * _sqnorm(z_hat - ref.z)
    m_proj = (4.0 / (3.0 * p.gamma)) * _sqnorm(m_proj_vec)
    coupled = (1.0 / (p.nu * p.sigma2)) * _sqnorm(state.y_f + state.z_f - ref.yz)
    psi_yz = y_dist + yf_dist + zhat_dist + m_proj + coupled

    return LyapunovReport(
        psi_x=psi_x,
        psi_yz=psi_yz,
        components={
            "x_dist": x_dist,
            "x_bregman": x_bregman,
            "y_dist": y_dist,
            "yf_dist": yf_dist,
            "zhat_dist": zhat_dist,
            "m_proj": m_proj,
            "coupled": coupled,
        },
    )


@dataclass(frozen=True)
class RunRecord:
    """Per-iteration telemetry row."""

    k: int
    comm_rounds: int
    grad_calls: int
    err_sq_stacked: float
    err_sq_mean_block: float
    psi_x: float
    psi_yz: float


@dataclass
class RunResult:
    records: list
    state: State
    params: Params
    reference: SaddleReference
    trace: list | None = None


def _guard(state):
    worst = 0.0
    for field in (state.x, state.y, state.z, state.m):
        peak = float(np.abs(field).max(initial=0.0))
        if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
            raise DivergenceError(state.k, peak)
        worst = max(worst, peak)
    return worst


def _record(state, params, objectives, reference, T, track_lyapunov):
    dx = state.x - reference.x
    err_stacked = _sqnorm(dx)
    mean_block = state.x.mean(axis=0)
    err_mean = _sqnorm(mean_block - reference.x_bar)
    if track_lyapunov:
        report = lyapunov(state, params, objectives, reference)
        psi_x, psi_yz = report.psi_x, report.psi_yz
    else:
        psi_x = psi_yz = float("nan")
    return RunRecord(
        k=state.k,
        comm_rounds=state.k * T,
        grad_calls=state.k,
        err_sq_stacked=err_stacked,
        err_sq_mean_block=err_mean,
        psi_x=psi_x,
        psi_yz=psi_yz,
    )


def run(
    objectives,
    mixing,
    T=1,
    budget=None,
    target_eps=None,
    params=None,
    reference=None,
    stop_metric="mean_block",
    track_lyapunov=True,
    collect_trace=False,
    ref_tol=1e-12,
):
    """Run the solver until an error target or an iteration budget.

    Parameters
    ----------
    objectives : QuadraticObjectives or LogisticObjectives
    mixing : topology.MixingSchedule
    T : int
        Consensus sub-rounds per iteration (1 = one gossip round).
    budget : int, optional
        Maximum number of iterations.
    target_eps : float, optional
        Stop once the squared error of the chosen metric falls below this.
    params : Params, optional
        Defaults to the theoretical schedule at the mixing operator's
        effective condition number.
    reference : SaddleReference, optional
        Computed from the averaged objective when omitted.
    stop_metric : {"mean_block", "stacked"}
        Error used for the target test: distance of the block average to the
        minimizer, or of the full stacked iterate to the consensus point.
    track_lyapunov : bool
        Record the potential decomposition at every iterate.
    collect_trace : bool
        Keep a copy of every x iterate (needed by the run certifier).

    Returns
    -------
    RunResult
        Records (one per visited iterate, including k = 0), final state,
        parameters, reference, and optionally the x trace.
    """
    if budget is None and target_eps is None:
        raise ValueError("need a budget, a target_eps, or both")
    if budget is not None and budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if stop_metric not in ("mean_block", "stacked"):
        raise ValueError(f"unknown stop metric {stop_metric!r}")
    if params is None:
        params = derive_params(
            objectives.L, objectives.mu, effective_chi(mixing.chi, T)
        )
    if reference is None:
        reference = make_reference(objectives, params.nu, tol=ref_tol)

    state = init_state(objectives.n, objectives.d)
    records = []
    trace = [state.x.copy()] if collect_trace else None

    while True:
        rec = _record(state, params, objectives, reference, T, track_lyapunov)
        records.append(rec)
        err = (
            rec.err_sq_mean_block
            if stop_metric == "mean_block"
            else rec.err_sq_stacked
        )
        if target_eps is not None and err <= target_eps:
            break
        if budget is not None and state.k >= budget:
            break
        state = step(state, params, objectives, mixing, T=T)
        _guard(state)
        if collect_trace:
            trace.append(state.x.copy())

    return RunResult(
        records=records, state=state, params=params, reference=reference, trace=trace
    )


_STATE_FIELDS = ("x", "y", "z", "m", "x_f", "y_f", "z_f")


def save_checkpoint(base_path, state, params, chi_eff):
    """Write a state checkpoint: JSON header plus raw block-vector bytes."""
    n, d = state.x.shape
    header = {
        "k": state.k,
        "n": n,
        "d": d,
        "chi_eff": chi_eff,
        "params": asdict(params),
        "fields": list(_STATE_FIELDS),
    }
    with open(f"{base_path}.json", "w") as fh:
        json.dump(header, fh)
    with open(f"{base_path}.bin", "wb") as fh:
        for name in _STATE_FIELDS:
            fh.write(blockvec.to_bytes(getattr(state, name)))


def load_checkpoint(base_path):
    """Read back a checkpoint written by :func:`save_checkpoint`."""
    with open(f"{base_path}.json") as fh:
        header = json.load(fh)
    n, d = header["n"], header["d"]
    span = n * d * 8
    with open(f"{base_path}.bin", "rb") as fh:
        buf = fh.read()
    fields = {}
    for pos, name in enumerate(header["fields"]):
        fields[name] = blockvec.from_bytes(buf[pos * span : (pos + 1) * span], n, d)
    state = State(k=header["k"], **fields)
    params = Params(**header["params"])
    return state, params, header["chi_eff"]
