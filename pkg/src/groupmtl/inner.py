"""Restricted inner problem for a fixed simplex point.

For fixed gamma over the active set the problem is

    max over feasible beta of  sum(beta) - 0.5 * N(beta)

with N the nested norm (inner exponent pbar over kernels, outer qbar over
groups, capacities lambda_w derived from gamma).  It is solved by
alternating a closed-form kernel-weight update with SMO on the weighted
working kernel: N is the support function of a convex weight set, so for
optimal weights theta the plain SVM dual with kernel sum theta[w,j] K_w^j
touches the true objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import GramCache, effective_kernel, group_quadratics_matrix, task_pair_quadratics
from .lattice import GroupWeightScheme, LatticeOrder, TaskGroup
from .smo import SmoResult, smo_solve

_Q_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    """Solver hyperparameters and derived exponents."""

    C: float = 1.0
    mu: float = 1.0
    p: float = 1.5
    q: float = 1.5
    a: float = 1.5  # d-weight base
    eps: float = 1e-3  # duality-gap target
    orientation: str = "normal"
    complement_levels: bool = False
    level_overrides: dict[int, float] = field(default_factory=dict)
    gamma_floor: float = 1e-9
    smo_tol: float = 1e-4
    smo_max_updates: int = 2_000_000
    inner_tol: float = 1e-7
    inner_max_iter: int = 60
    mirror_tol: float = 1e-4
    mirror_patience: int = 10
    mirror_max_iter: int = 200
    max_active: int = 512
    max_rounds: int = 64
    top_k: int | None = None
    memory_budget_mb: float = 512.0
    seed: int = 0

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("C must be nonnegative")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if not (1.0 < self.p <= 2.0):
            raise ValueError("p must lie in (1, 2]")
        if not (1.0 < self.q <= 2.0):
            raise ValueError("q must lie in (1, 2]")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not (0.0 < self.gamma_floor <= 1e-6):
            raise ValueError("gamma floor must lie in (0, 1e-6]")
        if self.orientation not in ("normal", "inverted"):
            raise ValueError("orientation must be 'normal' or 'inverted'")

    @property
    def pbar(self) -> float:
        return self.p / (2.0 * (self.p - 1.0))

    @property
    def qbar(self) -> float:
        return self.q / (2.0 * (self.q - 1.0))

    @property
    def qhat(self) -> float:
        return self.qbar / (self.qbar - 1.0) if self.qbar > 1.0 else np.inf

    def scheme(self) -> GroupWeightScheme:
        return GroupWeightScheme(self.a, dict(self.level_overrides))

    def order(self, T: int) -> LatticeOrder:
        return LatticeOrder(
            self.orientation, T, self.scheme(),
            complement_levels=self.complement_levels,
        )

    def with_tolerances(self, **kw) -> "Hyperparams":
        return replace(self, **kw)


def compute_lambda(
    gamma: np.ndarray,
    groups: list[TaskGroup],
    order: LatticeOrder,
    q: float,
    gamma_floor: float = 1e-9,
) -> np.ndarray:
    """Group capacities lambda_w = (sum over ancestors of d^q gamma^(1-q))
    raised to 1/(1-q); zero as soon as any ancestor sits at the floor."""
    gamma = np.asarray(gamma, dtype=float)
    index = {w: i for i, w in enumerate(groups)}
    lam = np.zeros(len(groups))
    for wi, w in enumerate(groups):
        total = 0.0
        dead = False
        for v in order.ancestors(w):
            vi = index.get(v)
            if vi is None:
                continue  # restricted lattice: missing ancestors carry no term
            gv = gamma[vi]
            if gv <= gamma_floor:
                dead = True
                break
            dv = order.weight(v)
            if dv > 0.0:
                total += dv**q * gv ** (1.0 - q)
        if dead or total <= 0.0:
            lam[wi] = 0.0
        else:
            lam[wi] = total ** (1.0 / (1.0 - q))
    return lam


def nested_norm(Q: np.ndarray, lam: np.ndarray, pbar: float, qbar: float) -> float:
    """Certificate value: (sum_w lam_w (sum_j Q^pbar)^(qbar/pbar))^(1/qbar)."""
    Q = np.maximum(np.asarray(Q, dtype=float), 0.0)
    Mw = (Q**pbar).sum(axis=1) ** (1.0 / pbar)
    inner = float((lam * Mw**qbar).sum())
    return inner ** (1.0 / qbar) if inner > 0.0 else 0.0


def kernel_weight_update(
    Q: np.ndarray, lam: np.ndarray, pbar: float, qbar: float
) -> np.ndarray:
    """Closed-form weights theta with sum theta[w,j] Q[w,j] == N(beta).

    These are the Hoelder-equality weights of the nested norm's support
    function: the plain SVM dual with kernel sum theta K_w^j is a tangent
    upper bound of the true objective at the current beta.
    """
    Q = np.asarray(Q, dtype=float)
    lam = np.asarray(lam, dtype=float)
    W, n = Q.shape
    theta = np.zeros_like(Q)
    act = lam > 0.0
    if not act.any():
        return theta
    Qf = np.where(Q > _Q_FLOOR, Q, 0.0)
    Mw = (Qf**pbar).sum(axis=1) ** (1.0 / pbar)
    if not (Mw[act] > 0.0).any():
        # degenerate: nothing loads any kernel; spread over the lambda-max group
        wi = int(np.argmax(lam))
        pstar = pbar / (pbar - 1.0) if pbar > 1.0 else np.inf
        tau = n ** (-1.0 / pstar) if np.isfinite(pstar) else 1.0
        theta[wi, :] = lam[wi] ** (1.0 / qbar) * tau
        return theta
    lroot = np.where(act, lam, 0.0) ** (1.0 / qbar)
    inner = float((lam[act] * Mw[act] ** qbar).sum())
    that = inner ** (1.0 / qbar)
    for wi in range(W):
        if not act[wi] or Mw[wi] <= 0.0:
            continue
        tau = (Qf[wi] / Mw[wi]) ** (pbar - 1.0)
        tau[Qf[wi] == 0.0] = 0.0
        nu = (lroot[wi] * Mw[wi] / that) ** (qbar - 1.0)
        theta[wi] = lroot[wi] * nu * tau
    return theta


@dataclass
class InnerResult:
    beta: np.ndarray
    theta: np.ndarray
    Q: np.ndarray
    pair_quadratics: np.ndarray
    theta_hat: float
    objective: float
    smo: SmoResult | None
    converged: bool
    iterations: int
    degenerate: bool = False


def solve_inner(
    gamma: np.ndarray,
    groups: list[TaskGroup],
    cache: GramCache,
    hyper: Hyperparams,
    order: LatticeOrder,
    warm_beta: np.ndarray | None = None,
    warm_theta: np.ndarray | None = None,
    record_smo_objective: bool = False,
) -> InnerResult:
    """Alternate kernel-weight updates with SMO until the inner objective
    sum(beta) - 0.5 * Theta_hat stabilizes."""
    W = len(groups)
    n = cache.n_kernels
    lam = compute_lambda(gamma, groups, order, hyper.q, hyper.gamma_floor)
    pbar, qbar = hyper.pbar, hyper.qbar

    def finish(beta, theta, smo_res, converged, iters, degenerate=False):
        c = task_pair_quadratics(cache, beta)
        Q = group_quadratics_matrix(groups, c, hyper.mu)
        that = nested_norm(Q, lam, pbar, qbar)
        obj = float(beta.sum()) - 0.5 * that
        return InnerResult(beta, theta, Q, c, that, obj, smo_res,
                           converged, iters, degenerate)

    if hyper.C == 0.0 or not (lam > 0.0).any():
        beta = np.zeros(cache.M)
        return finish(beta, np.zeros((W, n)), None, True, 0,
                      degenerate=not (lam > 0.0).any())

    theta = None
    if warm_theta is not None:
        theta = np.array(warm_theta, dtype=float, copy=True)
        theta[lam <= 0.0] = 0.0  # dead groups must not leak into the kernel
    if theta is None or not np.any(theta > 0.0):
        theta = kernel_weight_update(np.ones((W, n)), lam, pbar, qbar)
    beta = warm_beta if warm_beta is not None else np.zeros(cache.M)

    best = None
    prev_obj = -np.inf
    converged = False
    smo_res = None
    iters = 0
    for iters in range(1, hyper.inner_max_iter + 1):
        K = effective_kernel(cache, groups, theta, hyper.mu)
        smo_res = smo_solve(
            K, cache.y, cache.task_slices, hyper.C, beta,
            tol=hyper.smo_tol, max_updates=hyper.smo_max_updates,
            record_objective=record_smo_objective,
        )
        beta = smo_res.beta
        c = task_pair_quadratics(cache, beta)
        Q = group_quadratics_matrix(groups, c, hyper.mu)
        that = nested_norm(Q, lam, pbar, qbar)
        obj = float(beta.sum()) - 0.5 * that
        if best is None or obj > best[0]:
            best = (obj, beta.copy(), theta.copy())
        if abs(obj - prev_obj) <= hyper.inner_tol * max(1.0, abs(obj)):
            converged = True
            break
        prev_obj = obj
        new = kernel_weight_update(Q, lam, pbar, qbar)
        # geometric damping kills the oscillation of the plain alternation;
        # exact zeros still propagate, and fresh groups enter undamped
        theta = np.where((theta > 0.0) & (new > 0.0),
                         np.sqrt(theta * new), new)

    _, beta, theta = best
    res = finish(beta, theta, smo_res, converged, iters)
    if record_smo_objective and smo_res is not None:
        res.smo = smo_res
    return res
