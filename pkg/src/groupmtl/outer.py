"""Restricted master problem: minimize H(gamma) over the simplex.

H(gamma) is the optimal inner value; its gradient at the inner optimum
follows from Danskin's theorem and is always componentwise nonpositive.
The simplex geometry calls for entropic mirror descent (multiplicative
updates), with best-iterate tracking and a decaying step size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .inner import Hyperparams, InnerResult, compute_lambda, solve_inner
from .kernels import GramCache
from .lattice import LatticeOrder, TaskGroup


@dataclass
class DualState:
    groups: list[TaskGroup]
    gamma: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    theta_hat: float
    objective: float  # H(gamma) at the returned point
    inner: InnerResult
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)

    def deselected(self, floor: float) -> list[TaskGroup]:
        cutoff = 10.0 * floor
        return [w for w, g in zip(self.groups, self.gamma) if g <= cutoff]


def grad_H(
    gamma: np.ndarray,
    groups: list[TaskGroup],
    inner: InnerResult,
    hyper: Hyperparams,
    order: LatticeOrder,
) -> np.ndarray:
    """Danskin gradient of H at ``gamma`` given the solved inner problem."""
    q, pbar, qbar = hyper.q, hyper.pbar, hyper.qbar
    gamma = np.maximum(np.asarray(gamma, dtype=float), hyper.gamma_floor)
    lam = compute_lambda(gamma, groups, order, q, hyper.gamma_floor)
    Q = np.maximum(inner.Q, 0.0)
    Mt = (Q**pbar).sum(axis=1) ** (qbar / pbar)  # (sum_j Q^pbar)^(qbar/pbar)
    raw = float((lam * Mt).sum())
    g = np.zeros(len(groups))
    if raw <= 0.0:
        return g
    outer_factor = raw ** (1.0 / qbar - 1.0)
    for i, v in enumerate(groups):
        dv = order.weight(v)
        if dv == 0.0:
            continue
        part = 0.0
        for wi, w in enumerate(groups):
            if order.is_ancestor(v, w) and lam[wi] > 0.0:
                part += lam[wi] ** q * Mt[wi]
        if part == 0.0:
            continue
        g[i] = -(dv**q * gamma[i] ** (-q) / (2.0 * qbar)) * outer_factor * part
    return g


def mirror_step(
    gamma: np.ndarray, g: np.ndarray, eta: float, floor: float = 1e-9
) -> np.ndarray:
    """Entropic update: multiply by exp(-eta * g), renormalize, floor."""
    if eta <= 0.0:
        raise ValueError("step size must be positive")
    shifted = g - g.max()  # overflow guard; entropic update is shift invariant
    new = gamma * np.exp(-eta * shifted)
    new /= new.sum()
    new = np.maximum(new, floor)
    return new / new.sum()


def solve_outer(
    groups: list[TaskGroup],
    cache: GramCache,
    hyper: Hyperparams,
    order: LatticeOrder,
    warm_beta: np.ndarray | None = None,
    warm_theta: np.ndarray | None = None,
    gamma0: np.ndarray | None = None,
) -> DualState:
    """Mirror descent on H restricted to ``groups`` (must be hull-closed for
    a genuine fit; single arbitrary nodes are allowed for baselines)."""
    groups = sorted(groups)
    W = len(groups)
    if W < 1:
        raise ValueError("active set must be nonempty")
    if gamma0 is not None:
        gamma = np.asarray(gamma0, dtype=float)
        gamma = np.maximum(gamma / gamma.sum(), hyper.gamma_floor)
        gamma /= gamma.sum()
    else:
        gamma = np.full(W, 1.0 / W)

    beta = warm_beta
    theta = warm_theta
    best: tuple[float, np.ndarray, InnerResult] | None = None
    history: list[float] = []
    stall = 0
    iters = 0
    converged = False
    for k in range(1, hyper.mirror_max_iter + 1):
        iters = k
        inner = solve_inner(
            gamma, groups, cache, hyper, order,
            warm_beta=beta, warm_theta=theta,
        )
        beta, theta = inner.beta, inner.theta
        H = inner.objective
        improved = best is None or H < best[0] - hyper.mirror_tol * max(1.0, abs(best[0]))
        if best is None or H < best[0]:
            best = (H, gamma.copy(), inner)
        history.append(best[0])
        stall = 0 if improved else stall + 1
        if W == 1:
            converged = True
            break
        if stall >= hyper.mirror_patience:
            converged = True
            break
        g = grad_H(gamma, groups, inner, hyper, order)
        # normalized step: bounds the multiplicative-update exponent even
        # when near-floor coordinates produce gamma^(-q)-sized gradients
        gn = float(np.abs(g).max())
        if gn > 0.0:
            gamma = mirror_step(gamma, g / gn, 1.0 / np.sqrt(k),
                                hyper.gamma_floor)

    H_best, gamma_best, inner_best = best
    lam = compute_lambda(gamma_best, groups, order, hyper.q, hyper.gamma_floor)
    return DualState(
        groups=groups,
        gamma=gamma_best,
        beta=inner_best.beta,
        lam=lam,
        theta=inner_best.theta,
        theta_hat=inner_best.theta_hat,
        objective=H_best,
        inner=inner_best,
        converged=converged and inner_best.converged,
        iterations=iters,
        history=history,
    )
